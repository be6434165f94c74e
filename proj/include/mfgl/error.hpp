#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mfgl {

/// Broad failure classes. The CLI maps these onto its exit codes.
enum class ErrorCategory { Io, Validation, Numerical };

enum class ErrorCode {
  // I/O
  FileOpen,
  FileFormat,
  // validation
  InvalidArgument,
  DimensionMismatch,
  MissingHighFidelity,
  RowCountMismatch,
  InsufficientSpectrum,
  DenseLimitExceeded,
  NonFiniteInput,
  InvalidSchedule,
  ZeroReferenceColumn,
  ZeroReferenceSet,
  // numerical
  ZeroVariance,
  ZeroNorm,
  DuplicatePointScale,
  ZeroDegree,
  ConvergenceFailure,
  SingularSystem,
  AllZeroSpectrum,
  NoBracket,
  NegativeApproxDegree,
  SingularLandmarkBlock,
  IterativeDivergence,
  SingularCapacitance,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::FileOpen: return "FileOpen";
    case ErrorCode::FileFormat: return "FileFormat";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingHighFidelity: return "MissingHighFidelity";
    case ErrorCode::RowCountMismatch: return "RowCountMismatch";
    case ErrorCode::InsufficientSpectrum: return "InsufficientSpectrum";
    case ErrorCode::DenseLimitExceeded: return "DenseLimitExceeded";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::InvalidSchedule: return "InvalidSchedule";
    case ErrorCode::ZeroReferenceColumn: return "ZeroReferenceColumn";
    case ErrorCode::ZeroReferenceSet: return "ZeroReferenceSet";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::DuplicatePointScale: return "DuplicatePointScale";
    case ErrorCode::ZeroDegree: return "ZeroDegree";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::AllZeroSpectrum: return "AllZeroSpectrum";
    case ErrorCode::NoBracket: return "NoBracket";
    case ErrorCode::NegativeApproxDegree: return "NegativeApproxDegree";
    case ErrorCode::SingularLandmarkBlock: return "SingularLandmarkBlock";
    case ErrorCode::IterativeDivergence: return "IterativeDivergence";
    case ErrorCode::SingularCapacitance: return "SingularCapacitance";
  }
  return "Unknown";
}

constexpr ErrorCategory category_of(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::FileOpen:
    case ErrorCode::FileFormat:
      return ErrorCategory::Io;
    case ErrorCode::InvalidArgument:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::MissingHighFidelity:
    case ErrorCode::RowCountMismatch:
    case ErrorCode::InsufficientSpectrum:
    case ErrorCode::DenseLimitExceeded:
    case ErrorCode::NonFiniteInput:
    case ErrorCode::InvalidSchedule:
    case ErrorCode::ZeroReferenceColumn:
    case ErrorCode::ZeroReferenceSet:
      return ErrorCategory::Validation;
    default:
      return ErrorCategory::Numerical;
  }
}

/// Single exception type for the library. `index` carries the offending
/// row/component/eigenpair when one applies, `value` a residual or similar.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::int64_t> index = std::nullopt,
        std::optional<double> value = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        index_(index),
        value_(value) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }
  std::optional<std::int64_t> index() const noexcept { return index_; }
  std::optional<double> value() const noexcept { return value_; }

 private:
  ErrorCode code_;
  std::optional<std::int64_t> index_;
  std::optional<double> value_;
};

namespace detail {

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace detail

}  // namespace mfgl
