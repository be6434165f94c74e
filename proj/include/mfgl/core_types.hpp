#pragma once

#include "mfgl/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mfgl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace detail {

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace detail

/// Low-fidelity points (one per row) plus optional high-fidelity rows aligned
/// with the first M low-fidelity rows.
class Dataset {
 public:
  explicit Dataset(Matrix lf, std::optional<Matrix> hf = std::nullopt,
                   std::optional<std::vector<std::string>> param_ids = std::nullopt)
      : lf_(std::move(lf)), hf_(std::move(hf)), param_ids_(std::move(param_ids)) {
    detail::require(lf_.rows() >= 2, ErrorCode::InvalidArgument,
                    "dataset needs at least two low-fidelity points");
    detail::require(lf_.cols() >= 1, ErrorCode::InvalidArgument,
                    "dataset needs at least one component");
    detail::require(detail::all_finite(lf_), ErrorCode::NonFiniteInput,
                    "low-fidelity data contains NaN or Inf");
    if (hf_) {
      detail::require(hf_->cols() == lf_.cols(), ErrorCode::DimensionMismatch,
                      "high-fidelity data has " + std::to_string(hf_->cols()) +
                          " columns, low-fidelity has " + std::to_string(lf_.cols()));
      detail::require(hf_->rows() <= lf_.rows(), ErrorCode::RowCountMismatch,
                      "more high-fidelity rows than low-fidelity rows");
      detail::require(detail::all_finite(*hf_), ErrorCode::NonFiniteInput,
                      "high-fidelity data contains NaN or Inf");
    }
    if (param_ids_) {
      detail::require(static_cast<Index>(param_ids_->size()) == lf_.rows(),
                      ErrorCode::RowCountMismatch,
                      "parameter id count does not match low-fidelity rows");
    }
  }

  const Matrix& lf() const noexcept { return lf_; }
  const std::optional<Matrix>& hf() const noexcept { return hf_; }
  const std::optional<std::vector<std::string>>& param_ids() const noexcept {
    return param_ids_;
  }

  Index n() const noexcept { return lf_.rows(); }
  Index m() const noexcept { return hf_ ? hf_->rows() : 0; }
  Index dim() const noexcept { return lf_.cols(); }

  /// Copy with high-fidelity rows attached to the first hf.rows() points.
  Dataset with_high_fidelity(Matrix hf) const { return Dataset(lf_, std::move(hf), param_ids_); }

  Dataset without_high_fidelity() const { return Dataset(lf_, std::nullopt, param_ids_); }

 private:
  Matrix lf_;
  std::optional<Matrix> hf_;
  std::optional<std::vector<std::string>> param_ids_;
};

enum class NormalizationMode { PerComponentStandardize, PerInstanceUnitNorm, None };

/// Statistics of a normalization, sufficient to invert it.
struct NormalizationSpec {
  NormalizationMode mode = NormalizationMode::None;
  Vector mean;    // per component (standardize)
  Vector stddev;  // per component (standardize), population std
  Vector scales;  // per instance (unit norm), Euclidean norm of lf row

  /// Forward transform of rows aligned with the first rows of the dataset.
  Matrix apply(const Matrix& rows) const {
    switch (mode) {
      case NormalizationMode::PerComponentStandardize:
        return (rows.rowwise() - mean.transpose()).array().rowwise() /
               stddev.transpose().array();
      case NormalizationMode::PerInstanceUnitNorm:
        check_rows(rows);
        return scales.head(rows.rows()).cwiseInverse().asDiagonal() * rows;
      case NormalizationMode::None:
        break;
    }
    return rows;
  }

  /// Inverse transform of rows aligned with the first rows of the dataset.
  Matrix invert(const Matrix& rows) const {
    switch (mode) {
      case NormalizationMode::PerComponentStandardize:
        return (rows.array().rowwise() * stddev.transpose().array()).matrix().rowwise() +
               mean.transpose();
      case NormalizationMode::PerInstanceUnitNorm:
        check_rows(rows);
        return scales.head(rows.rows()).asDiagonal() * rows;
      case NormalizationMode::None:
        break;
    }
    return rows;
  }

 private:
  void check_rows(const Matrix& rows) const {
    detail::require(rows.rows() <= scales.size(), ErrorCode::RowCountMismatch,
                    "more rows than stored instance scales");
  }
};

struct NormalizedDataset {
  Dataset data;
  NormalizationSpec spec;
};

inline constexpr double kNormalizationFloor = 1e-14;

/// Normalizes the low-fidelity set and transforms high-fidelity rows with the
/// statistics of their low-fidelity counterparts.
inline NormalizedDataset normalize(const Dataset& data, NormalizationMode mode) {
  NormalizationSpec spec;
  spec.mode = mode;
  const Matrix& lf = data.lf();
  const auto n = static_cast<double>(lf.rows());
  switch (mode) {
    case NormalizationMode::PerComponentStandardize: {
      spec.mean = lf.colwise().sum().transpose() / n;
      spec.stddev.resize(lf.cols());
      for (Index k = 0; k < lf.cols(); ++k) {
        const double var = (lf.col(k).array() - spec.mean(k)).square().sum() / n;
        const double sd = std::sqrt(var);
        if (!(sd >= kNormalizationFloor))
          throw Error(ErrorCode::ZeroVariance,
                      "component " + std::to_string(k) + " has zero variance", k, sd);
        spec.stddev(k) = sd;
      }
      break;
    }
    case NormalizationMode::PerInstanceUnitNorm: {
      spec.scales = lf.rowwise().norm();
      for (Index i = 0; i < lf.rows(); ++i) {
        if (!(spec.scales(i) >= kNormalizationFloor))
          throw Error(ErrorCode::ZeroNorm, "instance " + std::to_string(i) + " has zero norm",
                      i, spec.scales(i));
      }
      break;
    }
    case NormalizationMode::None:
      break;
  }
  std::optional<Matrix> hf;
  if (data.hf()) hf = spec.apply(*data.hf());
  return {Dataset(spec.apply(lf), std::move(hf), data.param_ids()), std::move(spec)};
}

/// Inverse of normalize() for a full dataset.
inline Dataset denormalize(const Dataset& data, const NormalizationSpec& spec) {
  std::optional<Matrix> hf;
  if (data.hf()) hf = spec.invert(*data.hf());
  return Dataset(spec.invert(data.lf()), std::move(hf), data.param_ids());
}

/// Noise std, regularization strength, shift, exponent, and confidence ratio.
class HyperParameters {
 public:
  HyperParameters(double sigma, double omega, double tau, double beta = 2.0, double r = 3.0)
      : sigma_(sigma), omega_(omega), tau_(tau), beta_(beta), r_(r) {
    detail::require(sigma > 0 && std::isfinite(sigma), ErrorCode::InvalidArgument,
                    "sigma must be positive");
    detail::require(omega > 0 && std::isfinite(omega), ErrorCode::InvalidArgument,
                    "omega must be positive");
    detail::require(tau > 0 && std::isfinite(tau), ErrorCode::InvalidArgument,
                    "tau must be positive");
    detail::require(beta >= 1 && std::isfinite(beta), ErrorCode::InvalidArgument,
                    "beta must be >= 1");
    detail::require(r > 1 && std::isfinite(r), ErrorCode::InvalidArgument, "r must be > 1");
  }

  double sigma() const noexcept { return sigma_; }
  double omega() const noexcept { return omega_; }
  double tau() const noexcept { return tau_; }
  double beta() const noexcept { return beta_; }
  double r() const noexcept { return r_; }
  /// Prior strength independent of the spectral scaling: omega * tau^beta.
  double kappa() const noexcept { return omega_ * std::pow(tau_, beta_); }

  HyperParameters with_omega(double omega) const { return {sigma_, omega, tau_, beta_, r_}; }
  HyperParameters with_tau(double tau) const { return {sigma_, omega_, tau, beta_, r_}; }
  HyperParameters with_sigma(double sigma) const { return {sigma, omega_, tau_, beta_, r_}; }

 private:
  double sigma_;
  double omega_;
  double tau_;
  double beta_;
  double r_;
};

struct DisplacementMatrices {
  Matrix phi_hat;   // M x D, observed high-minus-low displacements
  Matrix phi_star;  // N x D, MAP displacements (empty until solved)
};

inline DisplacementMatrices displacements(const Dataset& data) {
  if (!data.hf())
    throw Error(ErrorCode::MissingHighFidelity, "dataset has no high-fidelity rows");
  const Index m = data.m();
  return {*data.hf() - data.lf().topRows(m), Matrix(0, data.dim())};
}

/// P_M^T * rows: scatters M observed rows into an N-row matrix of zeros.
inline Matrix lift_observed(const Matrix& observed, Index n) {
  Matrix out = Matrix::Zero(n, observed.cols());
  out.topRows(observed.rows()) = observed;
  return out;
}

}  // namespace mfgl
