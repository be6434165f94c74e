#pragma once

#include "mfgl/core_types.hpp"
#include "mfgl/pipeline.hpp"
#include "mfgl/random.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace mfgl {

enum class GeneratorId { ClusteredShift, SmoothManifold, BeamLike1D };

inline std::string_view to_string(GeneratorId g) {
  switch (g) {
    case GeneratorId::ClusteredShift: return "clustered-shift";
    case GeneratorId::SmoothManifold: return "smooth-manifold";
    case GeneratorId::BeamLike1D: return "beam-like-1d";
  }
  return "unknown";
}

inline GeneratorId generator_from_string(std::string_view s) {
  if (s == "clustered-shift") return GeneratorId::ClusteredShift;
  if (s == "smooth-manifold") return GeneratorId::SmoothManifold;
  if (s == "beam-like-1d") return GeneratorId::BeamLike1D;
  throw Error(ErrorCode::InvalidArgument, "unknown generator '" + std::string(s) + "'");
}

struct GeneratorSpec {
  GeneratorId id = GeneratorId::ClusteredShift;
  Index n = 1000;
  Index d = 5;
  Index clusters = 10;
  /// Displacement magnitude as a fraction of the data scale.
  double displacement_fraction = 0.3;
  /// High-fidelity noise std as a fraction of the displacement magnitude.
  double noise_fraction = 0.01;
  double cluster_std = 0.5;
  std::uint64_t seed = 1;
};

/// A bi-fidelity problem with known truth. High-fidelity rows are handed out
/// on request through `hf_rows`, the stand-in for an expensive model.
struct SyntheticProblem {
  GeneratorId generator_id = GeneratorId::ClusteredShift;
  Matrix true_data;
  Matrix lf_data;
  double hf_noise_sigma = 0.0;
  std::optional<std::vector<Index>> cluster_labels;
  std::uint64_t seed = 0;
  Matrix hf_noise;  // fixed per original index

  Index n() const noexcept { return lf_data.rows(); }

  Matrix hf_rows(const std::vector<Index>& original_indices) const {
    Matrix out(static_cast<Index>(original_indices.size()), true_data.cols());
    for (std::size_t k = 0; k < original_indices.size(); ++k) {
      const Index i = original_indices[k];
      detail::require(i >= 0 && i < n(), ErrorCode::InvalidArgument, "hf index out of range");
      out.row(static_cast<Index>(k)) = true_data.row(i) + hf_noise.row(i);
    }
    return out;
  }
};

namespace detail {

inline Vector unit_direction(Rng& rng, Index d) {
  Vector v = rng.normal_matrix(d, 1);
  return v / v.norm();
}

inline SyntheticProblem clustered_shift(const GeneratorSpec& s, Rng& rng) {
  require(s.clusters >= 1 && s.clusters <= s.n, ErrorCode::InvalidArgument,
          "need 1 <= clusters <= N");
  require(s.cluster_std > 0, ErrorCode::InvalidArgument, "cluster_std must be positive");
  // Centres form a random chain: neighbours sit `spacing` apart so the
  // affinity graph stays connected through weak inter-cluster edges, and
  // non-neighbours are kept at least as far apart.
  const double spacing = 8.0 * s.cluster_std;
  Matrix centres = Matrix::Zero(s.clusters, s.d);
  for (Index g = 1; g < s.clusters; ++g) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      centres.row(g) = centres.row(g - 1) + spacing * unit_direction(rng, s.d).transpose();
      bool ok = true;
      for (Index h = 0; h + 1 < g && ok; ++h) ok = (centres.row(g) - centres.row(h)).norm() >= spacing;
      if (ok) break;
    }
  }
  std::vector<Index> labels(static_cast<std::size_t>(s.n));
  for (Index i = 0; i < s.n; ++i) labels[static_cast<std::size_t>(i)] = i % s.clusters;
  for (std::size_t i = labels.size(); i > 1; --i)
    std::swap(labels[i - 1], labels[static_cast<std::size_t>(rng.below(i))]);

  SyntheticProblem p;
  p.lf_data.resize(s.n, s.d);
  for (Index i = 0; i < s.n; ++i)
    p.lf_data.row(i) = centres.row(labels[static_cast<std::size_t>(i)]) +
                       s.cluster_std * rng.normal_matrix(1, s.d);
  const double scale =
      std::sqrt((p.lf_data.rowwise() - p.lf_data.colwise().mean()).rowwise().squaredNorm().mean());
  const double magnitude = s.displacement_fraction * scale;
  Matrix shift(s.clusters, s.d);
  for (Index g = 0; g < s.clusters; ++g) shift.row(g) = magnitude * unit_direction(rng, s.d).transpose();
  p.true_data = p.lf_data;
  for (Index i = 0; i < s.n; ++i) p.true_data.row(i) += shift.row(labels[static_cast<std::size_t>(i)]);
  p.hf_noise_sigma = s.noise_fraction * magnitude;
  p.cluster_labels = std::move(labels);
  return p;
}

inline SyntheticProblem smooth_manifold(const GeneratorSpec& s, Rng& rng) {
  require(s.d >= 2, ErrorCode::InvalidArgument, "smooth-manifold needs D >= 2");
  Vector phase(s.d), freq(s.d);
  for (Index k = 0; k < s.d; ++k) {
    phase(k) = rng.uniform(0.0, 2.0 * std::numbers::pi);
    freq(k) = 1.0 + static_cast<double>(k % 3);
  }
  SyntheticProblem p;
  p.lf_data.resize(s.n, s.d);
  Vector t(s.n);
  for (Index i = 0; i < s.n; ++i) {
    t(i) = rng.uniform();
    for (Index k = 0; k < s.d; ++k)
      p.lf_data(i, k) = std::sin(2.0 * std::numbers::pi * freq(k) * t(i) + phase(k)) + 2.0 * t(i);
  }
  const double scale =
      std::sqrt((p.lf_data.rowwise() - p.lf_data.colwise().mean()).rowwise().squaredNorm().mean());
  const double magnitude = s.displacement_fraction * scale;
  p.true_data = p.lf_data;
  for (Index i = 0; i < s.n; ++i)
    for (Index k = 0; k < s.d; ++k)
      p.true_data(i, k) += magnitude * std::cos(std::numbers::pi * t(i) + phase(k)) /
                           std::sqrt(static_cast<double>(s.d));
  p.hf_noise_sigma = s.noise_fraction * magnitude;
  return p;
}

inline SyntheticProblem beam_like(const GeneratorSpec& s, Rng& rng) {
  require(s.d >= 3, ErrorCode::InvalidArgument, "beam-like-1d needs D >= 3 grid points");
  SyntheticProblem p;
  p.true_data.resize(s.n, s.d);
  p.lf_data.resize(s.n, s.d);
  for (Index i = 0; i < s.n; ++i) {
    const double load = rng.uniform(0.5, 2.0);
    const double stiffness = rng.uniform(1.0, 3.0);
    const double a = rng.uniform(0.3, 1.0);  // load position
    for (Index j = 0; j < s.d; ++j) {
      const double x = static_cast<double>(j) / static_cast<double>(s.d - 1);
      // Cantilever deflection under a point load at a.
      const double w = x <= a ? x * x * (3.0 * a - x) / 6.0 : a * a * (3.0 * x - a) / 6.0;
      p.true_data(i, j) = load / stiffness * w;
    }
    // A stiffer, smoothed model underpredicts the deflection.
    for (Index j = 0; j < s.d; ++j) {
      const Index lo = std::max<Index>(0, j - 1);
      const Index hi = std::min<Index>(s.d - 1, j + 1);
      const double avg = p.true_data.row(i).segment(lo, hi - lo + 1).mean();
      p.lf_data(i, j) = 0.8 * avg;
    }
  }
  const double scale = (p.true_data - p.lf_data).rowwise().norm().mean();
  p.hf_noise_sigma = s.noise_fraction * scale;
  return p;
}

}  // namespace detail

inline SyntheticProblem generate(const GeneratorSpec& spec) {
  detail::require(spec.n >= 2 && spec.d >= 1, ErrorCode::InvalidArgument, "need N >= 2, D >= 1");
  detail::require(spec.displacement_fraction >= 0 && spec.noise_fraction >= 0,
                  ErrorCode::InvalidArgument, "fractions must be non-negative");
  Rng rng(spec.seed);
  SyntheticProblem p;
  switch (spec.id) {
    case GeneratorId::ClusteredShift: p = detail::clustered_shift(spec, rng); break;
    case GeneratorId::SmoothManifold: p = detail::smooth_manifold(spec, rng); break;
    case GeneratorId::BeamLike1D: p = detail::beam_like(spec, rng); break;
  }
  p.generator_id = spec.id;
  p.seed = spec.seed;
  p.hf_noise = p.hf_noise_sigma * rng.normal_matrix(spec.n, p.true_data.cols());
  return p;
}

// ---------------------------------------------------------------------------
// Error metrics, in percent

enum class ErrorMetric { ComponentRelAbs, FieldRelL2 };

inline std::string_view to_string(ErrorMetric m) {
  return m == ErrorMetric::ComponentRelAbs ? "component" : "field";
}

inline ErrorMetric metric_from_string(std::string_view s) {
  if (s == "component") return ErrorMetric::ComponentRelAbs;
  if (s == "field") return ErrorMetric::FieldRelL2;
  throw Error(ErrorCode::InvalidArgument, "unknown metric '" + std::string(s) + "'");
}

/// |est - ref| divided by the column mean of |ref|, times 100.
inline Matrix error_component(const Matrix& est, const Matrix& ref) {
  detail::require(est.rows() == ref.rows() && est.cols() == ref.cols(),
                  ErrorCode::DimensionMismatch, "estimate and reference differ in shape");
  const Vector denom = ref.cwiseAbs().colwise().mean().transpose();
  for (Index k = 0; k < denom.size(); ++k)
    if (!(denom(k) > 0.0))
      throw Error(ErrorCode::ZeroReferenceColumn,
                  "reference column " + std::to_string(k) + " is identically zero", k);
  return 100.0 * ((est - ref).cwiseAbs().array().rowwise() / denom.transpose().array()).matrix();
}

/// Row-wise |est - ref|_2 divided by the mean row norm of ref, times 100.
inline Vector error_field(const Matrix& est, const Matrix& ref) {
  detail::require(est.rows() == ref.rows() && est.cols() == ref.cols(),
                  ErrorCode::DimensionMismatch, "estimate and reference differ in shape");
  const double denom = ref.rowwise().norm().mean();
  if (!(denom > 0.0)) throw Error(ErrorCode::ZeroReferenceSet, "reference rows are all zero");
  return 100.0 * (est - ref).rowwise().norm() / denom;
}

struct ErrorReport {
  Matrix per_point_lf;  // N x D (component) or N x 1 (field)
  Matrix per_point;     // same, for the multi-fidelity estimate
  double mean_lf = 0.0;
  double mean_mf = 0.0;
  double reduction = 0.0;
  ErrorMetric metric = ErrorMetric::ComponentRelAbs;
};

inline ErrorReport error_report(const Matrix& lf, const Matrix& mf, const Matrix& ref,
                                ErrorMetric metric) {
  ErrorReport r;
  r.metric = metric;
  if (metric == ErrorMetric::ComponentRelAbs) {
    r.per_point_lf = error_component(lf, ref);
    r.per_point = error_component(mf, ref);
  } else {
    r.per_point_lf = error_field(lf, ref);
    r.per_point = error_field(mf, ref);
  }
  r.mean_lf = r.per_point_lf.mean();
  r.mean_mf = r.per_point.mean();
  r.reduction = r.mean_lf > 0.0 ? 100.0 * (1.0 - r.mean_mf / r.mean_lf) : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// End-to-end driver

struct PipelineRun {
  AcquisitionPlan plan;
  EstimateResult estimate;
  ErrorReport report;
  Timings timings;
};

/// Plan, acquire high-fidelity rows from the problem, estimate, and score
/// against the truth. Rows of every output follow the plan's ordering.
inline PipelineRun run_pipeline(const SyntheticProblem& problem, const RunConfig& config,
                                ErrorMetric metric = ErrorMetric::ComponentRelAbs) {
  PipelineRun run;
  PlanStageResult planned = plan_stage(problem.lf_data, config);
  run.plan = std::move(planned.plan);
  run.timings = planned.timings;

  const Dataset permuted = apply_permutation(Dataset(problem.lf_data), run.plan);
  const std::vector<Index> selected(run.plan.permutation.begin(),
                                    run.plan.permutation.begin() + config.m);
  const Dataset with_hf = permuted.with_high_fidelity(problem.hf_rows(selected));
  run.estimate = estimate_stage(with_hf, config);
  for (const auto& t : run.estimate.timings) run.timings.push_back(t);

  const Matrix ref = permute_rows(problem.true_data, run.plan.permutation);
  run.report = error_report(permuted.lf(), run.estimate.posterior.mf_estimates, ref, metric);
  return run;
}

/// Noise std of the problem expressed in the coordinates produced by the
/// configured normalization (exact for None, a mean-scale approximation
/// otherwise).
inline double normalized_sigma(const SyntheticProblem& problem, NormalizationMode mode) {
  if (mode == NormalizationMode::None) return problem.hf_noise_sigma;
  const NormalizedDataset nd = normalize(Dataset(problem.lf_data), mode);
  const double mean_scale = mode == NormalizationMode::PerComponentStandardize
                                ? nd.spec.stddev.mean()
                                : nd.spec.scales.mean();
  return problem.hf_noise_sigma / mean_scale;
}

inline nlohmann::json to_json(const ErrorReport& r) {
  return {{"metric", std::string(to_string(r.metric))},
          {"mean_lf", r.mean_lf},
          {"mean_mf", r.mean_mf},
          {"reduction", r.reduction}};
}

}  // namespace mfgl
