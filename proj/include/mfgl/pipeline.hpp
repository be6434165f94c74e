#pragma once

#include "mfgl/acquisition.hpp"
#include "mfgl/core_types.hpp"
#include "mfgl/graph.hpp"
#include "mfgl/matrix_io.hpp"
#include "mfgl/nystrom.hpp"
#include "mfgl/posterior.hpp"
#include "mfgl/spectral.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mfgl {

enum class SolverKind { Dense, Truncated, Nystrom };

inline std::string_view to_string(SolverKind s) {
  switch (s) {
    case SolverKind::Dense: return "dense";
    case SolverKind::Truncated: return "truncated";
    case SolverKind::Nystrom: return "nystrom";
  }
  return "unknown";
}

inline SolverKind solver_from_string(std::string_view s) {
  if (s == "dense") return SolverKind::Dense;
  if (s == "truncated") return SolverKind::Truncated;
  if (s == "nystrom") return SolverKind::Nystrom;
  throw Error(ErrorCode::InvalidArgument, "unknown solver '" + std::string(s) + "'");
}

inline std::string_view to_string(NormalizationMode m) {
  switch (m) {
    case NormalizationMode::PerComponentStandardize: return "standardize";
    case NormalizationMode::PerInstanceUnitNorm: return "unit-norm";
    case NormalizationMode::None: return "none";
  }
  return "unknown";
}

inline NormalizationMode normalization_from_string(std::string_view s) {
  if (s == "standardize") return NormalizationMode::PerComponentStandardize;
  if (s == "unit-norm") return NormalizationMode::PerInstanceUnitNorm;
  if (s == "none") return NormalizationMode::None;
  throw Error(ErrorCode::InvalidArgument, "unknown normalization '" + std::string(s) + "'");
}

inline SaddleMethod saddle_method_from_string(std::string_view s) {
  if (s == "symmetric") return SaddleMethod::SymmetricSaddle;
  if (s == "unsymmetric") return SaddleMethod::UnsymmetricSaddle;
  if (s == "woodbury") return SaddleMethod::Woodbury;
  throw Error(ErrorCode::InvalidArgument, "unknown saddle method '" + std::string(s) + "'");
}

inline io::MatrixFormat format_from_string(std::string_view s) {
  if (s == "csv") return io::MatrixFormat::Csv;
  if (s == "bin") return io::MatrixFormat::Binary;
  throw Error(ErrorCode::InvalidArgument, "unknown format '" + std::string(s) + "'");
}

/// Everything a plan or estimate run needs. Paths are only used by the CLI.
struct RunConfig {
  std::string lf_path;
  std::string hf_path;
  std::string plan_path;
  /// Optional file with one parameter id per low-fidelity row.
  std::string ids_path;
  std::string output_dir = ".";
  /// Matrix file format; inferred from the lf path extension when unset.
  std::optional<io::MatrixFormat> format;
  bool csv_header = false;

  NormalizationMode normalization = NormalizationMode::None;
  double p = 0.5;
  double q = 0.5;
  Index knn_k = kDefaultKnn;
  SolverKind solver = SolverKind::Dense;
  /// Truncation size or landmark count; defaults to min(N, max(4M, 10)).
  std::optional<Index> k;
  /// Number of high-fidelity points to acquire.
  Index m = 0;
  std::optional<Index> embed_dim;
  /// High-fidelity noise std in normalized units. Required for estimates.
  std::optional<double> sigma;
  double beta = 2.0;
  double r = 3.0;
  std::optional<double> omega;
  std::optional<double> tau;
  std::uint64_t seed = 0;
  std::optional<SaddleMethod> saddle_method;
  std::optional<Index> rank_r;
  unsigned threads = 0;
};

inline void validate(const RunConfig& c) {
  detail::require(c.m >= 0, ErrorCode::InvalidArgument, "m must be >= 0");
  detail::require(c.knn_k >= 1, ErrorCode::InvalidArgument, "knn-k must be >= 1");
  detail::require(std::isfinite(c.p) && std::isfinite(c.q), ErrorCode::InvalidArgument,
                  "p and q must be finite");
  if (c.solver == SolverKind::Nystrom)
    detail::require(std::abs(c.p + c.q - 1.0) <= 1e-12, ErrorCode::InvalidArgument,
                    "the nystrom solver requires p + q = 1");
  if (c.k) detail::require(*c.k >= 1, ErrorCode::InvalidArgument, "k must be >= 1");
  if (c.embed_dim) detail::require(*c.embed_dim >= 1, ErrorCode::InvalidArgument, "embed-dim must be >= 1");
  if (c.sigma)
    detail::require(*c.sigma > 0 && std::isfinite(*c.sigma), ErrorCode::InvalidArgument,
                    "sigma must be positive");
  if (c.omega)
    detail::require(*c.omega > 0 && std::isfinite(*c.omega), ErrorCode::InvalidArgument,
                    "omega must be positive");
  if (c.tau)
    detail::require(*c.tau > 0 && std::isfinite(*c.tau), ErrorCode::InvalidArgument,
                    "tau must be positive");
  detail::require(c.beta >= 1 && std::isfinite(c.beta), ErrorCode::InvalidArgument, "beta must be >= 1");
  detail::require(c.r > 1 && std::isfinite(c.r), ErrorCode::InvalidArgument, "r must be > 1");
  if (c.rank_r) detail::require(*c.rank_r >= 1, ErrorCode::InvalidArgument, "rank-r must be >= 1");
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["lf_path"] = c.lf_path;
  j["hf_path"] = c.hf_path;
  j["plan_path"] = c.plan_path;
  j["ids_path"] = c.ids_path;
  j["output_dir"] = c.output_dir;
  j["format"] = c.format ? nlohmann::json(*c.format == io::MatrixFormat::Csv ? "csv" : "bin")
                         : nlohmann::json(nullptr);
  j["csv_header"] = c.csv_header;
  j["normalization"] = std::string(to_string(c.normalization));
  j["p"] = c.p;
  j["q"] = c.q;
  j["knn_k"] = c.knn_k;
  j["solver"] = std::string(to_string(c.solver));
  j["k"] = c.k ? nlohmann::json(*c.k) : nlohmann::json(nullptr);
  j["m"] = c.m;
  j["embed_dim"] = c.embed_dim ? nlohmann::json(*c.embed_dim) : nlohmann::json(nullptr);
  j["sigma"] = c.sigma ? nlohmann::json(*c.sigma) : nlohmann::json(nullptr);
  j["beta"] = c.beta;
  j["r"] = c.r;
  j["omega"] = c.omega ? nlohmann::json(*c.omega) : nlohmann::json("auto");
  j["tau"] = c.tau ? nlohmann::json(*c.tau) : nlohmann::json("auto");
  j["seed"] = c.seed;
  j["saddle_method"] =
      c.saddle_method ? nlohmann::json(std::string(to_string(*c.saddle_method))) : nlohmann::json(nullptr);
  j["rank_r"] = c.rank_r ? nlohmann::json(*c.rank_r) : nlohmann::json(nullptr);
  j["threads"] = c.threads;
  return j;
}

namespace detail {

inline std::optional<double> auto_or_value(const nlohmann::json& v) {
  if (v.is_null() || (v.is_string() && v.get<std::string>() == "auto")) return std::nullopt;
  return v.get<double>();
}

}  // namespace detail

/// Overlays the keys present in `j` onto `c`. Unknown keys are rejected.
inline void merge_json(RunConfig& c, const nlohmann::json& j) {
  detail::require(j.is_object(), ErrorCode::InvalidArgument, "config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "lf_path") c.lf_path = v.get<std::string>();
      else if (key == "hf_path") c.hf_path = v.get<std::string>();
      else if (key == "plan_path") c.plan_path = v.get<std::string>();
      else if (key == "ids_path") c.ids_path = v.get<std::string>();
      else if (key == "output_dir") c.output_dir = v.get<std::string>();
      else if (key == "format")
        c.format = v.is_null() ? std::nullopt
                               : std::optional<io::MatrixFormat>(format_from_string(v.get<std::string>()));
      else if (key == "csv_header") c.csv_header = v.get<bool>();
      else if (key == "normalization") c.normalization = normalization_from_string(v.get<std::string>());
      else if (key == "p") c.p = v.get<double>();
      else if (key == "q") c.q = v.get<double>();
      else if (key == "knn_k") c.knn_k = v.get<Index>();
      else if (key == "solver") c.solver = solver_from_string(v.get<std::string>());
      else if (key == "k") c.k = v.is_null() ? std::nullopt : std::optional<Index>(v.get<Index>());
      else if (key == "m") c.m = v.get<Index>();
      else if (key == "embed_dim")
        c.embed_dim = v.is_null() ? std::nullopt : std::optional<Index>(v.get<Index>());
      else if (key == "sigma") c.sigma = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      else if (key == "beta") c.beta = v.get<double>();
      else if (key == "r") c.r = v.get<double>();
      else if (key == "omega") c.omega = detail::auto_or_value(v);
      else if (key == "tau") c.tau = detail::auto_or_value(v);
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "saddle_method")
        c.saddle_method = v.is_null() ? std::nullopt
                                      : std::optional<SaddleMethod>(
                                            saddle_method_from_string(v.get<std::string>()));
      else if (key == "rank_r")
        c.rank_r = v.is_null() ? std::nullopt : std::optional<Index>(v.get<Index>());
      else if (key == "threads") c.threads = v.get<unsigned>();
      else throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad config value: ") + e.what());
  }
}

/// Wall-clock seconds per named stage, in execution order.
using Timings = std::vector<std::pair<std::string, double>>;

namespace detail {

class StageTimer {
 public:
  explicit StageTimer(Timings& out) : out_(out), last_(std::chrono::steady_clock::now()) {}
  void mark(std::string name) {
    const auto now = std::chrono::steady_clock::now();
    out_.emplace_back(std::move(name), std::chrono::duration<double>(now - last_).count());
    last_ = now;
  }

 private:
  Timings& out_;
  std::chrono::steady_clock::time_point last_;
};

inline std::uint64_t landmark_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x6c616e646d61726bULL); }

inline Index default_k(const RunConfig& c, Index n, Index m) {
  return std::min(n, c.k.value_or(std::max<Index>(4 * m, 10)));
}

/// Low-lying spectrum from a Nystrom factorization over uniformly random
/// landmarks, for point sets too large for the dense graph.
inline Spectrum nystrom_spectrum(const Matrix& lf, const RunConfig& c, Index k_needed) {
  const Index n = lf.rows();
  const KernelWeightSource source(lf, c.knn_k);
  const Index k = std::max(default_k(c, n, c.m), std::min(n, k_needed + 10));
  const std::vector<Index> x = select_landmarks(n, 1, k, landmark_seed(c.seed));
  const LowRankLaplacian lr = nystrom_general_p(source, x, c.p, {c.rank_r, kPseudoInverseCutoff, 0});
  Spectrum s;
  s.p = c.p;
  s.q = c.q;
  s.degrees = lr.d_hat;
  s.shift_a = 2.0;
  s.eigenvalues = lr.laplacian_eigenvalues().head(k_needed);
  s.eigenvectors = lr.u.leftCols(k_needed);
  detail::fix_signs(s.eigenvectors);
  return s;
}

}  // namespace detail

struct PlanStageResult {
  AcquisitionPlan plan;
  Timings timings;
};

/// Normalize, build the graph, compute the low spectrum and choose the M
/// high-fidelity points. M = 0 gives the identity ordering.
inline PlanStageResult plan_stage(const Matrix& lf, const RunConfig& config) {
  validate(config);
  const Dataset data(lf);
  detail::require(config.m <= data.n(), ErrorCode::InvalidArgument,
                  "m = " + std::to_string(config.m) + " exceeds N = " + std::to_string(data.n()));
  PlanStageResult out;
  detail::StageTimer timer(out.timings);
  if (config.m == 0) {
    out.plan.seed = config.seed;
    for (Index i = 0; i < data.n(); ++i) out.plan.permutation.push_back(i);
    out.plan.cluster_assignment.assign(static_cast<std::size_t>(data.n()), 0);
    return out;
  }
  const NormalizedDataset nd = normalize(data, config.normalization);
  timer.mark("normalize");
  const Index dim = config.embed_dim.value_or(config.m);
  const Index k_needed = std::max(config.m, dim);
  detail::require(k_needed <= data.n(), ErrorCode::InsufficientSpectrum,
                  "embedding needs more eigenvectors than points");
  Spectrum spectrum;
  if (data.n() <= kDenseGraphLimit) {
    auto graph = std::make_shared<const AffinityGraph>(build_graph(nd.data.lf(), config.knn_k));
    timer.mark("build_graph");
    const GraphLaplacian lap(graph, config.p, config.q);
    spectrum = low_spectrum(lap, k_needed);
  } else {
    detail::require(config.solver == SolverKind::Nystrom, ErrorCode::DenseLimitExceeded,
                    "N exceeds the dense graph limit; use --solver nystrom");
    spectrum = detail::nystrom_spectrum(nd.data.lf(), config, k_needed);
  }
  timer.mark("low_spectrum");
  out.plan = plan_acquisition(spectrum, config.m, config.seed, dim);
  timer.mark("plan_acquisition");
  return out;
}

struct EstimateResult {
  PosteriorResult posterior;  // mf_estimates in original units
  std::optional<HyperParameters> hyperparameters;
  std::optional<CalibrationResult> calibration;
  Matrix embedding;  // leading eigenvector coordinates for plotting
  std::vector<Index> dropped_columns;
  Timings timings;
};

/// Solves for the multi-fidelity estimates of a dataset whose first M rows
/// carry high-fidelity observations.
inline EstimateResult estimate_stage(const Dataset& data, const RunConfig& config) {
  validate(config);
  EstimateResult out;
  detail::StageTimer timer(out.timings);
  const Index n = data.n();
  const Index m = data.m();
  out.posterior.solver_tag = config.solver == SolverKind::Dense       ? SolverTag::Dense
                             : config.solver == SolverKind::Truncated ? SolverTag::Truncated
                                                                      : SolverTag::Nystrom;
  if (m == 0) {
    out.posterior.phi_star = Matrix::Zero(n, data.dim());
    out.posterior.mf_estimates = data.lf();
    return out;
  }
  detail::require(config.sigma.has_value(), ErrorCode::InvalidArgument,
                  "sigma is required to estimate");
  detail::require(m < n, ErrorCode::InvalidArgument, "need at least one unobserved point");

  const NormalizedDataset nd = normalize(data, config.normalization);
  const Matrix phi_hat = displacements(nd.data).phi_hat;
  const Matrix& lf = nd.data.lf();
  timer.mark("normalize");
  const HyperParameters base(*config.sigma, config.omega.value_or(1.0),
                             config.tau.value_or(1.0), config.beta, config.r);

  auto resolve = [&](const Vector& eigenvalues, const StddevFunction& stddevs) {
    HyperParameters hp = base.with_tau(config.tau ? *config.tau : choose_tau(eigenvalues));
    if (!config.omega) {
      out.calibration = calibrate_omega(stddevs, hp, m);
      hp = hp.with_omega(out.calibration->omega);
    }
    timer.mark("calibrate");
    return hp;
  };

  Matrix phi_star;
  Vector stddevs;
  std::optional<HyperParameters> hp;
  const Index plot_dim = std::min<Index>(std::max<Index>(m, 2), n);
  if (config.solver == SolverKind::Nystrom) {
    const KernelWeightSource source(lf, config.knn_k);
    const Index k = std::max(m, detail::default_k(config, n, m));
    const std::vector<Index> x = select_landmarks(n, m, k, detail::landmark_seed(config.seed));
    auto lr = std::make_shared<const LowRankLaplacian>(
        nystrom_general_p(source, x, config.p, {config.rank_r, kPseudoInverseCutoff, m}));
    timer.mark("nystrom_factor");
    hp = resolve(lr->laplacian_eigenvalues(), nystrom_stddev_function(lr, m));
    const SaddleOperators ops = build_saddle(*lr, *hp, m);
    out.dropped_columns = ops.dropped_columns;
    const SaddleMethod method =
        config.saddle_method.value_or(default_saddle_method(phi_hat.cols()));
    phi_star = solve_map_saddle(ops, phi_hat, method);
    stddevs = WoodburyCore(ops).covariance_diagonal().cwiseMax(0.0).cwiseSqrt();
    out.embedding = lr->u.leftCols(std::min(plot_dim, lr->rank()));
  } else {
    auto graph = std::make_shared<const AffinityGraph>(build_graph(lf, config.knn_k));
    const GraphLaplacian lap(graph, config.p, config.q);
    timer.mark("build_graph");
    if (config.solver == SolverKind::Dense) {
      detail::require(n <= kDensePosteriorLimit, ErrorCode::DenseLimitExceeded,
                      "dense solver limited to N <= " + std::to_string(kDensePosteriorLimit));
      auto full = std::make_shared<const Spectrum>(low_spectrum(lap, n));
      timer.mark("low_spectrum");
      hp = resolve(full->eigenvalues, dense_stddev_function(full, m));
      PosteriorResult r = dense_posterior(lap, phi_hat, *hp, m, false);
      phi_star = std::move(r.phi_star);
      stddevs = std::move(r.stddevs);
      out.embedding = full->eigenvectors.leftCols(plot_dim);
    } else {
      const Index k = detail::default_k(config, n, m);
      auto spectrum = std::make_shared<const Spectrum>(low_spectrum(lap, k));
      timer.mark("low_spectrum");
      hp = resolve(spectrum->eigenvalues, truncated_stddev_function(spectrum, m));
      const TruncatedPosterior tp = truncated_posterior(spectrum, phi_hat, *hp, m);
      phi_star = tp.map_displacements();
      stddevs = truncated_variances(tp).cwiseMax(0.0).cwiseSqrt();
      out.embedding = spectrum->eigenvectors.leftCols(std::min(plot_dim, k));
    }
  }
  timer.mark("solve");

  const Matrix mf_norm = lf + phi_star;
  out.posterior.mf_estimates = nd.spec.invert(mf_norm);
  out.posterior.phi_star = std::move(phi_star);
  out.posterior.stddevs = std::move(stddevs);
  out.hyperparameters = hp;
  timer.mark("denormalize");
  return out;
}

inline nlohmann::json to_json(const HyperParameters& hp) {
  return {{"sigma", hp.sigma()}, {"omega", hp.omega()}, {"tau", hp.tau()},
          {"beta", hp.beta()},   {"r", hp.r()},         {"kappa", hp.kappa()}};
}

inline nlohmann::json to_json(const Timings& t) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, secs] : t) j[name] = secs;
  return j;
}

}  // namespace mfgl
