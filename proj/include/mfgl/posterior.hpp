#pragma once

#include "mfgl/core_types.hpp"
#include "mfgl/graph.hpp"
#include "mfgl/random.hpp"
#include "mfgl/spectral.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace mfgl {

/// Largest N accepted by the dense reference solver.
inline constexpr Index kDensePosteriorLimit = 3000;

enum class SolverTag { Dense, Truncated, Nystrom };

inline std::string_view to_string(SolverTag tag) {
  switch (tag) {
    case SolverTag::Dense: return "dense";
    case SolverTag::Truncated: return "truncated";
    case SolverTag::Nystrom: return "nystrom";
  }
  return "unknown";
}

struct PosteriorResult {
  Matrix phi_star;      // N x D MAP displacements
  Matrix mf_estimates;  // N x D, lf + phi_star (filled by the caller that owns lf)
  Vector stddevs;       // sqrt(C_ii)
  std::optional<Matrix> covariance;
  SolverTag solver_tag = SolverTag::Dense;
};

namespace detail {

inline bool is_small_integer(double beta) {
  return beta == std::round(beta) && beta >= 1.0 && beta <= 16.0;
}

inline Matrix symmetric_power(const Matrix& sym, double beta) {
  if (is_small_integer(beta)) {
    const int k = static_cast<int>(beta);
    Matrix out = sym;
    for (int i = 1; i < k; ++i) out = (out * sym).eval();
    return 0.5 * (out + out.transpose());
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const Vector w = es.eigenvalues().array().max(0.0).pow(beta).matrix();
  Matrix out = es.eigenvectors() * w.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace detail

/// D^(p-q) (L + tau I)^beta as a dense symmetric matrix, via the similar
/// symmetric Laplacian: D^h (L_sym + tau I)^beta D^h with h = (p-q)/2.
inline Matrix prior_operator(const GraphLaplacian& lap, double tau, double beta) {
  Matrix shifted = lap.symmetric_dense();
  shifted.diagonal().array() += tau;
  Matrix prior = detail::symmetric_power(shifted, beta);
  if (!lap.is_symmetric()) {
    const Vector scale = lap.degrees().array().pow(0.5 * (lap.p() - lap.q())).matrix();
    prior = scale.asDiagonal() * prior * scale.asDiagonal();
    prior = 0.5 * (prior + prior.transpose()).eval();
  }
  return prior;
}

/// Solves (P^T P / sigma^2 + omega * prior) Phi = P^T phi_hat / sigma^2.
inline PosteriorResult dense_map(const Matrix& prior, const Matrix& phi_hat, double sigma,
                                 double omega, Index m, bool want_cov) {
  const Index n = prior.rows();
  detail::require(phi_hat.rows() == m && m <= n, ErrorCode::RowCountMismatch,
                  "phi_hat must have M rows");
  detail::require(phi_hat.allFinite() && prior.allFinite(), ErrorCode::NonFiniteInput,
                  "non-finite posterior input");
  const double inv_var = 1.0 / (sigma * sigma);
  Matrix a = omega * prior;
  a.diagonal().head(m).array() += inv_var;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::SingularSystem, "posterior precision is not positive definite");
  PosteriorResult r;
  r.solver_tag = SolverTag::Dense;
  r.phi_star = inv_var * llt.solve(lift_observed(phi_hat, n));
  Matrix cov = llt.solve(Matrix::Identity(n, n));
  cov = 0.5 * (cov + cov.transpose()).eval();
  r.stddevs = cov.diagonal().cwiseSqrt();
  if (want_cov) r.covariance = std::move(cov);
  return r;
}

/// Exact posterior by dense factorization; the reference the fast solvers are
/// checked against.
inline PosteriorResult dense_posterior(const GraphLaplacian& lap, const Matrix& phi_hat,
                                       const HyperParameters& hp, Index m, bool want_cov,
                                       Index dense_limit = kDensePosteriorLimit) {
  if (lap.size() > dense_limit)
    throw Error(ErrorCode::DenseLimitExceeded,
                "dense posterior limited to N <= " + std::to_string(dense_limit));
  return dense_map(prior_operator(lap, hp.tau(), hp.beta()), phi_hat, hp.sigma(), hp.omega(), m,
                   want_cov);
}

/// tau = smallest eigenvalue above 1e-8 * lambda_max of the given set.
inline double choose_tau(const Vector& eigenvalues) {
  detail::require(eigenvalues.size() >= 2, ErrorCode::InsufficientSpectrum,
                  "choose_tau needs at least two eigenvalues");
  const double tol = 1e-8 * eigenvalues.maxCoeff();
  double best = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < eigenvalues.size(); ++k)
    if (eigenvalues(k) > tol && eigenvalues(k) < best) best = eigenvalues(k);
  if (!std::isfinite(best) || !(tol > 0.0))
    throw Error(ErrorCode::AllZeroSpectrum, "no eigenvalue is distinguishable from zero");
  return best;
}

inline double choose_tau(const Spectrum& spectrum) { return choose_tau(spectrum.eigenvalues); }

// ---------------------------------------------------------------------------
// Calibration of omega

/// Per-point posterior standard deviations as a function of the
/// hyperparameters; every solver provides one.
using StddevFunction = std::function<Vector(const HyperParameters&)>;

struct CalibrationOptions {
  double omega_lo = 1e-6;
  double omega_hi = 1e6;
  /// Bracket expansion limit on each side, in decades.
  double max_decades = 60.0;
  double rel_tolerance = 1e-10;
  int max_iterations = 400;
};

struct CalibrationResult {
  double omega = 0.0;
  double target = 0.0;
  double achieved = 0.0;
  std::vector<std::pair<double, double>> trace;  // (omega, mean stddev)
};

/// Mean standard deviation over the unobserved rows M..N-1.
inline double mean_unobserved_stddev(const Vector& stddevs, Index m) {
  detail::require(stddevs.size() > m, ErrorCode::InvalidArgument,
                  "calibration needs at least one unobserved point");
  return stddevs.tail(stddevs.size() - m).mean();
}

/// Bisection in log(omega) for mean_{i>=M} sqrt(C_ii) = r * sigma.
inline CalibrationResult calibrate_omega(const StddevFunction& stddevs,
                                         const HyperParameters& hp, Index m,
                                         const CalibrationOptions& opt = {}) {
  CalibrationResult res;
  res.target = hp.r() * hp.sigma();
  auto eval = [&](double omega) -> double {
    double value;
    try {
      value = mean_unobserved_stddev(stddevs(hp.with_omega(omega)), m);
    } catch (const Error& e) {
      // Vanishing prior leaves the system singular: the variance is unbounded.
      if (e.code() != ErrorCode::SingularSystem && e.code() != ErrorCode::SingularCapacitance)
        throw;
      value = std::numeric_limits<double>::infinity();
    }
    if (std::isnan(value)) value = std::numeric_limits<double>::infinity();
    res.trace.emplace_back(omega, value);
    return value;
  };

  double lo = opt.omega_lo;
  double hi = opt.omega_hi;
  double f_lo = eval(lo);
  double f_hi = eval(hi);
  const double lo_floor = opt.omega_lo * std::pow(10.0, -opt.max_decades);
  const double hi_ceiling = opt.omega_hi * std::pow(10.0, opt.max_decades);
  while (f_lo < res.target && lo > lo_floor * 1.000001) {
    hi = lo;
    f_hi = f_lo;
    lo /= 10.0;
    f_lo = eval(lo);
  }
  while (f_hi > res.target && hi < hi_ceiling / 1.000001) {
    lo = hi;
    f_lo = f_hi;
    hi *= 10.0;
    f_hi = eval(hi);
  }
  if (f_lo < res.target || f_hi > res.target)
    throw Error(ErrorCode::NoBracket,
                "target mean stddev " + std::to_string(res.target) +
                    " is not attainable within the expanded omega bracket",
                std::nullopt, res.target);

  double omega = std::sqrt(lo * hi);
  double f = f_lo;
  for (int it = 0; it < opt.max_iterations; ++it) {
    omega = std::sqrt(lo * hi);
    f = eval(omega);
    if (std::abs(f - res.target) <= opt.rel_tolerance * res.target) break;
    if (f > res.target)
      lo = omega;
    else
      hi = omega;
    if (hi / lo - 1.0 <= 1e-15) break;
  }
  res.omega = omega;
  res.achieved = f;
  return res;
}

/// Dense stddevs for repeated calibration from the full spectrum (K = N).
/// B^-1 = Psi diag((lambda + tau)^-beta) Psi^T is cached per (tau, beta);
/// each omega then costs O(N M^2) via the Woodbury identity.
inline StddevFunction dense_stddev_function(std::shared_ptr<const Spectrum> full, Index m) {
  detail::require(full != nullptr && full->size() == full->points(), ErrorCode::InsufficientSpectrum,
                  "dense calibration needs the full spectrum");
  detail::require(m >= 0 && m < full->points(), ErrorCode::InvalidArgument, "need 0 <= M < N");
  struct State {
    std::shared_ptr<const Spectrum> spectrum;
    Index m;
    double tau = -1.0;
    double beta = -1.0;
    Matrix inverse_prior;
  };
  auto state = std::make_shared<State>(State{std::move(full), m, -1.0, -1.0, {}});
  return [state](const HyperParameters& hp) -> Vector {
    State& s = *state;
    if (hp.tau() != s.tau || hp.beta() != s.beta) {
      const Matrix& psi = s.spectrum->eigenvectors;
      const Vector w = prior_weights(s.spectrum->eigenvalues, hp.tau(), hp.beta()).cwiseInverse();
      Matrix g = psi * w.asDiagonal() * psi.transpose();
      s.inverse_prior = 0.5 * (g + g.transpose());
      s.tau = hp.tau();
      s.beta = hp.beta();
    }
    const Matrix& g = s.inverse_prior;
    const double sigma2_omega = hp.sigma() * hp.sigma() * hp.omega();
    Vector var = g.diagonal();
    if (s.m > 0) {
      Matrix core = g.topLeftCorner(s.m, s.m);
      core.diagonal().array() += sigma2_omega;
      Eigen::LLT<Matrix> llt(core);
      if (llt.info() != Eigen::Success)
        throw Error(ErrorCode::SingularSystem, "observed block not positive definite");
      const Matrix gm = g.leftCols(s.m);
      const Matrix solved = llt.solve(gm.transpose()).transpose();
      var -= solved.cwiseProduct(gm).rowwise().sum();
    }
    var /= hp.omega();
    return var.cwiseMax(0.0).cwiseSqrt();
  };
}

inline StddevFunction truncated_stddev_function(std::shared_ptr<const Spectrum> spectrum, Index m) {
  return [spectrum = std::move(spectrum), m](const HyperParameters& hp) -> Vector {
    const TruncatedPosterior tp =
        truncated_posterior(spectrum, Matrix::Zero(m, 1), hp, m);
    return truncated_variances(tp).cwiseMax(0.0).cwiseSqrt();
  };
}

// ---------------------------------------------------------------------------
// Convergent regularization harness

struct RegularizationPath {
  std::vector<double> deltas;
  std::vector<double> omegas;
  std::vector<Matrix> iterates;
  Matrix limit;
  /// |Phi*_n - Phi*_inf|_F / |Phi*_inf|_F for each n.
  std::vector<double> relative_errors;
};

/// R(Theta) = <Theta, prior Theta>_F.
inline double regularizer(const Matrix& prior, const Matrix& theta) {
  return (theta.transpose() * prior * theta).trace();
}

/// argmin R(Theta) subject to the first M rows equal to `observed`: the
/// first M rows are eliminated and the SPD system in the remaining rows
/// solved.
inline Matrix constrained_minimizer(const Matrix& prior, const Matrix& observed) {
  const Index n = prior.rows();
  const Index m = observed.rows();
  detail::require(m >= 1 && m < n, ErrorCode::InvalidArgument, "need 1 <= M < N");
  const Matrix b22 = prior.bottomRightCorner(n - m, n - m);
  const Matrix b21 = prior.bottomLeftCorner(n - m, m);
  Eigen::LLT<Matrix> llt(b22);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::SingularSystem, "unobserved prior block not positive definite");
  Matrix theta(n, observed.cols());
  theta.topRows(m) = observed;
  theta.bottomRows(n - m) = -llt.solve(b21 * observed);
  return theta;
}

struct RegularizationSchedule {
  std::vector<double> deltas;  // strictly decreasing noise levels
  double omega_scale = 1.0;    // omega_n = omega_scale * delta_n^omega_exponent
  double omega_exponent = 1.0; // must be < 2
};

/// Solves the MAP problem (sigma fixed to 1) for perturbed observations
/// P Phi + E_n with |E_n|_F = delta_n along one fixed random direction, and
/// the constrained limit it should converge to.
inline RegularizationPath regularization_path(const GraphLaplacian& lap, const Matrix& observed,
                                              const RegularizationSchedule& schedule, double tau,
                                              double beta, std::uint64_t seed = 11) {
  if (!(schedule.omega_exponent < 2.0))
    throw Error(ErrorCode::InvalidSchedule, "omega exponent must be < 2 so delta^2/omega -> 0");
  detail::require(!schedule.deltas.empty(), ErrorCode::InvalidSchedule, "empty schedule");
  for (std::size_t i = 0; i < schedule.deltas.size(); ++i) {
    if (!(schedule.deltas[i] >= 0.0) || (i > 0 && !(schedule.deltas[i] < schedule.deltas[i - 1])))
      throw Error(ErrorCode::InvalidSchedule, "noise scales must be strictly decreasing");
  }
  const Matrix prior = prior_operator(lap, tau, beta);
  const Index m = observed.rows();
  Rng rng(seed);
  Matrix direction = rng.normal_matrix(m, observed.cols());
  direction /= direction.norm();

  RegularizationPath path;
  path.limit = constrained_minimizer(prior, observed);
  const double limit_norm = path.limit.norm();
  for (double delta : schedule.deltas) {
    const double omega = schedule.omega_scale * std::pow(delta, schedule.omega_exponent);
    const Matrix phi_hat = observed + delta * direction;
    PosteriorResult r = dense_map(prior, phi_hat, 1.0, omega, m, false);
    path.deltas.push_back(delta);
    path.omegas.push_back(omega);
    path.relative_errors.push_back((r.phi_star - path.limit).norm() / limit_norm);
    path.iterates.push_back(std::move(r.phi_star));
  }
  return path;
}

}  // namespace mfgl
