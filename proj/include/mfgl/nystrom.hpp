#pragma once

#include "mfgl/core_types.hpp"
#include "mfgl/graph.hpp"
#include "mfgl/krylov_solvers.hpp"
#include "mfgl/parallel.hpp"
#include "mfgl/posterior.hpp"
#include "mfgl/random.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace mfgl {

inline constexpr double kPseudoInverseCutoff = 1e-12;
inline constexpr double kXiDropTolerance = 1e-10;
/// Reciprocal condition estimate below which the Woodbury core is singular.
inline constexpr double kCapacitanceRcond = 1e-14;

/// The first M indices plus k - M distinct others drawn uniformly, ascending.
inline std::vector<Index> select_landmarks(Index n, Index m, Index k, std::uint64_t seed) {
  detail::require(m >= 1 && m <= k && k <= n, ErrorCode::InvalidArgument,
                  "landmarks need 1 <= M <= K <= N");
  std::vector<Index> pool(static_cast<std::size_t>(n - m));
  for (Index i = m; i < n; ++i) pool[static_cast<std::size_t>(i - m)] = i;
  Rng rng(seed);
  const auto extra = static_cast<std::size_t>(k - m);
  for (std::size_t i = 0; i < extra; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(k));
  for (Index i = 0; i < m; ++i) out.push_back(i);
  std::sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(extra));
  out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(extra));
  return out;
}

/// Rank-K approximation I - L_sym ~= U_tilde Sigma U_tilde^T from W(:, X).
/// For p + q = 1 the non-symmetric factors satisfy
/// I - L ~= U Sigma V^T with V^T U = I.
struct LowRankLaplacian {
  std::vector<Index> landmarks;
  Matrix u_tilde;  // N x K, orthonormal columns
  Matrix u;        // D_hat^(1/2-p) U_tilde
  Matrix v;        // D_hat^(p-1/2) U_tilde
  Vector sigma;    // descending
  Vector d_hat;
  double p = 0.5;

  Index size() const noexcept { return d_hat.size(); }
  Index rank() const noexcept { return sigma.size(); }
  /// Approximate eigenvalues of L, ascending.
  Vector laplacian_eigenvalues() const { return (1.0 - sigma.array()).matrix(); }
};

struct NystromOptions {
  /// Keep only the r largest-magnitude eigenvalues of W(X, X).
  std::optional<Index> rank_r;
  double pinv_cutoff = kPseudoInverseCutoff;
  /// When > 0, X must contain at least one index below this.
  Index observed = 0;
};

namespace detail {

inline void check_landmarks(std::span<const Index> x, Index n, Index observed) {
  detail::require(!x.empty() && static_cast<Index>(x.size()) <= n, ErrorCode::InvalidArgument,
                  "landmark count must satisfy 1 <= K <= N");
  std::vector<Index> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  detail::require(sorted.front() >= 0 && sorted.back() < n, ErrorCode::InvalidArgument,
                  "landmark index out of range");
  detail::require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
                  ErrorCode::InvalidArgument, "landmarks must be distinct");
  if (observed > 0)
    detail::require(sorted.front() < observed, ErrorCode::InvalidArgument,
                    "landmarks must include a high-fidelity point");
}

}  // namespace detail

/// Nystrom-QR factorization. `source.columns(X)` must return W(:, X); the
/// full W is never requested.
template <class WeightSource>
LowRankLaplacian nystrom_general_p(const WeightSource& source, std::span<const Index> x, double p,
                                   const NystromOptions& opt = {}) {
  const Index n = source.size();
  detail::check_landmarks(x, n, opt.observed);
  const auto k = static_cast<Index>(x.size());

  Matrix c = source.columns(x);
  Matrix wxx(k, k);
  for (Index a = 0; a < k; ++a) wxx.row(a) = c.row(x[static_cast<std::size_t>(a)]);
  wxx = 0.5 * (wxx + wxx.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> es(wxx);
  const Vector& lam = es.eigenvalues();
  const double scale = lam.cwiseAbs().maxCoeff();
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw Error(ErrorCode::SingularLandmarkBlock, "W(X, X) is numerically zero");
  std::vector<Index> keep;
  for (Index i = 0; i < k; ++i)
    if (std::abs(lam(i)) > opt.pinv_cutoff * scale) keep.push_back(i);
  if (opt.rank_r) {
    detail::require(*opt.rank_r >= 1, ErrorCode::InvalidArgument, "rank_r must be >= 1");
    std::stable_sort(keep.begin(), keep.end(),
                     [&](Index a, Index b) { return std::abs(lam(a)) > std::abs(lam(b)); });
    if (static_cast<Index>(keep.size()) > *opt.rank_r) keep.resize(static_cast<std::size_t>(*opt.rank_r));
  }
  Matrix kept_vectors(k, static_cast<Index>(keep.size()));
  Vector kept_inv(static_cast<Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    kept_vectors.col(static_cast<Index>(j)) = es.eigenvectors().col(keep[j]);
    kept_inv(static_cast<Index>(j)) = 1.0 / lam(keep[j]);
  }
  Matrix pinv = kept_vectors * kept_inv.asDiagonal() * kept_vectors.transpose();
  pinv = 0.5 * (pinv + pinv.transpose()).eval();

  LowRankLaplacian lr;
  lr.p = p;
  lr.landmarks.assign(x.begin(), x.end());
  lr.d_hat = c * (pinv * (c.transpose() * Vector::Ones(n)));
  for (Index i = 0; i < n; ++i) {
    if (!(lr.d_hat(i) > 0.0))
      throw Error(ErrorCode::NegativeApproxDegree,
                  "approximate degree of node " + std::to_string(i) +
                      " is not positive; increase K or resample landmarks",
                  i, lr.d_hat(i));
  }

  c = lr.d_hat.cwiseSqrt().cwiseInverse().asDiagonal() * c;
  Eigen::HouseholderQR<Matrix> qr(c);
  const Matrix q = qr.householderQ() * Matrix::Identity(n, k);
  const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  c.resize(0, 0);

  Matrix small = r * pinv * r.transpose();
  small = 0.5 * (small + small.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> inner(small);
  const Matrix gamma = inner.eigenvectors().rowwise().reverse();
  lr.sigma = inner.eigenvalues().reverse();
  lr.u_tilde = q * gamma;

  if (p == 0.5) {
    lr.u = lr.u_tilde;
    lr.v = lr.u_tilde;
  } else {
    const Vector s = lr.d_hat.array().pow(0.5 - p).matrix();
    lr.u = s.asDiagonal() * lr.u_tilde;
    lr.v = s.cwiseInverse().asDiagonal() * lr.u_tilde;
  }
  return lr;
}

template <class WeightSource>
LowRankLaplacian nystrom_factor(const WeightSource& source, std::span<const Index> x,
                                const NystromOptions& opt = {}) {
  return nystrom_general_p(source, x, 0.5, opt);
}

/// (1+tau)^beta x + U_tilde (((1+tau) - Sigma)^beta - (1+tau)^beta) U_tilde^T x,
/// the low-rank approximation of (L_sym + tau I)^beta applied to x.
inline Matrix apply_low_rank_prior(const LowRankLaplacian& lr, double tau, double beta,
                                   const Matrix& x) {
  const double base = std::pow(1.0 + tau, beta);
  const Vector diff =
      ((1.0 + tau - lr.sigma.array()).max(0.0).pow(beta) - base).matrix();
  return base * x + lr.u_tilde * (diff.asDiagonal() * (lr.u_tilde.transpose() * x));
}

/// Diagonal pieces of sigma^2 A ~= Theta - V Xi V^T.
struct SaddleOperators {
  Vector theta;  // N
  Vector xi;     // retained columns only
  Matrix v;      // N x K_retained
  std::vector<Index> dropped_columns;
  double sigma2 = 1.0;

  Index size() const noexcept { return theta.size(); }
  Index rank() const noexcept { return xi.size(); }
};

/// a^beta - (a - s)^beta without cancellation for small s.
inline double power_gap(double a, double s, double beta) {
  if (beta == 1.0) return s;
  return -std::pow(a, beta) * std::expm1(beta * std::log1p(-s / a));
}

inline SaddleOperators build_saddle(const LowRankLaplacian& lr, const HyperParameters& hp,
                                    Index m) {
  const Index n = lr.size();
  detail::require(m >= 0 && m <= n, ErrorCode::InvalidArgument, "need 0 <= M <= N");
  const double tau = hp.tau();
  const double beta = hp.beta();
  const double sw = hp.sigma() * hp.sigma() * hp.omega();
  const double a = 1.0 + tau;

  SaddleOperators ops;
  ops.sigma2 = hp.sigma() * hp.sigma();
  ops.theta = Vector::Constant(n, sw * std::pow(a, beta));
  if (lr.p != 0.5) ops.theta.array() *= lr.d_hat.array().pow(2.0 * lr.p - 1.0);
  ops.theta.head(m).array() += 1.0;

  const Index k = lr.rank();
  Vector xi = Vector::Zero(k);
  double largest = 0.0;
  for (Index i = 0; i < k; ++i) {
    if (lr.sigma(i) > a) continue;
    xi(i) = sw * power_gap(a, lr.sigma(i), beta);
    largest = std::max(largest, std::abs(xi(i)));
  }
  std::vector<Index> kept;
  for (Index i = 0; i < k; ++i) {
    if (lr.sigma(i) > a || !(std::abs(xi(i)) > kXiDropTolerance * largest))
      ops.dropped_columns.push_back(i);
    else
      kept.push_back(i);
  }
  ops.xi.resize(static_cast<Index>(kept.size()));
  ops.v.resize(n, static_cast<Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) {
    ops.xi(static_cast<Index>(j)) = xi(kept[j]);
    ops.v.col(static_cast<Index>(j)) = lr.v.col(kept[j]);
  }
  return ops;
}

/// (Theta - V Xi V^T) x.
inline Matrix saddle_apply(const SaddleOperators& ops, const Matrix& x) {
  Matrix out = ops.theta.asDiagonal() * x;
  if (ops.rank() > 0) out.noalias() -= ops.v * (ops.xi.asDiagonal() * (ops.v.transpose() * x));
  return out;
}

/// Precomputed Theta^-1 V and the LU of (Xi^-1 - V^T Theta^-1 V) for
/// O(N K) applications of (Theta - V Xi V^T)^-1.
class WoodburyCore {
 public:
  explicit WoodburyCore(const SaddleOperators& ops)
      : theta_inv_(ops.theta.cwiseInverse()), sigma2_(ops.sigma2) {
    theta_inv_v_ = theta_inv_.asDiagonal() * ops.v;
    if (ops.rank() == 0) return;
    Matrix core = -(ops.v.transpose() * theta_inv_v_);
    core.diagonal() += ops.xi.cwiseInverse();
    lu_.compute(core);
    const double rc = lu_.rcond();
    if (!(rc > kCapacitanceRcond))
      throw Error(ErrorCode::SingularCapacitance, "Woodbury core is numerically singular",
                  std::nullopt, rc);
  }

  Index rank() const noexcept { return theta_inv_v_.cols(); }

  /// (Theta - V Xi V^T)^-1 b.
  Matrix solve(const Matrix& b) const {
    Matrix x = theta_inv_.asDiagonal() * b;
    if (rank() > 0) x.noalias() += theta_inv_v_ * lu_.solve(theta_inv_v_.transpose() * b);
    return x;
  }

  /// C v = sigma^2 (Theta - V Xi V^T)^-1 v.
  Matrix covariance_apply(const Matrix& v) const { return sigma2_ * solve(v); }

  /// diag(C) from the explicit Woodbury form.
  Vector covariance_diagonal() const {
    Vector d = theta_inv_;
    if (rank() > 0) {
      const Matrix core_inv = lu_.inverse();
      d += (theta_inv_v_ * core_inv).cwiseProduct(theta_inv_v_).rowwise().sum();
    }
    return sigma2_ * d;
  }

 private:
  Vector theta_inv_;
  Matrix theta_inv_v_;
  Eigen::PartialPivLU<Matrix> lu_;
  double sigma2_;
};

/// C^-1 v = (Theta - V Xi V^T) v / sigma^2.
inline Matrix precision_apply(const SaddleOperators& ops, const Matrix& v) {
  return saddle_apply(ops, v) / ops.sigma2;
}

inline Matrix covariance_matvec(const SaddleOperators& ops, const Matrix& v) {
  return WoodburyCore(ops).covariance_apply(v);
}

enum class SaddleMethod { SymmetricSaddle, UnsymmetricSaddle, Woodbury };

inline std::string_view to_string(SaddleMethod m) {
  switch (m) {
    case SaddleMethod::SymmetricSaddle: return "symmetric";
    case SaddleMethod::UnsymmetricSaddle: return "unsymmetric";
    case SaddleMethod::Woodbury: return "woodbury";
  }
  return "unknown";
}

/// Woodbury up to 64 right-hand sides, where the K x K core amortizes.
inline SaddleMethod default_saddle_method(Index rhs_columns) {
  return rhs_columns <= 64 ? SaddleMethod::Woodbury : SaddleMethod::SymmetricSaddle;
}

struct SaddleSolveOptions {
  double tolerance = 1e-12;
  /// Accepted when the iteration cap is reached first.
  double fallback_tolerance = 1e-10;
  /// 0 means 10 (K + 1).
  int max_iterations = 0;
};

struct SaddleSolveInfo {
  std::vector<int> iterations;
  std::vector<double> residuals;
};

namespace detail {

inline KrylovResult saddle_column(const SaddleOperators& ops, const Vector& rhs,
                                  SaddleMethod method, const KrylovOptions& kopt) {
  const Index n = ops.size();
  const Index k = ops.rank();
  Vector b = Vector::Zero(n + k);
  b.head(n) = rhs;
  const Vector x0 = Vector::Zero(n + k);
  if (method == SaddleMethod::SymmetricSaddle) {
    // [[Theta, V], [V^T, Xi^-1]] with SPD preconditioner diag(Theta, |Xi|^-1).
    const Vector xi_inv = ops.xi.cwiseInverse();
    const Vector prec_tail = ops.xi.cwiseAbs();
    auto apply = [&](const Vector& z) -> Vector {
      Vector out(n + k);
      out.head(n) = ops.theta.cwiseProduct(z.head(n)) + ops.v * z.tail(k);
      out.tail(k) = ops.v.transpose() * z.head(n) + xi_inv.cwiseProduct(z.tail(k));
      return out;
    };
    auto prec = [&](const Vector& z) -> Vector {
      Vector out(n + k);
      out.head(n) = z.head(n).cwiseQuotient(ops.theta);
      out.tail(k) = prec_tail.cwiseProduct(z.tail(k));
      return out;
    };
    return minres(apply, prec, b, x0, kopt);
  }
  // [[Theta, V], [Xi V^T, I]], right-preconditioned by diag(Theta, I).
  auto apply = [&](const Vector& z) -> Vector {
    Vector out(n + k);
    out.head(n) = ops.theta.cwiseProduct(z.head(n)) + ops.v * z.tail(k);
    out.tail(k) = ops.xi.cwiseProduct(ops.v.transpose() * z.head(n)) + z.tail(k);
    return out;
  };
  auto prec = [&](const Vector& z) -> Vector {
    Vector out = z;
    out.head(n) = z.head(n).cwiseQuotient(ops.theta);
    return out;
  };
  return gmres(apply, prec, b, x0, kopt);
}

}  // namespace detail

/// Solves (Theta - V Xi V^T) Phi = P_M^T phi_hat.
inline Matrix solve_map_saddle(const SaddleOperators& ops, const Matrix& phi_hat,
                               SaddleMethod method, const SaddleSolveOptions& opt = {},
                               SaddleSolveInfo* info = nullptr) {
  const Index n = ops.size();
  detail::require(phi_hat.rows() <= n, ErrorCode::RowCountMismatch,
                  "phi_hat has more rows than points");
  detail::require(phi_hat.allFinite(), ErrorCode::NonFiniteInput, "phi_hat not finite");
  const Matrix rhs = lift_observed(phi_hat, n);
  if (method == SaddleMethod::Woodbury || ops.rank() == 0) return WoodburyCore(ops).solve(rhs);

  KrylovOptions kopt;
  kopt.tolerance = opt.tolerance;
  kopt.max_iterations =
      opt.max_iterations > 0 ? opt.max_iterations : static_cast<int>(10 * (ops.rank() + 1));
  kopt.restart = static_cast<int>(std::min<Index>(kopt.max_iterations, 2 * ops.rank() + 20));

  const Index d = rhs.cols();
  Matrix out(n, d);
  std::vector<KrylovResult> results(static_cast<std::size_t>(d));
  parallel_for(
      0, d,
      [&](std::ptrdiff_t c) {
        results[static_cast<std::size_t>(c)] =
            detail::saddle_column(ops, rhs.col(c), method, kopt);
      },
      1);
  for (Index c = 0; c < d; ++c) {
    const KrylovResult& r = results[static_cast<std::size_t>(c)];
    if (!r.converged && !(r.relative_residual <= opt.fallback_tolerance))
      throw Error(ErrorCode::IterativeDivergence,
                  std::string(to_string(method)) + " solve stalled on column " +
                      std::to_string(c),
                  c, r.relative_residual);
    out.col(c) = r.x.head(n);
    if (info) {
      info->iterations.push_back(r.iterations);
      info->residuals.push_back(r.relative_residual);
    }
  }
  return out;
}

inline Matrix solve_map_saddle(const LowRankLaplacian& lr, const SaddleOperators& ops,
                               const Matrix& phi_hat, SaddleMethod method,
                               const SaddleSolveOptions& opt = {}) {
  detail::require(lr.size() == ops.size(), ErrorCode::DimensionMismatch,
                  "saddle operators do not match the factorization");
  return solve_map_saddle(ops, phi_hat, method, opt);
}

/// Posterior standard deviations on the Nystrom path, for calibration.
inline StddevFunction nystrom_stddev_function(std::shared_ptr<const LowRankLaplacian> lr,
                                              Index m) {
  return [lr = std::move(lr), m](const HyperParameters& hp) -> Vector {
    const SaddleOperators ops = build_saddle(*lr, hp, m);
    return WoodburyCore(ops).covariance_diagonal().cwiseMax(0.0).cwiseSqrt();
  };
}

}  // namespace mfgl
