#pragma once

#include "mfgl/block_krylov.hpp"
#include "mfgl/core_types.hpp"
#include "mfgl/graph.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>

namespace mfgl {

struct SpectrumOptions {
  /// Dense symmetric eigensolve up to this N, block Krylov above.
  Index dense_threshold = 2000;
  /// Pairs whose residual exceeds this after the iteration budget fail.
  double failure_residual = 1e-6;
  BlockKrylovOptions krylov{};
};

/// Low-lying eigenpairs of L^(p,q), ascending. For p != q the vectors are
/// orthonormal in the D^(p-q) weighted inner product.
struct Spectrum {
  Vector eigenvalues;
  Matrix eigenvectors;  // N x K
  double shift_a = 0.0;
  double p = 0.5;
  double q = 0.5;
  Vector degrees;

  Index size() const noexcept { return eigenvalues.size(); }
  Index points() const noexcept { return eigenvectors.rows(); }
};

namespace detail {

/// Flips each column so its largest-magnitude entry (lowest index on ties)
/// is positive.
inline void fix_signs(Matrix& vectors) {
  for (Index c = 0; c < vectors.cols(); ++c) {
    Index arg = 0;
    double best = -1.0;
    for (Index i = 0; i < vectors.rows(); ++i) {
      const double mag = std::abs(vectors(i, c));
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    if (vectors(arg, c) < 0) vectors.col(c) *= -1.0;
  }
}

}  // namespace detail

/// K smallest eigenpairs of L, computed as the K largest of a*I - L_sym with
/// a = 2 max D_ii^(1-p-q), then mapped back through D^(-(p-q)/2).
inline Spectrum low_spectrum(const GraphLaplacian& lap, Index k, const SpectrumOptions& opt = {}) {
  const Index n = lap.size();
  detail::require(k >= 1 && k <= n, ErrorCode::InvalidArgument,
                  "spectrum size K must satisfy 1 <= K <= N");
  Spectrum s;
  s.p = lap.p();
  s.q = lap.q();
  s.degrees = lap.degrees();
  s.shift_a = lap.spectral_bound();
  const double a = s.shift_a;

  Matrix owned;
  if (!lap.is_symmetric()) owned = lap.symmetric_dense();
  const Matrix& lsym = lap.is_symmetric() ? lap.dense() : owned;
  Vector leading;
  Matrix vectors;
  if (n <= opt.dense_threshold) {
    Matrix shifted = -lsym;
    shifted.diagonal().array() += a;
    Eigen::SelfAdjointEigenSolver<Matrix> es(shifted);
    leading.resize(k);
    vectors.resize(n, k);
    for (Index c = 0; c < k; ++c) {
      leading(c) = es.eigenvalues()(n - 1 - c);
      vectors.col(c) = es.eigenvectors().col(n - 1 - c);
    }
  } else {
    BlockKrylovOptions kopt = opt.krylov;
    kopt.scale = a;
    auto apply = [&](const Matrix& x) -> Matrix {
      Matrix y = a * x;
      y.noalias() -= lsym * x;
      return y;
    };
    const EigenpairResult r = top_eigenpairs(apply, n, k, kopt);
    for (Index c = 0; c < k; ++c) {
      if (!(r.residuals(c) <= opt.failure_residual))
        throw Error(ErrorCode::ConvergenceFailure,
                    "eigenpair " + std::to_string(c) + " did not converge", c, r.residuals(c));
    }
    leading = r.values;
    vectors = r.vectors;
  }
  detail::fix_signs(vectors);
  s.eigenvalues = (a - leading.array()).matrix();
  if (lap.p() != lap.q()) {
    const double h = 0.5 * (lap.p() - lap.q());
    vectors = s.degrees.array().pow(-h).matrix().asDiagonal() * vectors;
  }
  s.eigenvectors = std::move(vectors);
  return s;
}

/// Row i holds point i's coordinates in the first m eigenvectors.
inline Matrix embed(const Spectrum& s, Index m) {
  detail::require(m >= 1 && m <= s.size(), ErrorCode::InsufficientSpectrum,
                  "embedding dimension exceeds spectrum size");
  return s.eigenvectors.leftCols(m);
}

/// (max(lambda, 0) + tau)^beta, elementwise.
inline Vector prior_weights(const Vector& eigenvalues, double tau, double beta) {
  return (eigenvalues.array().max(0.0) + tau).pow(beta).matrix();
}

/// Gaussian posterior over coefficients in the truncated eigenbasis.
struct TruncatedPosterior {
  Matrix coeff_mean;  // K x D
  Matrix coeff_cov;   // K x K
  std::shared_ptr<const Spectrum> spectrum;

  /// Phi* = Psi_K A*_K.
  Matrix map_displacements() const { return spectrum->eigenvectors * coeff_mean; }
};

inline TruncatedPosterior truncated_posterior(std::shared_ptr<const Spectrum> spectrum,
                                              const Matrix& phi_hat, const HyperParameters& hp,
                                              Index m) {
  detail::require(spectrum != nullptr && spectrum->size() >= 1, ErrorCode::InvalidArgument,
                  "empty spectrum");
  detail::require(phi_hat.rows() == m && m <= spectrum->points(), ErrorCode::RowCountMismatch,
                  "phi_hat must have M rows");
  detail::require(phi_hat.allFinite(), ErrorCode::NonFiniteInput, "phi_hat not finite");
  const double inv_var = 1.0 / (hp.sigma() * hp.sigma());
  const auto observed = spectrum->eigenvectors.topRows(m);
  Matrix precision = inv_var * (observed.transpose() * observed);
  precision.diagonal() += hp.omega() * prior_weights(spectrum->eigenvalues, hp.tau(), hp.beta());
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success || !precision.allFinite())
    throw Error(ErrorCode::SingularSystem, "coefficient precision is not positive definite");
  TruncatedPosterior tp;
  tp.coeff_cov = llt.solve(Matrix::Identity(precision.rows(), precision.cols()));
  tp.coeff_cov = 0.5 * (tp.coeff_cov + tp.coeff_cov.transpose()).eval();
  tp.coeff_mean = inv_var * llt.solve(observed.transpose() * phi_hat);
  tp.spectrum = std::move(spectrum);
  return tp;
}

/// diag(Psi_K C_A Psi_K^T) in O(N K^2).
inline Vector truncated_variances(const TruncatedPosterior& tp) {
  const Matrix& psi = tp.spectrum->eigenvectors;
  return (psi * tp.coeff_cov).cwiseProduct(psi).rowwise().sum();
}

}  // namespace mfgl
