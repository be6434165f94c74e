#pragma once

#include "mfgl/core_types.hpp"
#include "mfgl/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace mfgl {

struct BlockKrylovOptions {
  Index oversample = 10;
  /// Krylov blocks per restart cycle (in addition to the start block).
  Index depth = 4;
  int max_cycles = 400;
  /// Residual target relative to `scale`.
  double tolerance = 1e-11;
  /// Upper bound on the operator norm, used to scale the tolerance.
  double scale = 1.0;
  std::uint64_t seed = 0x5eed;
};

struct EigenpairResult {
  Vector values;     // descending
  Matrix vectors;    // orthonormal columns
  Vector residuals;  // |A y - theta y| per pair
  int cycles = 0;
};

namespace detail {

/// Orthonormalizes `z` against the orthonormal columns of `basis` and within
/// itself (two projection passes).
inline Matrix orthonormalize_against(const Matrix& basis, Matrix z) {
  for (int pass = 0; pass < 2; ++pass) {
    if (basis.cols() > 0) z.noalias() -= basis * (basis.transpose() * z);
    Eigen::HouseholderQR<Matrix> qr(z);
    z = qr.householderQ() * Matrix::Identity(z.rows(), z.cols());
  }
  return z;
}

}  // namespace detail

/// Leading eigenpairs of a symmetric positive semidefinite operator by
/// restarted block Krylov iteration with Rayleigh-Ritz extraction. `apply`
/// maps an n x b block X to A X.
template <class ApplyBlock>
EigenpairResult top_eigenpairs(ApplyBlock&& apply, Index n, Index k,
                               const BlockKrylovOptions& opt = {}) {
  detail::require(k >= 1 && k <= n, ErrorCode::InvalidArgument, "need 1 <= k <= n");
  const Index block = std::min(n, k + opt.oversample);
  EigenpairResult result;
  if (2 * block > n) {
    // Too small for a Krylov space; diagonalize the explicit operator.
    Matrix dense = apply(Matrix(Matrix::Identity(n, n)));
    dense = 0.5 * (dense + dense.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(dense);
    result.values.resize(k);
    result.vectors.resize(n, k);
    for (Index c = 0; c < k; ++c) {
      result.values(c) = es.eigenvalues()(n - 1 - c);
      result.vectors.col(c) = es.eigenvectors().col(n - 1 - c);
    }
    result.residuals = (dense * result.vectors - result.vectors * result.values.asDiagonal())
                           .colwise()
                           .norm()
                           .transpose();
    return result;
  }
  const Index depth = std::max<Index>(1, std::min(opt.depth, n / block - 1));

  Rng rng(opt.seed);
  Matrix start = detail::orthonormalize_against(Matrix(n, 0), rng.normal_matrix(n, block));

  for (int cycle = 1; cycle <= opt.max_cycles; ++cycle) {
    const Index blocks = depth + 1;
    Matrix basis(n, block * blocks);
    Matrix image(n, block * blocks);
    basis.leftCols(block) = start;
    for (Index j = 0; j < blocks; ++j) {
      image.middleCols(j * block, block) = apply(Matrix(basis.middleCols(j * block, block)));
      if (j + 1 < blocks) {
        basis.middleCols((j + 1) * block, block) = detail::orthonormalize_against(
            basis.leftCols((j + 1) * block), image.middleCols(j * block, block));
      }
    }
    Matrix projected = basis.transpose() * image;
    projected = 0.5 * (projected + projected.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(projected);
    const Index total = projected.rows();
    // Eigen returns ascending values; take the top `block` in descending order.
    Matrix coeffs(total, block);
    Vector theta(block);
    for (Index c = 0; c < block; ++c) {
      coeffs.col(c) = es.eigenvectors().col(total - 1 - c);
      theta(c) = es.eigenvalues()(total - 1 - c);
    }
    Matrix ritz = basis * coeffs;
    Matrix ritz_image = image * coeffs;
    Vector residuals(k);
    for (Index c = 0; c < k; ++c)
      residuals(c) = (ritz_image.col(c) - theta(c) * ritz.col(c)).norm();

    result.values = theta.head(k);
    result.vectors = ritz.leftCols(k);
    result.residuals = residuals;
    result.cycles = cycle;
    if (residuals.maxCoeff() <= opt.tolerance * opt.scale) break;
    start = detail::orthonormalize_against(Matrix(n, 0), std::move(ritz));
  }
  return result;
}

}  // namespace mfgl
