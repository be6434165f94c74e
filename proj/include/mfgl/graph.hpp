#pragma once

#include "mfgl/core_types.hpp"
#include "mfgl/parallel.hpp"
#include "mfgl/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace mfgl {

inline constexpr Index kDefaultKnn = 7;
/// Largest N for which the dense N x N adjacency may be stored.
inline constexpr Index kDenseGraphLimit = 20000;
inline constexpr double kScaleFloor = 1e-14;

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline double squared_distance(const double* a, const double* b, Index dim) {
  double s = 0.0;
  for (Index k = 0; k < dim; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

/// Gaussian weight with the self-tuning scale l_ij^2 = l_i * l_j.
inline double kernel_weight(const RowMajorMatrix& pts, const Vector& scales, Index i, Index j) {
  if (i == j) return 0.0;
  const double d2 = squared_distance(pts.row(i).data(), pts.row(j).data(), pts.cols());
  return std::exp(-d2 / (scales(i) * scales(j)));
}

inline void check_degrees(const Vector& degrees) {
  for (Index i = 0; i < degrees.size(); ++i) {
    if (!(degrees(i) > 0.0))
      throw Error(ErrorCode::ZeroDegree, "node " + std::to_string(i) + " has zero degree", i,
                  degrees(i));
  }
}

}  // namespace detail

/// Distance from each point to its knn_k-th nearest neighbour (itself
/// excluded). Memory is O(N) per worker; the N x N distance matrix is never
/// formed.
inline Vector self_tuning_scales(const RowMajorMatrix& pts, Index knn_k) {
  const Index n = pts.rows();
  detail::require(n >= 2, ErrorCode::InvalidArgument, "need at least two points");
  detail::require(knn_k >= 1 && knn_k < n, ErrorCode::InvalidArgument,
                  "knn_k must satisfy 1 <= knn_k < N");
  Vector scales(n);
  parallel_for(
      0, n,
      [&](std::ptrdiff_t i) {
        thread_local std::vector<double> buf;
        buf.resize(static_cast<std::size_t>(n - 1));
        std::size_t c = 0;
        const double* xi = pts.row(i).data();
        for (Index j = 0; j < n; ++j) {
          if (j == i) continue;
          buf[c++] = detail::squared_distance(xi, pts.row(j).data(), pts.cols());
        }
        // The k-th smallest value is the same whichever tied neighbour is
        // taken, so lower-index tie-breaking needs no extra work here.
        auto kth = buf.begin() + (knn_k - 1);
        std::nth_element(buf.begin(), kth, buf.end());
        scales(i) = std::sqrt(*kth);
      },
      16);
  for (Index i = 0; i < n; ++i) {
    if (!(scales(i) >= kScaleFloor))
      throw Error(ErrorCode::DuplicatePointScale,
                  "point " + std::to_string(i) + " has at least knn_k exact duplicates", i,
                  scales(i));
  }
  return scales;
}

inline Vector self_tuning_scales(const Matrix& points, Index knn_k) {
  return self_tuning_scales(RowMajorMatrix(points), knn_k);
}

/// Complete weighted graph over the low-fidelity points.
struct AffinityGraph {
  Matrix weights;  // symmetric, zero diagonal
  Vector degrees;  // row sums of weights, all > 0
  Vector scales;   // self-tuning scale per point
  Index knn_k = kDefaultKnn;

  Index size() const noexcept { return weights.rows(); }
};

inline AffinityGraph build_graph(const Matrix& lf, Index knn_k = kDefaultKnn) {
  const Index n = lf.rows();
  detail::require(n <= kDenseGraphLimit, ErrorCode::DenseLimitExceeded,
                  "dense graph limited to N <= " + std::to_string(kDenseGraphLimit) +
                      "; use the Nystrom path");
  detail::require(lf.allFinite(), ErrorCode::NonFiniteInput, "points contain NaN or Inf");
  const RowMajorMatrix pts(lf);
  AffinityGraph g;
  g.knn_k = knn_k;
  g.scales = self_tuning_scales(pts, knn_k);
  g.weights.resize(n, n);
  parallel_for(
      0, n,
      [&](std::ptrdiff_t j) {
        for (Index i = 0; i < n; ++i) g.weights(i, j) = detail::kernel_weight(pts, g.scales, i, j);
      },
      16);
  g.degrees = g.weights.rowwise().sum();
  detail::check_degrees(g.degrees);
  return g;
}

/// The normalized family L = D^-p (D - W) D^-q over a shared graph. The dense
/// matrix is materialized on first request and cached.
class GraphLaplacian {
 public:
  GraphLaplacian(std::shared_ptr<const AffinityGraph> graph, double p, double q)
      : graph_(std::move(graph)), p_(p), q_(q), cache_(std::make_shared<Cache>()) {
    detail::require(graph_ != nullptr, ErrorCode::InvalidArgument, "null graph");
    detail::check_degrees(graph_->degrees);
  }

  const AffinityGraph& graph() const noexcept { return *graph_; }
  const std::shared_ptr<const AffinityGraph>& graph_ptr() const noexcept { return graph_; }
  const Vector& degrees() const noexcept { return graph_->degrees; }
  double p() const noexcept { return p_; }
  double q() const noexcept { return q_; }
  Index size() const noexcept { return graph_->size(); }
  bool is_symmetric() const noexcept { return p_ == q_; }

  /// a = 2 max_i D_ii^(1-p-q); the spectrum lies in [0, a].
  double spectral_bound() const {
    return 2.0 * degrees().array().pow(1.0 - p_ - q_).maxCoeff();
  }

  const Matrix& dense() const {
    std::call_once(cache_->once, [this] { cache_->matrix = assemble(p_, q_); });
    return cache_->matrix;
  }

  /// The similar symmetric Laplacian with both exponents (p+q)/2.
  Matrix symmetric_dense() const {
    if (is_symmetric()) return dense();
    const double s = 0.5 * (p_ + q_);
    return assemble(s, s);
  }

  /// L * X without forming L.
  Matrix apply(const Matrix& x) const {
    const Vector& d = degrees();
    const Matrix right = d.array().pow(-q_).matrix().asDiagonal() * x;
    Matrix out = d.asDiagonal() * right;
    out.noalias() -= graph_->weights * right;
    return d.array().pow(-p_).matrix().asDiagonal() * out;
  }

 private:
  struct Cache {
    std::once_flag once;
    Matrix matrix;
  };

  Matrix assemble(double p, double q) const {
    const Matrix& w = graph_->weights;
    const Vector& d = degrees();
    const Index n = size();
    const Vector left = d.array().pow(-p);
    const Vector right = d.array().pow(-q);
    Matrix l(n, n);
    parallel_for(
        0, n,
        [&](std::ptrdiff_t j) {
          for (Index i = 0; i < n; ++i) l(i, j) = -left(i) * w(i, j) * right(j);
          l(j, j) = left(j) * (d(j) - w(j, j)) * right(j);
        },
        16);
    if (p == q) {
      // Mirror the upper triangle so the result is exactly symmetric.
      for (Index j = 0; j < n; ++j)
        for (Index i = j + 1; i < n; ++i) l(i, j) = l(j, i);
    }
    return l;
  }

  std::shared_ptr<const AffinityGraph> graph_;
  double p_;
  double q_;
  std::shared_ptr<Cache> cache_;
};

inline GraphLaplacian laplacian(std::shared_ptr<const AffinityGraph> graph, double p, double q) {
  return GraphLaplacian(std::move(graph), p, q);
}

inline GraphLaplacian laplacian(AffinityGraph graph, double p, double q) {
  return GraphLaplacian(std::make_shared<const AffinityGraph>(std::move(graph)), p, q);
}

/// u^T D^(p-q) v.
inline double weighted_inner(const Vector& u, const Vector& v, const Vector& degrees, double p,
                             double q) {
  detail::require(u.size() == v.size() && u.size() == degrees.size(),
                  ErrorCode::DimensionMismatch, "weighted_inner: length mismatch");
  if (p == q) return u.dot(v);
  return (u.array() * degrees.array().pow(p - q) * v.array()).sum();
}

inline double weighted_inner(const Vector& u, const Vector& v, const AffinityGraph& graph,
                             double p, double q) {
  return weighted_inner(u, v, graph.degrees, p, q);
}

/// tr(A^T D^(p-q) B).
inline double weighted_frobenius(const Matrix& a, const Matrix& b, const Vector& degrees,
                                 double p, double q) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols() && a.rows() == degrees.size(),
                  ErrorCode::DimensionMismatch, "weighted_frobenius: shape mismatch");
  if (p == q) return (a.array() * b.array()).sum();
  return (degrees.array().pow(p - q).matrix().asDiagonal() * a).cwiseProduct(b).sum();
}

/// Max over random pairs of |<u, Lv> - <v, Lu>| / (|u| |v|) in the D^(p-q)
/// weighted inner product. `op` may be any square matrix.
inline double self_adjointness_check(const Matrix& op, const Vector& degrees, double p, double q,
                                     int trials, std::uint64_t seed = 7) {
  detail::require(op.rows() == op.cols() && op.rows() == degrees.size(),
                  ErrorCode::DimensionMismatch, "self_adjointness_check: shape mismatch");
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Vector u = rng.normal_matrix(op.rows(), 1);
    const Vector v = rng.normal_matrix(op.rows(), 1);
    const Vector lu = op * u;
    const Vector lv = op * v;
    const double diff =
        std::abs(weighted_inner(u, lv, degrees, p, q) - weighted_inner(v, lu, degrees, p, q));
    worst = std::max(worst, diff / (u.norm() * v.norm()));
  }
  return worst;
}

inline double self_adjointness_check(const GraphLaplacian& l, int trials, std::uint64_t seed = 7) {
  return self_adjointness_check(l.dense(), l.degrees(), l.p(), l.q(), trials, seed);
}

/// Column access to W built from data: only W(:, X) is ever materialized.
class KernelWeightSource {
 public:
  KernelWeightSource(const Matrix& points, Index knn_k = kDefaultKnn)
      : points_(points), scales_(self_tuning_scales(points_, knn_k)) {}

  Index size() const noexcept { return points_.rows(); }
  const Vector& scales() const noexcept { return scales_; }

  Matrix columns(std::span<const Index> idx) const {
    const Index n = size();
    const auto k = static_cast<Index>(idx.size());
    Matrix out(n, k);
    parallel_for(
        0, n,
        [&](std::ptrdiff_t i) {
          for (Index c = 0; c < k; ++c) out(i, c) = detail::kernel_weight(points_, scales_, i, idx[c]);
        },
        256);
    return out;
  }

 private:
  RowMajorMatrix points_;
  Vector scales_;
};

/// Column access backed by an explicit dense W (tests, small problems).
class DenseWeightSource {
 public:
  explicit DenseWeightSource(Matrix weights) : weights_(std::move(weights)) {}

  Index size() const noexcept { return weights_.rows(); }

  Matrix columns(std::span<const Index> idx) const {
    Matrix out(weights_.rows(), static_cast<Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) out.col(static_cast<Index>(c)) = weights_.col(idx[c]);
    return out;
  }

 private:
  Matrix weights_;
};

}  // namespace mfgl
