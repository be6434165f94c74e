#pragma once

// Independent reference computations used only by the tests. Each one takes
// the most direct route to the answer, sharing no code with the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline Matrix random_points(Index n, Index d, unsigned seed, double spread = 1.0) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd(0.0, spread);
  Matrix x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = nd(gen);
  return x;
}

/// Points in well-separated groups; group g gets rows i with i % groups == g.
inline Matrix grouped_points(Index n, Index d, Index groups, double separation, double spread,
                             unsigned seed) {
  Matrix x = random_points(n, d, seed, spread);
  for (Index i = 0; i < n; ++i) x(i, 0) += separation * static_cast<double>(i % groups);
  return x;
}

/// W from full sorted distance lists.
inline Matrix weights(const Matrix& x, Index knn) {
  const Index n = x.rows();
  Vector ell(n);
  for (Index i = 0; i < n; ++i) {
    std::vector<double> d;
    for (Index j = 0; j < n; ++j)
      if (j != i) d.push_back((x.row(i) - x.row(j)).norm());
    std::sort(d.begin(), d.end());
    ell(i) = d[static_cast<std::size_t>(knn - 1)];
  }
  Matrix w = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j) {
        const double lij = std::sqrt(ell(i) * ell(j));
        w(i, j) = std::exp(-(x.row(i) - x.row(j)).squaredNorm() / (lij * lij));
      }
  return w;
}

/// L = D^-p (D - W) D^-q entry by entry.
inline Matrix laplacian(const Matrix& w, double p, double q) {
  const Index n = w.rows();
  const Vector d = w.rowwise().sum();
  Matrix l(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      l(i, j) = std::pow(d(i), -p) * ((i == j ? d(i) : 0.0) - w(i, j)) * std::pow(d(j), -q);
  return l;
}

/// D^(p-q) (L + tau I)^beta for integer beta, by plain repeated products of
/// the (possibly non-symmetric) L.
inline Matrix prior(const Matrix& w, double p, double q, double tau, int beta) {
  const Index n = w.rows();
  const Matrix l = laplacian(w, p, q) + tau * Matrix::Identity(n, n);
  Matrix pw = Matrix::Identity(n, n);
  for (int k = 0; k < beta; ++k) pw = pw * l;
  const Vector d = w.rowwise().sum();
  return d.array().pow(p - q).matrix().asDiagonal() * pw;
}

struct Posterior {
  Matrix map;
  Matrix cov;
};

/// Dense MAP and covariance by full-pivot LU of the precision matrix.
inline Posterior posterior(const Matrix& b, const Matrix& phi_hat, double sigma, double omega) {
  const Index n = b.rows();
  const Index m = phi_hat.rows();
  Matrix a = omega * b;
  for (Index i = 0; i < m; ++i) a(i, i) += 1.0 / (sigma * sigma);
  Matrix rhs = Matrix::Zero(n, phi_hat.cols());
  rhs.topRows(m) = phi_hat / (sigma * sigma);
  Eigen::FullPivLU<Matrix> lu(a);
  return {lu.solve(rhs), lu.inverse()};
}

/// Minimizer of |P Theta - phi_hat|^2 / (2 sigma^2) + (omega / 2) <Theta, B Theta>
/// by gradient descent with a fixed step 1 / Lipschitz bound.
inline Matrix gradient_descent(const Matrix& b, const Matrix& phi_hat, double sigma, double omega,
                               int iterations) {
  const Index n = b.rows();
  const Index m = phi_hat.rows();
  const Matrix bs = 0.5 * (b + b.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(bs);
  const double lip = 1.0 / (sigma * sigma) + omega * es.eigenvalues().maxCoeff();
  Matrix theta = Matrix::Zero(n, phi_hat.cols());
  for (int it = 0; it < iterations; ++it) {
    Matrix grad = omega * bs * theta;
    grad.topRows(m) += (theta.topRows(m) - phi_hat) / (sigma * sigma);
    theta -= grad / lip;
  }
  return theta;
}

/// Equality-constrained minimizer of <Theta, B Theta> with P Theta = observed,
/// from the full KKT system.
inline Matrix kkt_minimizer(const Matrix& b, const Matrix& observed) {
  const Index n = b.rows();
  const Index m = observed.rows();
  Matrix k = Matrix::Zero(n + m, n + m);
  k.topLeftCorner(n, n) = b + b.transpose();
  for (Index i = 0; i < m; ++i) {
    k(i, n + i) = 1.0;
    k(n + i, i) = 1.0;
  }
  Matrix rhs = Matrix::Zero(n + m, observed.cols());
  rhs.bottomRows(m) = observed;
  return Eigen::FullPivLU<Matrix>(k).solve(rhs).topRows(n);
}

inline double wcss(const Matrix& pts, const std::vector<Index>& assignment, Index k) {
  Matrix c = Matrix::Zero(k, pts.cols());
  Vector count = Vector::Zero(k);
  for (Index i = 0; i < pts.rows(); ++i) {
    c.row(assignment[static_cast<std::size_t>(i)]) += pts.row(i);
    count(assignment[static_cast<std::size_t>(i)]) += 1.0;
  }
  double s = 0.0;
  for (Index g = 0; g < k; ++g)
    if (count(g) > 0) c.row(g) /= count(g);
  for (Index i = 0; i < pts.rows(); ++i)
    s += (pts.row(i) - c.row(assignment[static_cast<std::size_t>(i)])).squaredNorm();
  return s;
}

/// Projector onto the span of the columns.
inline Matrix projector(const Matrix& v) {
  return v * (v.transpose() * v).inverse() * v.transpose();
}

inline double rel(const Matrix& a, const Matrix& b) {
  const double den = b.norm();
  return den == 0.0 ? a.norm() : (a - b).norm() / den;
}

}  // namespace oracle
