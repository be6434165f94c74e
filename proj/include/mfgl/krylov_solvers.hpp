#pragma once

#include "mfgl/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace mfgl {

struct KrylovOptions {
  /// Stop when |b - A x| <= tolerance * |b|.
  double tolerance = 1e-12;
  int max_iterations = 1000;
  /// GMRES restart length.
  int restart = 50;
};

struct KrylovResult {
  Vector x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Preconditioned MINRES for symmetric (possibly indefinite) A with an SPD
/// preconditioner. `apply(v)` returns A v; `precond(v)` returns M^-1 v.
/// Restarts from the current iterate whenever the recurrence estimate has
/// converged but the true residual has not.
template <class Apply, class Precond>
KrylovResult minres(Apply&& apply, Precond&& precond, const Vector& b, const Vector& x0,
                    const KrylovOptions& opt) {
  KrylovResult res;
  res.x = x0;
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.x.setZero();
    res.converged = true;
    return res;
  }
  const double eps = std::numeric_limits<double>::epsilon();
  while (true) {
    Vector r1 = b - apply(res.x);
    res.relative_residual = r1.norm() / bnorm;
    if (res.relative_residual <= opt.tolerance) {
      res.converged = true;
      return res;
    }
    if (res.iterations >= opt.max_iterations) return res;

    Vector y = precond(r1);
    const double beta1 = std::sqrt(std::max(r1.dot(y), 0.0));
    if (beta1 == 0.0) return res;
    double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0, phibar = beta1;
    double cs = -1.0, sn = 0.0;
    const Index n = b.size();
    Vector w = Vector::Zero(n), w1(n), w2 = Vector::Zero(n);
    Vector r2 = r1;
    Vector dx = Vector::Zero(n);
    int local = 0;
    while (res.iterations < opt.max_iterations) {
      ++res.iterations;
      ++local;
      const Vector v = y / beta;
      y = apply(v);
      if (local >= 2) y -= (beta / oldb) * r1;
      const double alfa = v.dot(y);
      y -= (alfa / beta) * r2;
      r1 = r2;
      r2 = y;
      y = precond(r2);
      oldb = beta;
      beta = std::sqrt(std::max(r2.dot(y), 0.0));
      const double oldeps = epsln;
      const double delta = cs * dbar + sn * alfa;
      const double gbar = sn * dbar - cs * alfa;
      epsln = sn * beta;
      dbar = -cs * beta;
      const double gamma = std::max(std::hypot(gbar, beta), eps);
      cs = gbar / gamma;
      sn = beta / gamma;
      const double phi = cs * phibar;
      phibar = sn * phibar;
      w1 = w2;
      w2 = w;
      w = (v - oldeps * w1 - delta * w2) / gamma;
      dx += phi * w;
      // phibar is the residual in the M^-1 norm; aim below the target so the
      // true-residual check usually passes first time.
      if (phibar <= 0.1 * opt.tolerance * beta1 || beta <= eps * beta1) break;
    }
    res.x += dx;
  }
}

/// Restarted GMRES with right preconditioning: solves A M^-1 u = b and
/// returns x = M^-1 u. `precond(v)` returns M^-1 v.
template <class Apply, class Precond>
KrylovResult gmres(Apply&& apply, Precond&& precond, const Vector& b, const Vector& x0,
                   const KrylovOptions& opt) {
  KrylovResult res;
  res.x = x0;
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.x.setZero();
    res.converged = true;
    return res;
  }
  const Index n = b.size();
  const int m = std::max(1, opt.restart);
  Matrix basis(n, m + 1);
  Matrix h = Matrix::Zero(m + 1, m);
  Vector cs(m), sn(m), g(m + 1);
  while (true) {
    const Vector r = b - apply(res.x);
    const double beta = r.norm();
    res.relative_residual = beta / bnorm;
    if (res.relative_residual <= opt.tolerance) {
      res.converged = true;
      return res;
    }
    if (res.iterations >= opt.max_iterations) return res;

    basis.col(0) = r / beta;
    h.setZero();
    g.setZero();
    g(0) = beta;
    int k = 0;
    while (k < m && res.iterations < opt.max_iterations) {
      ++res.iterations;
      Vector w = apply(precond(basis.col(k)));
      // Modified Gram-Schmidt, applied twice.
      for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i <= k; ++i) {
          const double c = basis.col(i).dot(w);
          h(i, k) += c;
          w -= c * basis.col(i);
        }
      }
      const double hnext = w.norm();
      h(k + 1, k) = hnext;
      for (int i = 0; i < k; ++i) {
        const double t = cs(i) * h(i, k) + sn(i) * h(i + 1, k);
        h(i + 1, k) = -sn(i) * h(i, k) + cs(i) * h(i + 1, k);
        h(i, k) = t;
      }
      const double denom = std::hypot(h(k, k), h(k + 1, k));
      cs(k) = h(k, k) / denom;
      sn(k) = h(k + 1, k) / denom;
      h(k, k) = denom;
      h(k + 1, k) = 0.0;
      g(k + 1) = -sn(k) * g(k);
      g(k) = cs(k) * g(k);
      ++k;
      if (std::abs(g(k)) <= 0.1 * opt.tolerance * bnorm || hnext == 0.0) break;
      basis.col(k) = w / hnext;
    }
    const Vector y =
        h.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    res.x += precond(basis.leftCols(k) * y);
  }
}

}  // namespace mfgl
