#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hcns/error.hpp"

namespace hcns {

struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> history;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

}  // namespace detail

/// Jacobi-preconditioned conjugate gradients for an SPD operator.
///
/// `apply(x, y)` writes y = A x. `x` holds the initial guess on entry. Converged
/// when ||b - A x|| <= tol ||b|| (recomputed from scratch at the end). All
/// reductions run in index order.
template <class Apply>
CgResult conjugate_gradient(Apply&& apply, std::span<const double> diag, std::span<const double> b,
                            std::span<double> x, double tol, int max_iterations) {
  const std::size_t n = b.size();
  CgResult res;
  const double bnorm = std::sqrt(detail::dot(b, b));
  if (bnorm == 0.0) {
    for (auto& v : x) v = 0.0;
    return res;
  }
  std::vector<double> r(n), z(n), p(n), q(n);
  apply(std::span<const double>(x.data(), n), std::span<double>(q));
  for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - q[k];
  double rnorm = std::sqrt(detail::dot(r, r));
  res.history.push_back(rnorm / bnorm);
  for (std::size_t k = 0; k < n; ++k) z[k] = r[k] / diag[k];
  p = z;
  double rz = detail::dot(r, z);
  int it = 0;
  while (rnorm > tol * bnorm) {
    if (it >= max_iterations)
      throw NonConvergenceError("conjugate gradient did not converge in " + std::to_string(max_iterations) +
                                    " iterations (relative residual " + std::to_string(rnorm / bnorm) + ")",
                                res.history);
    apply(std::span<const double>(p), std::span<double>(q));
    const double pq = detail::dot(p, q);
    if (!(pq > 0.0)) throw NonConvergenceError("conjugate gradient breakdown: operator not positive definite", res.history);
    const double alpha = rz / pq;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += alpha * p[k];
      r[k] -= alpha * q[k];
    }
    ++it;
    rnorm = std::sqrt(detail::dot(r, r));
    if (rnorm <= tol * bnorm) {
      // Guard against drift of the recursive residual.
      apply(std::span<const double>(x.data(), n), std::span<double>(q));
      for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - q[k];
      rnorm = std::sqrt(detail::dot(r, r));
    }
    res.history.push_back(rnorm / bnorm);
    for (std::size_t k = 0; k < n; ++k) z[k] = r[k] / diag[k];
    const double rz_new = detail::dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
  }
  res.iterations = it;
  res.relative_residual = rnorm / bnorm;
  return res;
}

}  // namespace hcns
