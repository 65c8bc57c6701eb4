#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "stochunfold/common.hpp"

namespace su {

struct CgParams {
  double rel_tol = 1e-10;
  /// 0 selects 10 * n.
  int max_iter = 0;
  bool throw_on_failure = true;
};

struct CgResult {
  int iterations = 0;
  double residual = 0.0;  ///< final relative residual
  bool converged = false;
};

using LinearOp = std::function<void(const std::vector<double>& x, std::vector<double>& y)>;

/// Conjugate gradients for a symmetric positive (semi)definite operator; x holds
/// the initial guess on entry.
inline CgResult conjugate_gradient(const LinearOp& A, const std::vector<double>& b, std::vector<double>& x,
                                   const CgParams& params = {}) {
  const std::size_t n = b.size();
  if (x.size() != n) x.assign(n, 0.0);
  CgResult res;
  auto dot = [n](const std::vector<double>& p, const std::vector<double>& q) {
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = p[i] * q[i];
    return pairwise_sum(t);
  };
  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) {
    x.assign(n, 0.0);
    res.converged = true;
    return res;
  }
  std::vector<double> r(n), p(n), Ap(n);
  A(x, Ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - Ap[i];
  p = r;
  double rr = dot(r, r);
  const int cap = params.max_iter > 0 ? params.max_iter : static_cast<int>(10 * n + 10);
  int it = 0;
  while (std::sqrt(rr) > params.rel_tol * bnorm && it < cap) {
    A(p, Ap);
    double pAp = dot(p, Ap);
    if (!(pAp > 0.0)) break;
    double alpha = rr / pAp;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    double rr_new = dot(r, r);
    double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    ++it;
  }
  res.iterations = it;
  res.residual = std::sqrt(rr) / bnorm;
  res.converged = res.residual <= params.rel_tol;
  if (!res.converged && params.throw_on_failure)
    throw SolverError("conjugate gradients did not converge", it, res.residual);
  return res;
}

}  // namespace su
