#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

namespace eddyscope::solver {

using CVecX = Eigen::VectorXcd;

struct GmresOptions {
  double tol = 1e-8;
  int restart = 60;
  int max_iterations = 2000;
};

struct GmresResult {
  CVecX x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
inline GmresResult gmres(const std::function<CVecX(const CVecX&)>& apply, const CVecX& b, CVecX x0,
                         const GmresOptions& opt = {}) {
  using C = std::complex<double>;
  GmresResult res;
  res.x = std::move(x0);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.x.setZero(b.size());
    res.converged = true;
    return res;
  }
  const int m = opt.restart;
  std::vector<CVecX> v(m + 1);
  Eigen::MatrixXcd hmat(m + 1, m);
  std::vector<C> cs(m), sn(m);
  CVecX g(m + 1);

  CVecX r = b - apply(res.x);
  double beta = r.norm();
  res.relative_residual = beta / bnorm;
  while (res.iterations < opt.max_iterations) {
    if (res.relative_residual <= opt.tol) {
      res.converged = true;
      return res;
    }
    v[0] = r / beta;
    g.setZero();
    g(0) = beta;
    hmat.setZero();
    int j = 0;
    for (; j < m && res.iterations < opt.max_iterations; ++j) {
      ++res.iterations;
      CVecX w = apply(v[j]);
      for (int i = 0; i <= j; ++i) {
        hmat(i, j) = v[i].dot(w);
        w -= hmat(i, j) * v[i];
      }
      hmat(j + 1, j) = w.norm();
      if (std::abs(hmat(j + 1, j)) > 0.0) v[j + 1] = w / hmat(j + 1, j);
      for (int i = 0; i < j; ++i) {
        const C t = std::conj(cs[i]) * hmat(i, j) + std::conj(sn[i]) * hmat(i + 1, j);
        hmat(i + 1, j) = -sn[i] * hmat(i, j) + cs[i] * hmat(i + 1, j);
        hmat(i, j) = t;
      }
      const double a = std::abs(hmat(j, j));
      const double bb = std::abs(hmat(j + 1, j));
      const double den = std::hypot(a, bb);
      if (den == 0.0) {
        cs[j] = 1.0;
        sn[j] = 0.0;
      } else {
        cs[j] = hmat(j, j) / den;
        sn[j] = hmat(j + 1, j) / den;
      }
      hmat(j, j) = den;
      hmat(j + 1, j) = 0.0;
      g(j + 1) = -sn[j] * g(j);
      g(j) = std::conj(cs[j]) * g(j);
      res.relative_residual = std::abs(g(j + 1)) / bnorm;
      if (res.relative_residual <= opt.tol || bb == 0.0) {
        ++j;
        break;
      }
    }
    CVecX y = hmat.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
    for (int i = 0; i < j; ++i) res.x += y(i) * v[i];
    r = b - apply(res.x);
    beta = r.norm();
    res.relative_residual = beta / bnorm;
  }
  res.converged = res.relative_residual <= opt.tol;
  return res;
}

}  // namespace eddyscope::solver
