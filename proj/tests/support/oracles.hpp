#pragma once

// Reference computations used only by tests. Each one reaches the same quantity as the
// library by a different route.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "eddyscope/tensor_core.hpp"

namespace oracle {

using eddyscope::CMat9;
using eddyscope::CptTensor;
using eddyscope::CVec3;
using eddyscope::cplx;
using eddyscope::Mat3;
using eddyscope::Mat9;
using eddyscope::Vec3;

inline constexpr double kPi = 3.14159265358979323846;

inline double levi_civita(int a, int b, int c) {
  return 0.5 * (a - b) * (b - c) * (c - a);
}

inline double green(const Vec3& x, const Vec3& y) { return 1.0 / (4.0 * kPi * (x - y).norm()); }

/// Central fourth-order finite-difference Hessian of the Laplace kernel in x.
inline Mat3 fd_hessian(const Vec3& x, const Vec3& y, double step = 1e-3) {
  Mat3 h;
  auto f = [&](const Vec3& p) { return green(p, y); };
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      auto d = [&](double sa, double sb) {
        Vec3 p = x;
        p(a) += sa * step;
        p(b) += sb * step;
        return f(p);
      };
      // Fourth-order mixed stencil from the 1-D weights (-1, 8, -8, 1) / 12.
      const std::array<double, 4> off{-2, -1, 1, 2};
      const std::array<double, 4> w{1.0 / 12, -8.0 / 12, 8.0 / 12, -1.0 / 12};
      double s = 0.0;
      if (a == b) {
        const std::array<double, 5> o2{-2, -1, 0, 1, 2};
        const std::array<double, 5> w2{-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12};
        for (int i = 0; i < 5; ++i) {
          Vec3 p = x;
          p(a) += o2[i] * step;
          s += w2[i] * f(p);
        }
      } else {
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) s += w[i] * w[j] * d(off[i], off[j]);
      }
      h(a, b) = s / (step * step);
    }
  return h;
}

/// Gauss-Legendre nodes and weights on [-1, 1].
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    double p0 = 1.0, p1 = z;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double dp = n * (z * p1 - p0) / (z * z - 1.0);
    x[i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

/// Integral of 1/|y| over the unit cube centered at 0, by splitting into six pyramids with
/// apex at the center; the radial integral is exact and the face integral is smooth.
inline double unit_cube_self_integral(int n = 40) {
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  double face = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double u = 0.5 * x[i], v = 0.5 * x[j];
      face += 0.25 * w[i] * w[j] * 0.5 / std::sqrt(0.25 + u * u + v * v);
    }
  return 6.0 * 0.5 * face;  // radial factor: integral of t over [0, 1]
}

/// CPT whose induced moments are given by a real 3x3 matrix T (row i = moment for excitation e_i):
/// column i of block (l, l') equals (T_i delta_{l l'} - e_{l'} T_{i l}) / 4.
inline CMat9 cpt_from_moment_matrix(const Mat3& t) {
  CMat9 m = CMat9::Zero();
  for (int l = 0; l < 3; ++l)
    for (int lp = 0; lp < 3; ++lp)
      for (int i = 0; i < 3; ++i)
        for (int a = 0; a < 3; ++a) {
          double v = (l == lp ? t(i, a) : 0.0) - (a == lp ? t(i, l) : 0.0);
          m(3 * l + a, 3 * lp + i) = 0.25 * v;
        }
  return m;
}

/// The same tensor via first moments w[l'][i]_b = eps_{l' b c} T_{i c} / 4 and e_l x w.
inline std::array<std::array<CVec3, 3>, 3> moments_from_moment_matrix(const Mat3& t) {
  std::array<std::array<CVec3, 3>, 3> w{};
  for (int lp = 0; lp < 3; ++lp)
    for (int i = 0; i < 3; ++i) {
      CVec3 v = CVec3::Zero();
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 3; ++c) v(b) += 0.25 * levi_civita(lp, b, c) * t(i, c);
      w[lp][i] = v;
    }
  return w;
}

/// A_nm = -(k alpha^5 / 4) (D^2G(z, s_m) p)^T T D^2G(r_n, z) q.
inline Eigen::MatrixXd msr_from_moment_matrix(const Mat3& t, const Vec3& z, const std::vector<Vec3>& sources,
                                              const std::vector<Vec3>& receivers, const Vec3& p, const Vec3& q,
                                              double field_scale) {
  Eigen::MatrixXd a(receivers.size(), sources.size());
  for (std::size_t n = 0; n < receivers.size(); ++n)
    for (std::size_t m = 0; m < sources.size(); ++m) {
      const Vec3 v = fd_hessian(z, sources[m]) * p;
      const Vec3 u = fd_hessian(receivers[n], z) * q;
      a(n, m) = -0.25 * field_scale * v.dot(t * u);
    }
  return a;
}

/// Random tensor of the physical form: column i of block (l, l') = e_l x w[l'][i], w random.
inline CMat9 random_structured(std::mt19937_64& rng, bool complex_part = true) {
  std::normal_distribution<double> g;
  CMat9 m = CMat9::Zero();
  for (int lp = 0; lp < 3; ++lp)
    for (int i = 0; i < 3; ++i) {
      CVec3 w;
      for (int b = 0; b < 3; ++b) w(b) = cplx(g(rng), complex_part ? g(rng) : 0.0);
      for (int l = 0; l < 3; ++l)
        for (int a = 0; a < 3; ++a) {
          cplx s = 0.0;
          for (int b = 0; b < 3; ++b) s += levi_civita(a, l, b) * w(b);
          m(3 * l + a, 3 * lp + i) = s;
        }
    }
  return m;
}

/// Random tensor that only has the zero rows (row l of every block (l, l') vanishes).
inline CMat9 random_zero_row(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CMat9 m;
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c) m(r, c) = (r % 3 == r / 3) ? cplx(0.0) : cplx(g(rng), g(rng));
  return m;
}

/// Part of k alpha^5 Re M that the data determine: for each q = e_l, rows (m, m') and (m', m)
/// of q^T M with m, m' != l enter only through their sum, so both are replaced by the mean.
inline Mat9 identifiable_part(const Mat9& scaled) {
  Mat9 out = scaled;
  for (int l = 0; l < 3; ++l)
    for (int m = 0; m < 3; ++m)
      for (int mp = m + 1; mp < 3; ++mp) {
        if (m == l || mp == l) continue;
        // row l of block (m, m') and row l of block (m', m)
        const Eigen::Matrix<double, 1, 3> a = scaled.block<1, 3>(3 * m + l, 3 * mp);
        const Eigen::Matrix<double, 1, 3> b = scaled.block<1, 3>(3 * mp + l, 3 * m);
        out.block<1, 3>(3 * m + l, 3 * mp) = 0.5 * (a + b);
        out.block<1, 3>(3 * mp + l, 3 * m) = 0.5 * (a + b);
      }
  return out;
}

/// Singular values by eigenvalues of M^T M (independent of the SVD routine used by the library).
inline std::array<double, 3> top3_via_gram(const Mat9& m) {
  Eigen::SelfAdjointEigenSolver<Mat9> es(m.transpose() * m);
  const auto& ev = es.eigenvalues();
  return {std::sqrt(std::max(ev(8), 0.0)), std::sqrt(std::max(ev(7), 0.0)), std::sqrt(std::max(ev(6), 0.0))};
}

}  // namespace oracle
