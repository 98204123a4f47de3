#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "eddyscope/errors.hpp"
#include "eddyscope/tensor_core.hpp"

namespace eddyscope {

using Point = Vec3;

inline constexpr double kSingularDistance = 1e-12;

/// Laplace fundamental solution 1 / (4 pi |x - y|).
inline double green(const Point& x, const Point& y) {
  const double r = (x - y).norm();
  if (r < kSingularDistance) fail(ErrorKind::SingularPoint, "green: coincident points");
  return 1.0 / (4.0 * kPi * r);
}

/// Hessian of G in x: (3 r r^T / |r|^2 - I) / (4 pi |r|^3), r = x - y.
inline Mat3 green_hessian(const Point& x, const Point& y) {
  const Vec3 r = x - y;
  const double d2 = r.squaredNorm();
  const double d = std::sqrt(d2);
  if (d < kSingularDistance) fail(ErrorKind::SingularPoint, "green_hessian: coincident points");
  const double c = 1.0 / (4.0 * kPi * d2 * d);
  Mat3 h = (3.0 / d2) * (r * r.transpose());
  h.diagonal().array() -= 1.0;
  return c * h;
}

/// Field of a unit magnetic dipole at s with direction p, evaluated at x.
inline Vec3 background_field(const Point& x, const Point& s, const Vec3& p) {
  return green_hessian(x, s) * p;
}

// ---------------------------------------------------------------------------

class SensorArray {
 public:
  SensorArray(std::vector<Point> sources, std::vector<Point> receivers, Vec3 p, Vec3 q)
      : sources_(std::move(sources)), receivers_(std::move(receivers)), p_(p), q_(q) {
    require(!sources_.empty() && !receivers_.empty(), ErrorKind::GeometryError,
            "need at least one source and one receiver");
    require(std::abs(p_.norm() - 1.0) < 1e-12 && std::abs(q_.norm() - 1.0) < 1e-12,
            ErrorKind::DomainError, "dipole directions p and q must be unit vectors");
    for (const auto& s : sources_)
      for (const auto& r : receivers_)
        require((s - r).norm() >= kSingularDistance, ErrorKind::GeometryError,
                "a source coincides with a receiver");
  }

  /// Sources on [-extent, extent]^2 x {+L}, receivers on the same square at -L,
  /// n_side x n_side points each, vertical dipoles.
  static SensorArray plates(double L = 1.0, int n_side = 16, double extent = 2.0) {
    require(L > 0 && n_side >= 1 && extent > 0, ErrorKind::DomainError, "invalid plate geometry");
    std::vector<Point> src, rec;
    src.reserve(n_side * n_side);
    rec.reserve(n_side * n_side);
    const double step = n_side > 1 ? 2.0 * extent / (n_side - 1) : 0.0;
    for (int i = 0; i < n_side; ++i)
      for (int j = 0; j < n_side; ++j) {
        const double x = n_side > 1 ? -extent + i * step : 0.0;
        const double y = n_side > 1 ? -extent + j * step : 0.0;
        src.emplace_back(x, y, L);
        rec.emplace_back(x, y, -L);
      }
    return SensorArray(std::move(src), std::move(rec), Vec3::UnitZ(), Vec3::UnitZ());
  }

  SensorArray with_q(const Vec3& q) const { return SensorArray(sources_, receivers_, p_, q); }
  SensorArray with_p(const Vec3& p) const { return SensorArray(sources_, receivers_, p, q_); }

  /// Sources become receivers and p, q trade places.
  SensorArray swapped() const { return SensorArray(receivers_, sources_, q_, p_); }

  const std::vector<Point>& sources() const { return sources_; }
  const std::vector<Point>& receivers() const { return receivers_; }
  const Vec3& p() const { return p_; }
  const Vec3& q() const { return q_; }
  Eigen::Index num_sources() const { return static_cast<Eigen::Index>(sources_.size()); }
  Eigen::Index num_receivers() const { return static_cast<Eigen::Index>(receivers_.size()); }

 private:
  std::vector<Point> sources_;
  std::vector<Point> receivers_;
  Vec3 p_;
  Vec3 q_;
};

/// N x M multistatic response at one frequency and one measurement direction.
struct MsrMatrix {
  Eigen::MatrixXd A;
  double omega = 0.0;
  Vec3 q = Vec3::UnitZ();
  double sigma_noise = 0.0;
  std::optional<std::uint64_t> seed;  ///< absent for clean data
};

struct TargetInstance {
  Point z;
  CptTensor cpt;
  PhysicalConfig config;
};

// ---------------------------------------------------------------------------
// Factors of the leading-order model A = U Mq Vp.

/// Row n holds the nine entries of D^2 G(r_n, z), row-major over (l, l').
inline Eigen::MatrixXd assemble_U(const Point& z, std::span<const Point> receivers) {
  Eigen::MatrixXd u(static_cast<Eigen::Index>(receivers.size()), 9);
  for (std::size_t n = 0; n < receivers.size(); ++n) {
    const Mat3 h = green_hessian(receivers[n], z);
    for (int l = 0; l < 3; ++l)
      for (int lp = 0; lp < 3; ++lp) u(static_cast<Eigen::Index>(n), 3 * l + lp) = h(l, lp);
  }
  return u;
}

/// Column m holds D^2 G(z, s_m) p.
inline Eigen::MatrixXd assemble_Vp(const Point& z, std::span<const Point> sources, const Vec3& p) {
  Eigen::MatrixXd v(3, static_cast<Eigen::Index>(sources.size()));
  for (std::size_t m = 0; m < sources.size(); ++m)
    v.col(static_cast<Eigen::Index>(m)) = green_hessian(z, sources[m]) * p;
  return v;
}

/// Row 3l + l' equals k alpha^5 q^T Re M^{l,l'}.
inline Eigen::Matrix<double, 9, 3> assemble_Mq(const CptTensor& m, const Vec3& q,
                                               const PhysicalConfig& config) {
  Eigen::Matrix<double, 9, 3> out;
  const double scale = config.field_scale();
  for (int l = 0; l < 3; ++l)
    for (int lp = 0; lp < 3; ++lp)
      out.row(3 * l + lp) = scale * (q.transpose() * m.block(l, lp).real());
  return out;
}

inline void check_target_geometry(const Point& z, const SensorArray& array) {
  for (const auto& s : array.sources())
    require((s - z).norm() >= kSingularDistance, ErrorKind::GeometryError,
            "target coincides with a source");
  for (const auto& r : array.receivers())
    require((r - z).norm() >= kSingularDistance, ErrorKind::GeometryError,
            "target coincides with a receiver");
}

/// Clean MSR of one target: U Mq Vp, remainder dropped.
inline MsrMatrix msr_forward(const TargetInstance& target, const SensorArray& array) {
  check_target_geometry(target.z, array);
  if (target.config.beyond_asymptotic_regime())
    warn("target induction number exceeds nu_max; leading-order model may be inaccurate");
  const Eigen::MatrixXd u = assemble_U(target.z, array.receivers());
  const Eigen::MatrixXd vp = assemble_Vp(target.z, array.sources(), array.p());
  const Eigen::Matrix<double, 9, 3> mq = assemble_Mq(target.cpt, array.q(), target.config);
  MsrMatrix out;
  out.A = u * (mq * vp);
  out.omega = target.config.omega();
  out.q = array.q();
  return out;
}

/// Superposition of several well-separated targets (the model is linear in the CPTs).
inline MsrMatrix msr_forward(std::span<const TargetInstance> targets, const SensorArray& array) {
  require(!targets.empty(), ErrorKind::DomainError, "need at least one target");
  MsrMatrix out = msr_forward(targets[0], array);
  for (std::size_t t = 1; t < targets.size(); ++t) {
    require(targets[t].config.omega() == out.omega, ErrorKind::InconsistentInputs,
            "targets must share the operating frequency");
    out.A += msr_forward(targets[t], array).A;
  }
  return out;
}

/// Standard Gaussian matrix filled row by row from a seeded generator.
inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd w(rows, cols);
  for (Eigen::Index n = 0; n < rows; ++n)
    for (Eigen::Index m = 0; m < cols; ++m) w(n, m) = gauss(rng);
  return w;
}

/// A + (sigma_noise / sqrt(M)) W with W i.i.d. standard normal from `seed`.
inline MsrMatrix add_noise(const MsrMatrix& a, double sigma_noise, std::uint64_t seed) {
  require(sigma_noise >= 0 && std::isfinite(sigma_noise), ErrorKind::DomainError,
          "noise level must be non-negative");
  MsrMatrix out = a;
  out.sigma_noise = sigma_noise;
  if (sigma_noise == 0.0) return out;
  out.seed = seed;
  const double scale = sigma_noise / std::sqrt(static_cast<double>(a.A.cols()));
  out.A += scale * gaussian_matrix(a.A.rows(), a.A.cols(), seed);
  return out;
}

inline double largest_singular_value(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues()(0);
}

/// sigma_1(A_clean) / sigma_noise; the noise level is its reciprocal.
inline double snr(const MsrMatrix& clean, double sigma_noise) {
  require(sigma_noise > 0 && std::isfinite(sigma_noise), ErrorKind::DomainError,
          "sigma_noise must be positive");
  return largest_singular_value(clean.A) / sigma_noise;
}

}  // namespace eddyscope
