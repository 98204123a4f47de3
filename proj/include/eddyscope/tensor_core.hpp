#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "eddyscope/errors.hpp"

namespace eddyscope {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using CVec3 = Eigen::Vector3cd;
using CMat3 = Eigen::Matrix3cd;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using CMat9 = Eigen::Matrix<cplx, 9, 9>;

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Physical parameters of a target and the operating frequency.

class PhysicalConfig {
 public:
  static constexpr double kDefaultNuMax = 4.0;

  PhysicalConfig() = default;

  PhysicalConfig(double mu0, double mu_star, double sigma_star, double alpha, double omega,
                 double nu_max = kDefaultNuMax)
      : mu0_(mu0), mu_star_(mu_star), sigma_star_(sigma_star), alpha_(alpha), omega_(omega),
        nu_max_(nu_max) {
    require(mu0 > 0 && mu_star > 0 && sigma_star > 0 && alpha > 0 && omega > 0,
            ErrorKind::DomainError, "physical parameters must be strictly positive");
    require(std::isfinite(mu0) && std::isfinite(sigma_star) && std::isfinite(alpha) &&
                std::isfinite(omega),
            ErrorKind::DomainError, "physical parameters must be finite");
    require(mu_star == mu0, ErrorKind::DomainError,
            "only non-magnetic targets are supported (mu_star must equal mu0)");
    require(nu_max > 0, ErrorKind::DomainError, "nu_max must be positive");
  }

  double mu0() const { return mu0_; }
  double mu_star() const { return mu_star_; }
  double sigma_star() const { return sigma_star_; }
  double alpha() const { return alpha_; }
  double omega() const { return omega_; }
  double nu_max() const { return nu_max_; }

  /// k = omega mu0 sigma*  [1/m^2]
  double k() const { return omega_ * mu0_ * sigma_star_; }
  /// Induction number nu = k alpha^2.
  double nu() const { return k() * alpha_ * alpha_; }
  /// Prefactor k alpha^5 multiplying the CPT in the measured field.
  double field_scale() const { return k() * std::pow(alpha_, 5); }
  /// Set when nu exceeds nu_max: the leading-order model is no longer trustworthy.
  bool beyond_asymptotic_regime() const { return nu() > nu_max_; }

  PhysicalConfig with_omega(double omega) const {
    return PhysicalConfig(mu0_, mu_star_, sigma_star_, alpha_, omega, nu_max_);
  }

  /// Conductor and geometry used throughout the classification experiments.
  static PhysicalConfig reference(double omega = 133.5) {
    return PhysicalConfig(1.2566e-6, 1.2566e-6, 5.97e7, 0.01, omega);
  }

  friend bool operator==(const PhysicalConfig&, const PhysicalConfig&) = default;

 private:
  double mu0_ = 1.2566e-6;
  double mu_star_ = 1.2566e-6;
  double sigma_star_ = 5.97e7;
  double alpha_ = 0.01;
  double omega_ = 133.5;
  double nu_max_ = kDefaultNuMax;
};

// ---------------------------------------------------------------------------
// Conductive polarization tensor.
//
// Stored as a 9x9 complex matrix whose (l, l') 3x3 block (0-based) sits at
// rows 3l..3l+2, columns 3l'..3l'+2. Column i of block (l, l') is e_l x w for
// some vector w, so row l of that block vanishes.

class CptTensor {
 public:
  static constexpr double kZeroRowTolerance = 1e-12;

  CptTensor() : m_(CMat9::Zero()) {}

  explicit CptTensor(const CMat9& m, double zero_row_tol = kZeroRowTolerance) : m_(m) {
    require(m_.allFinite(), ErrorKind::DomainError, "CPT has non-finite entries");
    const double err = zero_row_defect(m_);
    require(err <= zero_row_tol * std::max(m_.norm(), 1e-300) || err == 0.0,
            ErrorKind::ZeroRowViolation, "row l of block (l, l') is not zero");
  }

  /// Builds the tensor from first moments w[l'][i]: column i of block (l, l') is e_l x w[l'][i].
  static CptTensor from_moments(const std::array<std::array<CVec3, 3>, 3>& w) {
    CMat9 m = CMat9::Zero();
    for (int l = 0; l < 3; ++l) {
      const Vec3 el = Vec3::Unit(l);
      for (int lp = 0; lp < 3; ++lp)
        for (int i = 0; i < 3; ++i) {
          const CVec3 col = el.cast<cplx>().cross(w[lp][i]);
          m.block<3, 1>(3 * l, 3 * lp + i) = col;
          m(3 * l + l, 3 * lp + i) = 0.0;  // cross product with e_l has no e_l component
        }
    }
    return CptTensor(m);
  }

  /// Largest magnitude found in the rows that must vanish.
  static double zero_row_defect(const CMat9& m) {
    double err = 0.0;
    for (int l = 0; l < 3; ++l) err = std::max(err, m.row(3 * l + l).cwiseAbs().maxCoeff());
    return err;
  }

  const CMat9& matrix() const { return m_; }
  Mat9 real() const { return m_.real(); }
  CMat3 block(int l, int lp) const { return m_.block<3, 3>(3 * l, 3 * lp); }

  CptTensor scaled(double s) const { return CptTensor(m_ * s); }

 private:
  CMat9 m_;
};

// ---------------------------------------------------------------------------
// Rotations.

class Rotation {
 public:
  static constexpr double kTolerance = 1e-12;

  Rotation() : o_(Mat3::Identity()) {}

  explicit Rotation(const Mat3& o) : o_(o) {
    require(o.allFinite(), ErrorKind::DomainError, "rotation has non-finite entries");
    require((o.transpose() * o - Mat3::Identity()).norm() < kTolerance, ErrorKind::DomainError,
            "rotation matrix is not orthogonal");
    require(std::abs(o.determinant() - 1.0) < kTolerance, ErrorKind::DomainError,
            "rotation matrix must have determinant +1");
  }

  static Rotation axis_angle(const Vec3& axis, double angle) {
    require(axis.norm() > 0, ErrorKind::DomainError, "rotation axis must be nonzero");
    return Rotation(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix());
  }

  /// Haar-distributed rotation from the QR factorization of a seeded Gaussian matrix.
  static Rotation random(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    Mat3 g;
    for (int i = 0; i < 9; ++i) g(i / 3, i % 3) = gauss(rng);
    Eigen::HouseholderQR<Mat3> qr(g);
    Mat3 q = qr.householderQ();
    const Mat3 r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < 3; ++j)
      if (r(j, j) < 0) q.col(j) *= -1.0;
    if (q.determinant() < 0) q.col(0) *= -1.0;
    return Rotation(q);
  }

  const Mat3& matrix() const { return o_; }
  Rotation operator*(const Rotation& other) const { return Rotation(o_ * other.o_); }

 private:
  Mat3 o_;
};

/// Block-diagonal diag(O, O, O).
inline Mat9 build_O1(const Rotation& rot) {
  Mat9 r = Mat9::Zero();
  for (int b = 0; b < 3; ++b) r.block<3, 3>(3 * b, 3 * b) = rot.matrix();
  return r;
}

/// Kronecker product O (x) I3: block (a, b) equals O_ab I3.
inline Mat9 build_O2(const Rotation& rot) {
  Mat9 r = Mat9::Zero();
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) r.block<3, 3>(3 * a, 3 * b) = rot.matrix()(a, b) * Mat3::Identity();
  return r;
}

/// CPT of the rotated shape: O2 O1 M O1^T O2^T.
inline CptTensor rotate_cpt(const CptTensor& m, const Rotation& rot) {
  const Mat9 q = build_O2(rot) * build_O1(rot);
  const CMat9 out = q.cast<cplx>() * m.matrix() * q.transpose().cast<cplx>();
  const double scale = m.matrix().norm();
  if (CptTensor::zero_row_defect(out) > 1e-10 * scale)
    fail(ErrorKind::ZeroRowViolation,
         "rotated tensor lost its zero-row structure; the input is not a valid CPT");
  return CptTensor(out, 1e-10);
}

struct ScalingMap {
  double factor;              ///< s^5
  double omega_sigma_scaled;  ///< omega sigma s^2
};

/// CPT[omega sigma, sB] = s^5 CPT[omega sigma s^2, B].
inline ScalingMap scaling_map(double s, double omega_sigma) {
  require(s > 0 && std::isfinite(s), ErrorKind::DomainError, "scale factor must be positive");
  return {std::pow(s, 5), omega_sigma * s * s};
}

// ---------------------------------------------------------------------------
// Descriptors.

class Descriptor {
 public:
  Descriptor() = default;

  Descriptor(std::vector<double> values, std::vector<double> frequencies)
      : values_(std::move(values)), frequencies_(std::move(frequencies)) {
    require(!values_.empty() && values_.size() % 3 == 0, ErrorKind::LengthMismatch,
            "descriptor length must be a positive multiple of 3");
    require(values_.size() == 3 * frequencies_.size(), ErrorKind::LengthMismatch,
            "descriptor needs three values per frequency");
    const double mx = *std::max_element(values_.begin(), values_.end());
    require(mx == 1.0, ErrorKind::DomainError, "descriptor must be normalized to max 1");
    for (double v : values_)
      require(v >= 0.0 && v <= 1.0, ErrorKind::DomainError, "descriptor entries must lie in [0,1]");
  }

  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& frequencies() const { return frequencies_; }
  std::size_t size() const { return values_.size(); }

  friend bool operator==(const Descriptor&, const Descriptor&) = default;

 private:
  std::vector<double> values_;
  std::vector<double> frequencies_;
};

/// Top three singular values of a real 9x9 matrix, descending.
inline std::array<double, 3> top_singular_values(const Mat9& m) {
  Eigen::JacobiSVD<Mat9> svd(m);
  const auto& s = svd.singularValues();
  return {s(0), s(1), s(2)};
}

/// Concatenates per-frequency triples and divides by the global maximum.
inline Descriptor descriptor_from_singular_values(std::span<const std::array<double, 3>> triples,
                                                  std::vector<double> frequencies) {
  require(!triples.empty(), ErrorKind::LengthMismatch, "need at least one frequency");
  require(triples.size() == frequencies.size(), ErrorKind::LengthMismatch,
          "one singular-value triple per frequency");
  std::vector<double> v;
  v.reserve(3 * triples.size());
  for (const auto& t : triples) v.insert(v.end(), t.begin(), t.end());
  const double mx = *std::max_element(v.begin(), v.end());
  if (!(mx >= 1e-14)) fail(ErrorKind::DegenerateTensor, "all singular values vanish");
  for (double& x : v) x = std::clamp(x / mx, 0.0, 1.0);
  // the arg-max entry divided by itself is exactly 1
  return Descriptor(std::move(v), std::move(frequencies));
}

/// Singular values of Re M at each frequency, frequency-major, normalized by the global max.
inline Descriptor descriptor_from_cpts(std::span<const CptTensor> ms, std::span<const double> omegas) {
  require(!ms.empty(), ErrorKind::LengthMismatch, "need at least one tensor");
  require(ms.size() == omegas.size(), ErrorKind::LengthMismatch, "one tensor per frequency");
  std::vector<std::array<double, 3>> triples;
  triples.reserve(ms.size());
  for (const auto& m : ms) triples.push_back(top_singular_values(m.real()));
  return descriptor_from_singular_values(triples, {omegas.begin(), omegas.end()});
}

}  // namespace eddyscope
