#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "eddyscope/errors.hpp"
#include "eddyscope/forward_model.hpp"
#include "eddyscope/tensor_core.hpp"

namespace eddyscope {

using Mat93 = Eigen::Matrix<double, 9, 3>;

inline constexpr double kDefaultRecoveryTruncation = 1e-8;
inline constexpr double kIllConditionedThreshold = 1e10;

/// The 18 entries (i, j) of a 9x3 Mq left free when q = e_axis; rows 3 axis .. 3 axis + 2 are fixed at zero.
inline std::vector<std::pair<int, int>> free_entries(int axis) {
  require(axis >= 0 && axis < 3, ErrorKind::DomainError, "measurement axis must be 0, 1 or 2");
  std::vector<std::pair<int, int>> out;
  out.reserve(18);
  for (int i = 0; i < 9; ++i) {
    if (i / 3 == axis) continue;
    for (int j = 0; j < 3; ++j) out.emplace_back(i, j);
  }
  return out;
}

/// Explicit (N M) x 18 design matrix of Mq -> U Mq Vp restricted to the free entries.
/// Rows are the row-major vectorization of the N x M image.
inline Eigen::MatrixXd vectorize_L(const Eigen::MatrixXd& u, const Eigen::MatrixXd& vp, int axis) {
  require(u.cols() == 9 && vp.rows() == 3, ErrorKind::LengthMismatch, "U must be N x 9 and Vp 3 x M");
  const auto free = free_entries(axis);
  const Eigen::Index n = u.rows(), m = vp.cols();
  Eigen::MatrixXd x(n * m, static_cast<Eigen::Index>(free.size()));
  for (std::size_t c = 0; c < free.size(); ++c) {
    const auto [i, j] = free[c];
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index s = 0; s < m; ++s) x(r * m + s, static_cast<Eigen::Index>(c)) = u(r, i) * vp(j, s);
  }
  return x;
}

inline Mat93 unpack_free(const Eigen::VectorXd& c, int axis) {
  Mat93 mq = Mat93::Zero();
  const auto free = free_entries(axis);
  for (std::size_t k = 0; k < free.size(); ++k) mq(free[k].first, free[k].second) = c(static_cast<Eigen::Index>(k));
  return mq;
}

struct RecoveredMq {
  Mat93 mq = Mat93::Zero();
  int axis = 0;
  double omega = 0.0;
  double residual = 0.0;
  int rank = 0;
  double condition = 1.0;  ///< ratio of largest to smallest retained singular value
};

/// Minimum-norm constrained least squares for Mq at a fixed target position.
///
/// With U = Q2 R2 and Vp^T = Q1 R1 (thin QR), the N x M problem collapses to
/// min |Q2^T A Q1 - R2 C R1^T| over the free entries of C: a 27 x 18 system
/// with the same singular values as the full design matrix.
class RecoveryOperator {
 public:
  RecoveryOperator(const Point& z, const SensorArray& array, double truncation = kDefaultRecoveryTruncation)
      : u_(assemble_U(z, array.receivers())), vp_(assemble_Vp(z, array.sources(), array.p())),
        truncation_(truncation) {
    require(truncation > 0 && truncation < 1, ErrorKind::DomainError, "truncation must lie in (0, 1)");
    Eigen::HouseholderQR<Eigen::MatrixXd> qr_u(u_);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr_v(vp_.transpose());
    const Eigen::Index ku = std::min<Eigen::Index>(9, u_.rows());
    const Eigen::Index kv = std::min<Eigen::Index>(3, vp_.cols());
    q2_ = qr_u.householderQ() * Eigen::MatrixXd::Identity(u_.rows(), ku);
    q1_ = qr_v.householderQ() * Eigen::MatrixXd::Identity(vp_.cols(), kv);
    r2_ = qr_u.matrixQR().topRows(ku).triangularView<Eigen::Upper>();
    r1_ = qr_v.matrixQR().topRows(kv).triangularView<Eigen::Upper>();
    for (int axis = 0; axis < 3; ++axis) {
      const auto free = free_entries(axis);
      Eigen::MatrixXd k(ku * kv, 18);
      for (int c = 0; c < 18; ++c) {
        const auto [i, j] = free[c];
        const Eigen::MatrixXd outer = r2_.col(i) * r1_.col(j).transpose();  // ku x kv
        k.col(c) = Eigen::Map<const Eigen::VectorXd>(outer.data(), outer.size());
      }
      svd_[axis].compute(k, Eigen::ComputeThinU | Eigen::ComputeThinV);
    }
  }

  const Eigen::MatrixXd& U() const { return u_; }
  const Eigen::MatrixXd& Vp() const { return vp_; }

  /// Singular values of the design matrix for q = e_axis, descending.
  Eigen::VectorXd design_singular_values(int axis) const { return svd_.at(axis).singularValues(); }

  RecoveredMq solve(const MsrMatrix& a, int axis) const {
    require(axis >= 0 && axis < 3, ErrorKind::DomainError, "measurement axis must be 0, 1 or 2");
    require(a.A.rows() == u_.rows() && a.A.cols() == vp_.cols(), ErrorKind::LengthMismatch,
            "MSR dimensions do not match the sensor array");
    require((a.q - Vec3::Unit(axis)).norm() < 1e-12, ErrorKind::InconsistentInputs,
            "MSR was not measured along the requested axis");
    const Eigen::MatrixXd b = q2_.transpose() * a.A * q1_;
    const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(b.data(), b.size());

    const auto& svd = svd_[axis];
    const Eigen::VectorXd& s = svd.singularValues();
    RecoveredMq out;
    out.axis = axis;
    out.omega = a.omega;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(18);
    if (s(0) > 0) {
      const Eigen::VectorXd proj = svd.matrixU().transpose() * rhs;
      for (Eigen::Index k = 0; k < s.size(); ++k) {
        if (s(k) <= truncation_ * s(0)) break;
        c += (proj(k) / s(k)) * svd.matrixV().col(k);
        out.rank = static_cast<int>(k) + 1;
      }
      out.condition = s(0) / s(out.rank - 1);
    }
    if (out.condition > kIllConditionedThreshold)
      warn("CPT recovery is ill-conditioned (condition number " + std::to_string(out.condition) + ")");
    out.mq = unpack_free(c, axis);
    out.residual = (a.A - u_ * out.mq * vp_).norm();
    return out;
  }

 private:
  Eigen::MatrixXd u_, vp_;
  Eigen::MatrixXd q1_, q2_, r1_, r2_;
  std::array<Eigen::JacobiSVD<Eigen::MatrixXd>, 3> svd_;
  double truncation_;
};

struct RecoveryProblem {
  MsrMatrix A;
  Point z_hat;
  SensorArray array;
  int axis;  ///< q = e_axis, 0-based
};

inline RecoveredMq recover_Mq(const RecoveryProblem& problem, double truncation = kDefaultRecoveryTruncation) {
  return RecoveryOperator(problem.z_hat, problem.array, truncation).solve(problem.A, problem.axis);
}

/// k alpha^5 Re M (restricted to what the data determines) at one frequency.
struct RecoveredCpt {
  Mat9 scaled_tensor = Mat9::Zero();
  double omega = 0.0;
  double residual = 0.0;
};

/// Row l of block (m, m') comes from row 3m + m' of the recovery with q = e_l.
inline RecoveredCpt assemble_recovered_cpt(std::span<const RecoveredMq> parts) {
  require(parts.size() == 3, ErrorKind::InconsistentInputs, "need exactly three recoveries");
  std::array<bool, 3> seen{false, false, false};
  RecoveredCpt out;
  out.omega = parts[0].omega;
  double res2 = 0.0;
  for (const auto& part : parts) {
    require(part.axis >= 0 && part.axis < 3 && !seen[part.axis], ErrorKind::InconsistentInputs,
            "recoveries must cover q = e1, e2, e3 once each");
    require(part.omega == out.omega, ErrorKind::InconsistentInputs, "recoveries at different frequencies");
    seen[part.axis] = true;
    const int l = part.axis;
    for (int m = 0; m < 3; ++m)
      for (int mp = 0; mp < 3; ++mp) out.scaled_tensor.block<1, 3>(3 * m + l, 3 * mp) = part.mq.row(3 * m + mp);
    res2 += part.residual * part.residual;
  }
  out.residual = std::sqrt(res2);
  return out;
}

inline RecoveredCpt assemble_recovered_cpt(const RecoveredMq& a, const RecoveredMq& b, const RecoveredMq& c) {
  const std::array<RecoveredMq, 3> parts{a, b, c};
  return assemble_recovered_cpt(parts);
}

/// Recovers the scaled tensor from the three MSR matrices of one frequency (any order).
inline RecoveredCpt recover_cpt(const RecoveryOperator& op, std::span<const MsrMatrix> msrs) {
  require(msrs.size() == 3, ErrorKind::InconsistentInputs, "need the MSR for q = e1, e2, e3");
  std::array<RecoveredMq, 3> parts;
  for (std::size_t i = 0; i < 3; ++i) {
    int axis = -1;
    for (int l = 0; l < 3; ++l)
      if ((msrs[i].q - Vec3::Unit(l)).norm() < 1e-12) axis = l;
    require(axis >= 0, ErrorKind::InconsistentInputs, "MSR measurement direction is not a coordinate axis");
    parts[i] = op.solve(msrs[i], axis);
  }
  return assemble_recovered_cpt(parts);
}

/// Per frequency: top three singular values of the scaled tensor divided by omega_n
/// (removes the omega factor in k alpha^5), then normalized by the global maximum.
inline Descriptor recovered_descriptor(std::span<const RecoveredCpt> recoveries) {
  require(!recoveries.empty(), ErrorKind::LengthMismatch, "need at least one frequency");
  std::vector<std::array<double, 3>> triples;
  std::vector<double> omegas;
  for (std::size_t n = 0; n < recoveries.size(); ++n) {
    const auto& r = recoveries[n];
    require(r.omega > 0, ErrorKind::DomainError, "frequency must be positive");
    if (n > 0)
      require(r.omega > recoveries[n - 1].omega, ErrorKind::InconsistentInputs,
              "frequencies must be strictly ascending");
    auto t = top_singular_values(r.scaled_tensor);
    for (double& v : t) v /= r.omega;
    triples.push_back(t);
    omegas.push_back(r.omega);
  }
  return descriptor_from_singular_values(triples, std::move(omegas));
}

}  // namespace eddyscope
