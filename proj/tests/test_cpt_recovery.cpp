#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "eddyscope/cpt_recovery.hpp"
#include "eddyscope/solver/cpt_solver.hpp"
#include "support/expect_error.hpp"
#include "support/oracles.hpp"

using namespace eddyscope;

namespace {

const PhysicalConfig kConfig = PhysicalConfig::reference();

std::array<MsrMatrix, 3> clean_msrs(const CptTensor& m, const Point& z, const SensorArray& base,
                                    const PhysicalConfig& c = kConfig) {
  std::array<MsrMatrix, 3> out;
  for (int q = 0; q < 3; ++q) out[q] = msr_forward({z, m, c}, base.with_q(Vec3::Unit(q)));
  return out;
}

/// Minimum-norm solution through the explicit design matrix and its SVD.
Mat93 explicit_route(const Eigen::MatrixXd& u, const Eigen::MatrixXd& vp, const Eigen::MatrixXd& a, int axis,
                     double tau = 1e-8) {
  const Eigen::MatrixXd x = vectorize_L(u, vp, axis);
  Eigen::VectorXd rhs(a.size());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index s = 0; s < a.cols(); ++s) rhs(r * a.cols() + s) = a(r, s);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(18);
  for (Eigen::Index k = 0; k < s.size(); ++k)
    if (s(k) > tau * s(0)) c += (svd.matrixU().col(k).dot(rhs) / s(k)) * svd.matrixV().col(k);
  return unpack_free(c, axis);
}

/// Singular values of a 9 x 9 tensor built from a prescribed triple (diagonal moment matrix).
CptTensor tensor_with_singular_values(double s1, double s2, double s3) {
  // pair values s_ab = sqrt((t_a^2 + t_b^2) / 8) for the three index pairs
  const double a = 8 * s1 * s1, b = 8 * s2 * s2, c = 8 * s3 * s3;
  const double u1 = 0.5 * (a + b - c), u2 = 0.5 * (a - b + c), u3 = 0.5 * (-a + b + c);
  const Mat3 t = Vec3(std::sqrt(u1), std::sqrt(u2), std::sqrt(u3)).asDiagonal();
  return CptTensor(oracle::cpt_from_moment_matrix(t));
}

}  // namespace

TEST(VectorizeL, SingleSensorPair) {
  Eigen::MatrixXd u(1, 9), vp(3, 1);
  for (int i = 0; i < 9; ++i) u(0, i) = i + 1.0;
  vp << 0.5, -2.0, 3.0;
  for (int axis = 0; axis < 3; ++axis) {
    const Eigen::MatrixXd x = vectorize_L(u, vp, axis);
    ASSERT_EQ(x.rows(), 1);
    ASSERT_EQ(x.cols(), 18);
    const auto free = free_entries(axis);
    for (int c = 0; c < 18; ++c) EXPECT_EQ(x(0, c), u(0, free[c].first) * vp(free[c].second, 0));
    for (const auto& [i, j] : free) EXPECT_NE(i / 3, axis);
  }
}

TEST(VectorizeL, ReproducesTripleProduct) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Eigen::MatrixXd u(7, 9), vp(3, 5);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < vp.size(); ++i) vp.data()[i] = g(rng);
  for (int axis = 0; axis < 3; ++axis) {
    Eigen::VectorXd c(18);
    for (int k = 0; k < 18; ++k) c(k) = g(rng);
    const Mat93 mq = unpack_free(c, axis);
    for (int j = 0; j < 3; ++j) EXPECT_EQ(mq.row(3 * axis + j).norm(), 0.0);
    const Eigen::MatrixXd img = u * mq * vp;
    const Eigen::VectorXd lhs = vectorize_L(u, vp, axis) * c;
    for (Eigen::Index r = 0; r < img.rows(); ++r)
      for (Eigen::Index s = 0; s < img.cols(); ++s) EXPECT_NEAR(lhs(r * img.cols() + s), img(r, s), 1e-12);
  }
}

TEST(RecoverMq, CompressedRouteMatchesExplicitDesignMatrix) {
  std::mt19937_64 rng(2);
  const SensorArray base = SensorArray::plates(1.0, 8, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    const CptTensor m(oracle::random_zero_row(rng));
    const Point z(0.1 * trial, -0.05, 0.02);
    const auto msrs = clean_msrs(m, z, base);
    const RecoveryOperator op(z, base);
    for (int axis = 0; axis < 3; ++axis) {
      const RecoveredMq r = op.solve(msrs[axis], axis);
      const Mat93 e = explicit_route(op.U(), op.Vp(), msrs[axis].A, axis);
      EXPECT_LT((r.mq - e).norm(), 1e-8 * e.norm());
      // same singular values on both routes
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(vectorize_L(op.U(), op.Vp(), axis));
      EXPECT_LT((svd.singularValues() - op.design_singular_values(axis)).norm(), 1e-10 * svd.singularValues()(0));
      EXPECT_EQ(r.rank, 15);
    }
  }
}

TEST(RecoverMq, ResidualOrthogonalToFeasibleDirections) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  const SensorArray base = SensorArray::plates(1.0, 8, 2.0);
  const Point z(0.05, 0.1, 0.0);
  const RecoveryOperator op(z, base);
  for (int axis = 0; axis < 3; ++axis) {
    MsrMatrix a;
    a.A = Eigen::MatrixXd(64, 64);
    for (Eigen::Index i = 0; i < a.A.size(); ++i) a.A.data()[i] = g(rng);
    a.q = Vec3::Unit(axis);
    a.omega = 1.0;
    const RecoveredMq r = op.solve(a, axis);
    const Eigen::MatrixXd res = a.A - op.U() * r.mq * op.Vp();
    EXPECT_NEAR(r.residual, res.norm(), 1e-10 * res.norm());
    for (const auto& [i, j] : free_entries(axis)) {
      const Eigen::MatrixXd dir = op.U().col(i) * op.Vp().row(j);
      EXPECT_LT(std::abs((res.array() * dir.array()).sum()), 1e-8 * res.norm() * dir.norm());
    }
  }
}

TEST(RecoverMq, ZeroDataAndErrors) {
  const SensorArray base = SensorArray::plates(1.0, 6, 2.0);
  const RecoveryOperator op(Point::Zero(), base);
  MsrMatrix a;
  a.A = Eigen::MatrixXd::Zero(36, 36);
  a.q = Vec3::UnitY();
  const RecoveredMq r = op.solve(a, 1);
  EXPECT_EQ(r.mq.norm(), 0.0);
  EXPECT_EQ(r.residual, 0.0);
  expect_error(ErrorKind::InconsistentInputs, [&] { op.solve(a, 0); });
  a.A = Eigen::MatrixXd::Zero(5, 36);
  expect_error(ErrorKind::LengthMismatch, [&] { op.solve(a, 1); });
  expect_error(ErrorKind::DomainError, [&] { RecoveryOperator(Point::Zero(), base, 0.0); });
}

TEST(RecoverCpt, RoundTripRecoversIdentifiablePart) {
  std::mt19937_64 rng(4);
  const SensorArray base = SensorArray::plates();
  for (int trial = 0; trial < 20; ++trial) {
    const CptTensor m(oracle::random_zero_row(rng));
    const Point z(0.2, -0.1, 0.05 * (trial % 3));
    const auto msrs = clean_msrs(m, z, base);
    const RecoveredCpt r = recover_cpt(RecoveryOperator(z, base), msrs);
    const Mat9 expected = oracle::identifiable_part(kConfig.field_scale() * m.real());
    EXPECT_LT((r.scaled_tensor - expected).norm(), 1e-7 * expected.norm());
    for (int l = 0; l < 3; ++l) EXPECT_EQ(r.scaled_tensor.row(3 * l + l).norm(), 0.0);
    const auto a = top_singular_values(r.scaled_tensor), b = oracle::top3_via_gram(expected);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-7 * b[0]);
    EXPECT_EQ(r.omega, kConfig.omega());
  }
}

TEST(RecoverCpt, PhysicalTensorsAreFullyIdentifiable) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  const SensorArray base = SensorArray::plates();
  for (int trial = 0; trial < 5; ++trial) {
    Mat3 t;
    for (int i = 0; i < 9; ++i) t(i / 3, i % 3) = g(rng);
    t = (t + t.transpose()).eval();
    const CptTensor m(oracle::cpt_from_moment_matrix(t));
    const auto msrs = clean_msrs(m, Point::Zero(), base);
    const RecoveredCpt r = recover_cpt(RecoveryOperator(Point::Zero(), base), msrs);
    const Mat9 expected = kConfig.field_scale() * m.real();
    EXPECT_LT((r.scaled_tensor - expected).norm(), 1e-8 * expected.norm());
  }
}

TEST(AssembleRecoveredCpt, KeyedOnAxisAndValidated) {
  std::mt19937_64 rng(6);
  const SensorArray base = SensorArray::plates(1.0, 8, 2.0);
  const CptTensor m(oracle::random_zero_row(rng));
  const auto msrs = clean_msrs(m, Point::Zero(), base);
  const RecoveryOperator op(Point::Zero(), base);
  const RecoveredMq r0 = op.solve(msrs[0], 0), r1 = op.solve(msrs[1], 1), r2 = op.solve(msrs[2], 2);
  const RecoveredCpt ordered = assemble_recovered_cpt(r0, r1, r2);
  const RecoveredCpt permuted = assemble_recovered_cpt(r2, r0, r1);
  EXPECT_EQ(ordered.scaled_tensor, permuted.scaled_tensor);
  // row l of block (m, m') comes from row 3m + m' of the e_l recovery
  for (int l = 0; l < 3; ++l) {
    const Mat93& mq = (l == 0 ? r0 : l == 1 ? r1 : r2).mq;
    for (int mm = 0; mm < 3; ++mm)
      for (int mp = 0; mp < 3; ++mp)
        for (int i = 0; i < 3; ++i) EXPECT_EQ(ordered.scaled_tensor(3 * mm + l, 3 * mp + i), mq(3 * mm + mp, i));
  }
  expect_error(ErrorKind::InconsistentInputs, [&] { assemble_recovered_cpt(r0, r0, r2); });
  RecoveredMq other = r1;
  other.omega = 2.0 * r1.omega;
  expect_error(ErrorKind::InconsistentInputs, [&] { assemble_recovered_cpt(r0, other, r2); });
  const std::array<RecoveredMq, 2> two{r0, r1};
  expect_error(ErrorKind::InconsistentInputs, [&] { assemble_recovered_cpt(two); });
}

TEST(RecoverCpt, NoisyRecoveryErrorBounded) {
  std::mt19937_64 rng(7);
  const SensorArray base = SensorArray::plates();
  const CptTensor m(oracle::random_zero_row(rng));
  const Point z = Point::Zero();
  const auto msrs = clean_msrs(m, z, base);
  const RecoveryOperator op(z, base);
  const Mat9 clean = recover_cpt(op, msrs).scaled_tensor;
  std::vector<double> rel;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::array<MsrMatrix, 3> noisy;
    for (int q = 0; q < 3; ++q)
      noisy[q] = add_noise(msrs[q], 0.1 * largest_singular_value(msrs[q].A), 1000 * seed + q);
    rel.push_back((recover_cpt(op, noisy).scaled_tensor - clean).norm() / clean.norm());
  }
  std::nth_element(rel.begin(), rel.begin() + 50, rel.end());
  EXPECT_LT(rel[50], 3 * 0.1);
}

TEST(RecoverCpt, PerturbationLinearInNoise) {
  std::mt19937_64 rng(8);
  const SensorArray base = SensorArray::plates(1.0, 10, 2.0);
  const CptTensor m(oracle::random_zero_row(rng));
  const auto msrs = clean_msrs(m, Point::Zero(), base);
  const RecoveryOperator op(Point::Zero(), base);
  const Mat9 clean = recover_cpt(op, msrs).scaled_tensor;
  const double s1 = largest_singular_value(msrs[0].A);
  std::vector<double> xs, ys;
  for (double level : {0.01, 0.02, 0.04, 0.08}) {
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::array<MsrMatrix, 3> noisy;
      for (int q = 0; q < 3; ++q) noisy[q] = add_noise(msrs[q], level * s1, 77 * seed + q);
      mean += (recover_cpt(op, noisy).scaled_tensor - clean).norm() / 20.0;
    }
    xs.push_back(level);
    ys.push_back(mean);
  }
  // least-squares slope through the origin against the secant slope of the first point
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += xs[i] * ys[i];
    sxx += xs[i] * xs[i];
  }
  EXPECT_NEAR(sxy / sxx, ys[0] / xs[0], 0.1 * ys[0] / xs[0]);
}

TEST(RecoveredDescriptor, SingleFrequencySphereLikeTensor) {
  const CptTensor m = tensor_with_singular_values(0.8282, 0.8277, 0.8277);
  const auto sv = top_singular_values(m.real());
  EXPECT_NEAR(sv[0], 0.8282, 1e-12);
  EXPECT_NEAR(sv[2], 0.8277, 1e-12);
  const SensorArray base = SensorArray::plates();
  const std::array<RecoveredCpt, 1> rec{recover_cpt(RecoveryOperator(Point::Zero(), base),
                                                     clean_msrs(m, Point::Zero(), base))};
  const Descriptor d = recovered_descriptor(rec);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.values()[0], 1.0);
  EXPECT_NEAR(d.values()[1], 0.9993, 1e-3);
  EXPECT_NEAR(d.values()[2], 0.9993, 1e-3);
  EXPECT_NEAR(d.values()[1], 0.8277 / 0.8282, 1e-9);
}

TEST(RecoveredDescriptor, RepeatedBlocksAndOrdering) {
  std::mt19937_64 rng(9);
  const SensorArray base = SensorArray::plates(1.0, 8, 2.0);
  const CptTensor m(oracle::random_structured(rng));
  const RecoveryOperator op(Point::Zero(), base);
  const RecoveredCpt a = recover_cpt(op, clean_msrs(m, Point::Zero(), base, kConfig.with_omega(100.0)));
  const RecoveredCpt b = recover_cpt(op, clean_msrs(m, Point::Zero(), base, kConfig.with_omega(200.0)));
  const std::array<RecoveredCpt, 2> both{a, b};
  const Descriptor d = recovered_descriptor(both);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(d.values()[i], d.values()[i + 3], 1e-10);
  const std::array<RecoveredCpt, 2> reversed{b, a};
  expect_error(ErrorKind::InconsistentInputs, [&] { recovered_descriptor(reversed); });
  RecoveredCpt zero = a;
  zero.scaled_tensor.setZero();
  const std::array<RecoveredCpt, 1> z{zero};
  expect_error(ErrorKind::DegenerateTensor, [&] { recovered_descriptor(z); });
}

TEST(RecoveredDescriptor, SolverCubeAcrossFrequencies) {
  using namespace eddyscope::solver;
  const CptSolver s(voxelize(ShapeSpec::make(ShapeKind::Cube), 0.25));
  const SensorArray base = SensorArray::plates();
  const RecoveryOperator op(Point::Zero(), base);
  std::vector<double> omegas;
  std::vector<CptTensor> cpts;
  std::vector<RecoveredCpt> rec;
  for (int n = 1; n <= 19; ++n) {
    const double w = 73.5 + 10.0 * n;
    omegas.push_back(w);
    cpts.push_back(s.cpt(kConfig.with_omega(w).nu()));
    rec.push_back(recover_cpt(op, clean_msrs(cpts.back(), Point::Zero(), base, kConfig.with_omega(w))));
  }
  const Descriptor a = recovered_descriptor(rec);
  const Descriptor b = descriptor_from_cpts(cpts, omegas);
  ASSERT_EQ(a.size(), 57u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-6);
}
