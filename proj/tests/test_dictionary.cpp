#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "eddyscope/dictionary.hpp"
#include "support/expect_error.hpp"
#include "support/oracles.hpp"

using namespace eddyscope;

namespace {

const PhysicalConfig kConfig = PhysicalConfig::reference();

Descriptor single(double a, double b, double c) { return Descriptor({a, b, c}, {kReferenceOmega}); }

std::vector<double> sweep_frequencies() {
  std::vector<double> w;
  for (int n = 1; n <= 19; ++n) w.push_back(73.5 + 10.0 * n);
  return w;
}

/// Recovered descriptor of a clean target, through forward model and recovery at the true position.
Descriptor clean_descriptor(std::span<const CptTensor> cpts, std::span<const double> omegas, const Point& z) {
  const SensorArray base = SensorArray::plates();
  const RecoveryOperator op(z, base);
  std::vector<RecoveredCpt> rec;
  for (std::size_t n = 0; n < cpts.size(); ++n) {
    std::array<MsrMatrix, 3> msrs;
    for (int q = 0; q < 3; ++q)
      msrs[q] = msr_forward({z, cpts[n], kConfig.with_omega(omegas[n])}, base.with_q(Vec3::Unit(q)));
    rec.push_back(recover_cpt(op, msrs));
  }
  return recovered_descriptor(rec);
}

}  // namespace

TEST(ReferenceDictionary, NormalizedValuesMatchPrintedColumnToRounding) {
  const Dictionary dict = reference_table_dictionary();
  ASSERT_EQ(dict.size(), 6u);
  const auto printed = reference_normalized_values();
  for (std::size_t k = 0; k < dict.size(); ++k) {
    EXPECT_EQ(dict[k].label, printed[k].first);
    EXPECT_EQ(dict[k].provenance, Provenance::ReferenceTable);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(dict[k].descriptor.values()[i], printed[k].second[i], 1e-3) << dict[k].label;
  }
  // independent oracle: each row divided by its own maximum
  for (std::size_t k = 0; k < dict.size(); ++k) {
    const auto raw = reference_singular_values()[k].values[0];
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(dict[k].descriptor.values()[i], raw[i] / raw[0]);
  }
}

TEST(ReferenceDictionary, CylinderRowExample) {
  const Dictionary dict = reference_table_dictionary();
  const auto& cyl = dict[1].descriptor.values();
  EXPECT_EQ(cyl[0], 1.0);
  EXPECT_EQ(cyl[1], 1.0);
  EXPECT_NEAR(cyl[2], 0.5717, 1e-4);
}

TEST(BuildDictionary, SizesAndErrors) {
  std::mt19937_64 rng(31);
  const std::vector<double> omegas = sweep_frequencies();
  LabeledCpts one{"blob", {}};
  for (std::size_t n = 0; n < omegas.size(); ++n) one.cpts.emplace_back(oracle::random_structured(rng));
  const std::array<LabeledCpts, 1> shapes{one};
  const Dictionary dict = build_dictionary(shapes, omegas);
  ASSERT_EQ(dict.size(), 1u);
  EXPECT_EQ(dict[0].descriptor.size(), 57u);
  EXPECT_EQ(dict[0].provenance, Provenance::Solver);
  EXPECT_EQ(dict[0].descriptor.frequencies(), omegas);

  const std::array<LabeledCpts, 2> dup{one, one};
  expect_error(ErrorKind::DuplicateLabel, [&] { build_dictionary(dup, omegas); });
  LabeledCpts short_one = one;
  short_one.cpts.pop_back();
  const std::array<LabeledCpts, 1> bad{short_one};
  expect_error(ErrorKind::LengthMismatch, [&] { build_dictionary(bad, omegas); });
  expect_error(ErrorKind::ConfigError, [] { provenance_from_string("bogus"); });
  EXPECT_EQ(provenance_from_string("reference_table"), Provenance::ReferenceTable);
}

TEST(Match, ExactEntryAndPublishedRows) {
  const Dictionary dict = reference_table_dictionary();
  for (const auto& e : dict) {
    const MatchResult r = match(e.descriptor, dict);
    EXPECT_EQ(r.best, e.label);
    EXPECT_EQ(r.distances.at(e.label), 0.0);
    EXPECT_TRUE(r.tied.empty());
  }
  EXPECT_EQ(match(single(1.0, 0.8378, 0.8377), dict).best, "ellipsoid");
  const MatchResult cube = match(single(1.0, 1.0, 1.0), dict);
  EXPECT_EQ(cube.best, "cube");
  const double r = 1.0 - 0.8277 / 0.8282;
  EXPECT_NEAR(cube.distances.at("sphere"), std::hypot(r, r), 1e-12);
  // against the printed four-decimal rows the gap is |(0, 0.0007, 0.0007)|
  Dictionary printed;
  for (const auto& [label, v] : reference_normalized_values())
    printed.push_back({label, single(v[0], v[1], v[2]), Provenance::File});
  const MatchResult p = match(single(1.0, 1.0, 1.0), printed);
  EXPECT_EQ(p.best, "cube");
  EXPECT_NEAR(p.distances.at("sphere"), 9.9e-4, 1e-5);
}

TEST(Match, TiesAndErrors) {
  Dictionary dict{{"zeta", single(1.0, 0.5, 0.5), Provenance::File}, {"alpha", single(1.0, 0.5, 0.5), Provenance::File}};
  const MatchResult r = match(single(1.0, 0.4, 0.4), dict);
  EXPECT_EQ(r.best, "alpha");
  EXPECT_EQ(r.tied, (std::vector<std::string>{"alpha", "zeta"}));
  expect_error(ErrorKind::LengthMismatch, [&] { match(Descriptor({1, 1, 1, 1, 1, 1}, {1, 2}), dict); });
  expect_error(ErrorKind::LengthMismatch, [&] { match(single(1, 1, 1), Dictionary{}); });
}

TEST(Match, DistanceIsAMetric) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto draw = [&] {
    std::vector<double> v(6);
    for (double& x : v) x = u(rng);
    v[static_cast<std::size_t>(u(rng) * 5.999)] = 1.0;
    return Descriptor(v, {1.0, 2.0});
  };
  for (int t = 0; t < 200; ++t) {
    const Descriptor a = draw(), b = draw(), c = draw();
    EXPECT_EQ(descriptor_distance(a, a), 0.0);
    EXPECT_EQ(descriptor_distance(a, b), descriptor_distance(b, a));
    EXPECT_LE(descriptor_distance(a, c), descriptor_distance(a, b) + descriptor_distance(b, c) + 1e-15);
  }
}

TEST(Invariance, RotationLeavesCleanDescriptorUnchanged) {
  const std::vector<double> omegas{103.5, 133.5, 163.5};
  const auto base = solver_target_cpts(solver::ShapeSpec::make(solver::ShapeKind::Prism), 0.25, kConfig, omegas);
  const Descriptor d0 = clean_descriptor(base, omegas, Point::Zero());
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    std::vector<CptTensor> rotated;
    for (const auto& m : base) rotated.push_back(rotate_cpt(m, Rotation::random(seed)));
    const Descriptor d = clean_descriptor(rotated, omegas, Point::Zero());
    EXPECT_LT(descriptor_distance(d, d0), 1e-8);
  }
}

TEST(Invariance, TranslationLeavesCleanDescriptorUnchanged) {
  const std::vector<double> omegas{133.5};
  const auto cpts = solver_target_cpts(solver::ShapeSpec::make(solver::ShapeKind::Cylinder), 0.25, kConfig, omegas);
  const Descriptor d0 = clean_descriptor(cpts, omegas, Point::Zero());
  for (const Point& z : {Point(0.3, -0.2, 0.0), Point(-0.5, 0.4, 0.2)})
    EXPECT_LT(descriptor_distance(clean_descriptor(cpts, omegas, z), d0), 1e-6);
}

TEST(Invariance, SizeChangesMultiFrequencyDescriptor) {
  const std::vector<double> omegas = sweep_frequencies();
  const solver::ShapeSpec sphere = solver::ShapeSpec::make(solver::ShapeKind::Sphere);
  const auto big = solver_target_cpts(sphere, 0.2, kConfig, omegas, {}, 1.0);
  const auto small = solver_target_cpts(sphere, 0.2, kConfig, omegas, {}, 0.5);
  const double gap = descriptor_distance(descriptor_from_cpts(big, omegas), descriptor_from_cpts(small, omegas));
  EXPECT_GT(gap, 1e-2);
}

TEST(SolverTargets, ScaleAndRotationApplied) {
  const std::array<double, 1> w{133.5};
  const solver::ShapeSpec ell = solver::ShapeSpec::make(solver::ShapeKind::Ellipsoid);
  const Rotation r = Rotation::axis_angle(Vec3::UnitY(), kPi / 2);
  const auto plain = solver_target_cpts(ell, 0.25, kConfig, w);
  const auto rotated = solver_target_cpts(ell, 0.25, kConfig, w, r);
  EXPECT_LT((rotated[0].matrix() - rotate_cpt(plain[0], r).matrix()).norm(), 1e-12 * plain[0].matrix().norm());
  const auto half = solver_target_cpts(ell, 0.25, kConfig, w, {}, 0.5);
  const CptTensor direct = solver::CptSolver(solver::voxelize(ell, 0.25)).cpt(0.25 * kConfig.nu()).scaled(std::pow(0.5, 5));
  EXPECT_LT((half[0].matrix() - direct.matrix()).norm(), 1e-12 * direct.matrix().norm());
  expect_error(ErrorKind::DomainError, [&] { solver_target_cpts(ell, 0.25, kConfig, w, {}, 0.0); });
}

TEST(Classify, SmallRunOnReferenceDictionary) {
  ClassificationTarget t;
  t.true_label = "ellipsoid";
  t.omegas = {kReferenceOmega};
  t.cpts = solver_target_cpts(solver::ShapeSpec::make(solver::ShapeKind::Ellipsoid), 0.2, kConfig, t.omegas,
                              Rotation::axis_angle(Vec3::UnitY(), kPi / 2));
  const std::array<double, 2> levels{0.0, 0.1};
  ClassificationOptions opt;
  const ClassificationReport rep = classify_experiment(t, reference_table_dictionary(), levels, 10, opt);
  ASSERT_EQ(rep.levels.size(), 2u);
  EXPECT_EQ(rep.true_label, "ellipsoid");
  for (const auto& lv : rep.levels) {
    EXPECT_EQ(lv.trials, 10);
    EXPECT_TRUE(lv.failures.empty());
    EXPECT_EQ(lv.mean_distance.size(), 6u);
    EXPECT_EQ(lv.argmin, "ellipsoid");
  }
  EXPECT_EQ(rep.levels[0].accuracy, 1.0);
  // deterministic under a fixed seed, independent of the worker count
  opt.jobs = 3;
  const ClassificationReport again = classify_experiment(t, reference_table_dictionary(), levels, 10, opt);
  EXPECT_EQ(again.levels[1].mean_distance, rep.levels[1].mean_distance);
}

TEST(Classify, FailedTrialsAreRecorded) {
  ClassificationTarget t;
  t.true_label = "sphere";
  t.omegas = {kReferenceOmega};
  t.cpts = {CptTensor()};  // no signal: descriptor extraction fails on every trial
  const std::array<double, 1> levels{0.0};
  const ClassificationReport rep = classify_experiment(t, reference_table_dictionary(), levels, 3);
  ASSERT_EQ(rep.levels[0].failures.size(), 3u);
  EXPECT_EQ(rep.levels[0].accuracy, 0.0);
  EXPECT_TRUE(std::isnan(rep.levels[0].mean_distance.at("sphere")));
}

TEST(Classify, InputValidation) {
  ClassificationTarget t;
  t.true_label = "cube";
  t.omegas = {100.0, 200.0};
  t.cpts = {CptTensor(), CptTensor()};
  const std::array<double, 1> levels{0.1};
  expect_error(ErrorKind::LengthMismatch, [&] { classify_experiment(t, reference_table_dictionary(), levels, 1); });
  t.cpts.pop_back();
  expect_error(ErrorKind::LengthMismatch, [&] { classify_experiment(t, reference_table_dictionary(), levels, 1); });
  expect_error(ErrorKind::DomainError, [&] { classify_experiment(t, reference_table_dictionary(), levels, 0); });
  EXPECT_EQ(trial_seed(10, 1, 2, 3, 1, 5, 4), 10u + ((1u * 5 + 2) * 4 + 3) * 3 + 1);
}
