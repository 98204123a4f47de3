#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eddyscope/cpt_recovery.hpp"
#include "eddyscope/errors.hpp"
#include "eddyscope/forward_model.hpp"
#include "eddyscope/localization.hpp"
#include "eddyscope/parallel.hpp"
#include "eddyscope/solver/cpt_solver.hpp"
#include "eddyscope/tensor_core.hpp"

namespace eddyscope {

enum class Provenance { Solver, ReferenceTable, File };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::Solver: return "solver";
    case Provenance::ReferenceTable: return "reference_table";
    case Provenance::File: return "file";
  }
  return "unknown";
}

inline Provenance provenance_from_string(const std::string& s) {
  for (Provenance p : {Provenance::Solver, Provenance::ReferenceTable, Provenance::File})
    if (s == to_string(p)) return p;
  fail(ErrorKind::ConfigError, "unknown provenance '" + s + "'");
}

struct DictionaryEntry {
  std::string label;
  Descriptor descriptor;
  Provenance provenance = Provenance::Solver;

  friend bool operator==(const DictionaryEntry&, const DictionaryEntry&) = default;
};

using Dictionary = std::vector<DictionaryEntry>;

inline void check_unique_labels(const Dictionary& dict) {
  std::set<std::string> seen;
  for (const auto& e : dict)
    if (!seen.insert(e.label).second) fail(ErrorKind::DuplicateLabel, "duplicate dictionary label '" + e.label + "'");
}

struct LabeledCpts {
  std::string label;
  std::vector<CptTensor> cpts;  ///< one per frequency
};

inline Dictionary build_dictionary(std::span<const LabeledCpts> shapes, std::span<const double> omegas,
                                   Provenance provenance = Provenance::Solver) {
  Dictionary dict;
  for (const auto& s : shapes) {
    require(s.cpts.size() == omegas.size(), ErrorKind::LengthMismatch,
            "shape '" + s.label + "' has " + std::to_string(s.cpts.size()) + " tensors for " +
                std::to_string(omegas.size()) + " frequencies");
    dict.push_back({s.label, descriptor_from_cpts(s.cpts, omegas), provenance});
  }
  check_unique_labels(dict);
  return dict;
}

struct LabeledSingularValues {
  std::string label;
  std::vector<std::array<double, 3>> values;  ///< one triple per frequency
};

inline Dictionary build_dictionary(std::span<const LabeledSingularValues> shapes, std::span<const double> omegas,
                                   Provenance provenance) {
  Dictionary dict;
  for (const auto& s : shapes)
    dict.push_back({s.label, descriptor_from_singular_values(s.values, {omegas.begin(), omegas.end()}), provenance});
  check_unique_labels(dict);
  return dict;
}

inline constexpr double kReferenceOmega = 133.5;

/// Published top-three singular values of the unit-scale shapes at the reference frequency.
inline std::vector<LabeledSingularValues> reference_singular_values() {
  return {
      {"cube", {{2.2485, 2.2485, 2.2484}}},      {"cylinder", {{0.5997, 0.5997, 0.3429}}},
      {"ellipsoid", {{2.6159, 2.1916, 2.1916}}}, {"l_shape", {{0.1316, 0.1278, 0.0941}}},
      {"prism", {{3.0423, 2.8299, 2.3296}}},     {"sphere", {{0.8282, 0.8277, 0.8277}}},
  };
}

/// Published normalized values, as printed to four decimals.
inline std::vector<std::pair<std::string, std::array<double, 3>>> reference_normalized_values() {
  return {
      {"cube", {1.0, 1.0, 1.0}},           {"cylinder", {1.0, 1.0, 0.5717}}, {"ellipsoid", {1.0, 0.8378, 0.8377}},
      {"l_shape", {1.0, 0.9715, 0.7151}},  {"prism", {1.0, 0.9302, 0.7657}}, {"sphere", {1.0, 0.9993, 0.9993}},
  };
}

inline Dictionary reference_table_dictionary() {
  const std::array<double, 1> omegas{kReferenceOmega};
  return build_dictionary(std::span<const LabeledSingularValues>(reference_singular_values()), omegas,
                          Provenance::ReferenceTable);
}

inline double descriptor_distance(const Descriptor& a, const Descriptor& b) {
  require(a.size() == b.size(), ErrorKind::LengthMismatch,
          "descriptor lengths differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

struct MatchResult {
  std::string best;
  std::map<std::string, double> distances;
  std::vector<std::string> tied;  ///< labels sharing the minimum distance when more than one
};

/// Nearest entry in Euclidean distance; exact ties go to the lexicographically smallest label.
inline MatchResult match(const Descriptor& d_hat, const Dictionary& dict) {
  require(!dict.empty(), ErrorKind::LengthMismatch, "dictionary is empty");
  MatchResult out;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : dict) {
    const double d = descriptor_distance(d_hat, e.descriptor);
    out.distances[e.label] = d;
    best = std::min(best, d);
  }
  std::vector<std::string> at_min;
  for (const auto& [label, d] : out.distances)
    if (d == best) at_min.push_back(label);
  out.best = at_min.front();
  if (at_min.size() > 1) out.tied = std::move(at_min);
  return out;
}

// ---------------------------------------------------------------------------
// Solver-backed tensors.

/// Tensors of a unit-scale shape dilated by `scale` and rotated by `rotation`, at each frequency.
/// Uses M[omega, sB] = s^5 M[omega s^2, B] so that only the unit shape is discretized.
inline std::vector<CptTensor> solver_target_cpts(const solver::ShapeSpec& shape, double h, const PhysicalConfig& config,
                                                 std::span<const double> omegas, const Rotation& rotation = {},
                                                 double scale = 1.0, const solver::SolverOptions& opt = {}) {
  require(scale > 0 && std::isfinite(scale), ErrorKind::DomainError, "scale factor must be positive");
  solver::CptSolver s(solver::voxelize(shape, h), opt);
  std::vector<CptTensor> out;
  out.reserve(omegas.size());
  for (double w : omegas) {
    const PhysicalConfig c = config.with_omega(w);
    require(!c.beyond_asymptotic_regime(), ErrorKind::DomainError, "nu exceeds the admissible maximum");
    const ScalingMap sm = scaling_map(scale, c.nu());
    out.push_back(rotate_cpt(s.cpt(sm.omega_sigma_scaled).scaled(sm.factor), rotation));
  }
  return out;
}

struct DictionaryShape {
  std::string label;
  solver::ShapeSpec shape;
};

inline std::vector<DictionaryShape> standard_shapes() {
  using solver::ShapeKind;
  using solver::ShapeSpec;
  return {{"cube", ShapeSpec::make(ShapeKind::Cube)},       {"cylinder", ShapeSpec::make(ShapeKind::Cylinder)},
          {"ellipsoid", ShapeSpec::make(ShapeKind::Ellipsoid)}, {"l_shape", ShapeSpec::make(ShapeKind::LShape)},
          {"prism", ShapeSpec::make(ShapeKind::Prism)},     {"sphere", ShapeSpec::make(ShapeKind::Sphere)}};
}

inline Dictionary solver_dictionary(std::span<const DictionaryShape> shapes, double h, const PhysicalConfig& config,
                                    std::span<const double> omegas, const solver::SolverOptions& opt = {}) {
  std::vector<LabeledCpts> tensors;
  for (const auto& s : shapes) tensors.push_back({s.label, solver_target_cpts(s.shape, h, config, omegas, {}, 1.0, opt)});
  return build_dictionary(tensors, omegas, Provenance::Solver);
}

// ---------------------------------------------------------------------------
// Monte-Carlo classification.

struct ClassificationTarget {
  std::string true_label;
  Point z = Point::Zero();
  std::vector<CptTensor> cpts;  ///< unit-shape tensors (size scaling included), one per frequency
  std::vector<double> omegas;   ///< strictly ascending
};

struct ClassificationOptions {
  PhysicalConfig config = PhysicalConfig::reference();
  double L = 1.0;
  int n_side = 16;
  double extent = 2.0;
  double search_half = 0.5;  ///< planar search window [-a, a]^2 through the target height
  double search_step = 0.05;
  RankRule rank_rule = RankRule::fixed(3);
  double truncation = kDefaultRecoveryTruncation;
  std::uint64_t seed = 20240101;
  unsigned jobs = 1;
};

struct TrialFailure {
  int trial;
  ErrorKind kind;
  std::string message;
};

struct LevelResult {
  double noise_level = 0.0;
  std::map<std::string, double> mean_distance;  ///< over successful trials
  std::map<std::string, int> wins;              ///< trials whose best match is each label
  double accuracy = 0.0;                        ///< correct / all trials, failures count as wrong
  int trials = 0;
  std::vector<TrialFailure> failures;
  std::string argmin;  ///< label with the smallest mean distance
};

struct ClassificationReport {
  std::string true_label;
  std::vector<LevelResult> levels;
};

/// Seed of the Gaussian matrix for (level, trial, frequency, measurement direction).
inline std::uint64_t trial_seed(std::uint64_t base, std::size_t level, std::size_t trial, std::size_t freq,
                                std::size_t axis, std::size_t n_trials, std::size_t n_freq) {
  return base + ((static_cast<std::uint64_t>(level) * n_trials + trial) * n_freq + freq) * 3 + axis;
}

/// Full pipeline per trial: forward, noise, locate, recover, descriptor, match.
inline ClassificationReport classify_experiment(const ClassificationTarget& target, const Dictionary& dict,
                                                std::span<const double> noise_levels, int trials,
                                                const ClassificationOptions& opt = {}) {
  require(trials >= 1, ErrorKind::DomainError, "need at least one trial");
  require(!target.omegas.empty() && target.cpts.size() == target.omegas.size(), ErrorKind::LengthMismatch,
          "one target tensor per frequency");
  require(!dict.empty(), ErrorKind::LengthMismatch, "dictionary is empty");
  for (const auto& e : dict)
    require(e.descriptor.size() == 3 * target.omegas.size(), ErrorKind::LengthMismatch,
            "dictionary entry '" + e.label + "' does not match the number of frequencies");

  const std::size_t nf = target.omegas.size();
  const SensorArray base = SensorArray::plates(opt.L, opt.n_side, opt.extent);
  std::vector<std::array<MsrMatrix, 3>> clean(nf);
  std::vector<std::array<double, 3>> sigma1(nf);
  for (std::size_t n = 0; n < nf; ++n)
    for (int q = 0; q < 3; ++q) {
      const TargetInstance t{target.z, target.cpts[n], opt.config.with_omega(target.omegas[n])};
      clean[n][q] = msr_forward(t, base.with_q(Vec3::Unit(q)));
      sigma1[n][q] = largest_singular_value(clean[n][q].A);
    }
  const SearchGrid grid(Point(target.z.x() - opt.search_half, target.z.y() - opt.search_half, target.z.z()),
                        Point(target.z.x() + opt.search_half, target.z.y() + opt.search_half, target.z.z()),
                        opt.search_step, base.sources());

  ClassificationReport report;
  report.true_label = target.true_label;
  for (std::size_t lv = 0; lv < noise_levels.size(); ++lv) {
    const double nl = noise_levels[lv];
    require(nl >= 0 && std::isfinite(nl), ErrorKind::DomainError, "noise level must be non-negative");
    struct Outcome {
      std::optional<MatchResult> match;
      std::optional<TrialFailure> failure;
    };
    std::vector<Outcome> outcomes(static_cast<std::size_t>(trials));
    parallel_for(outcomes.size(), opt.jobs, [&](std::size_t t) {
      try {
        std::vector<std::array<MsrMatrix, 3>> noisy(nf);
        for (std::size_t n = 0; n < nf; ++n)
          for (int q = 0; q < 3; ++q)
            noisy[n][q] = add_noise(clean[n][q], nl * sigma1[n][q],
                                    trial_seed(opt.seed, lv, t, n, static_cast<std::size_t>(q),
                                               static_cast<std::size_t>(trials), nf));
        const LocateResult loc = locate(noisy[0][2], grid, base.sources(), base.p(), opt.rank_rule);
        const RecoveryOperator op(loc.z_hat, base, opt.truncation);
        std::vector<RecoveredCpt> rec;
        rec.reserve(nf);
        for (std::size_t n = 0; n < nf; ++n) rec.push_back(recover_cpt(op, noisy[n]));
        outcomes[t].match = match(recovered_descriptor(rec), dict);
      } catch (const Error& e) {
        outcomes[t].failure = TrialFailure{static_cast<int>(t), e.kind(), e.what()};
      }
    });
    LevelResult res;
    res.noise_level = nl;
    res.trials = trials;
    int ok = 0, correct = 0;
    for (const auto& e : dict) {
      res.mean_distance[e.label] = 0.0;
      res.wins[e.label] = 0;
    }
    for (const auto& o : outcomes) {
      if (o.failure) {
        res.failures.push_back(*o.failure);
        continue;
      }
      ++ok;
      ++res.wins[o.match->best];
      if (o.match->best == target.true_label) ++correct;
      for (const auto& [label, d] : o.match->distances) res.mean_distance[label] += d;
    }
    for (auto& [label, d] : res.mean_distance) d = ok > 0 ? d / ok : std::numeric_limits<double>::quiet_NaN();
    res.accuracy = static_cast<double>(correct) / trials;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [label, d] : res.mean_distance)
      if (d < best) {
        best = d;
        res.argmin = label;
      }
    report.levels.push_back(std::move(res));
  }
  return report;
}

}  // namespace eddyscope
