#pragma once

#include <boost/property_tree/info_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "eddyscope/dictionary.hpp"
#include "eddyscope/errors.hpp"
#include "eddyscope/solver/voxel.hpp"
#include "eddyscope/tensor_core.hpp"

namespace eddyscope {

/// One experiment, stored as a Boost INFO tree:
///
///   geometry  { L 1  n_side 16  extent 2 }
///   physics   { mu0 1.2566e-06  sigma 5.97e+07  alpha 0.01  nu_max 4 }
///   target    { shape ellipsoid  rotation { axis "0 1 0"  angle 1.5707963267948966 }  scale 1  center "0 0 0"  h 0.1 }
///   frequencies "133.5"
///   noise_levels "0.1 0.2"
///   trials 1000
///   seed 20240101
///   output out
///   locate     { half 0.5  step 0.05 }
///   dictionary { source reference_table  h 0.1 }
///   resolution { bisection_steps 8  grid_step_rel 0.025  margin_rel 0.6  rank 6 }
struct ExperimentConfig {
  std::string name = "experiment";
  double L = 1.0;
  int n_side = 16;
  double extent = 2.0;

  double mu0 = 1.2566e-6;
  double sigma = 5.97e7;
  double alpha = 0.01;
  double nu_max = 4.0;

  solver::ShapeKind shape = solver::ShapeKind::Ellipsoid;
  Vec3 rotation_axis = Vec3::UnitZ();
  double rotation_angle = 0.0;
  double scale = 1.0;
  Vec3 center = Vec3::Zero();
  double h = 0.1;

  std::vector<double> frequencies{133.5};
  std::vector<double> noise_levels{};
  int trials = 100;
  std::uint64_t seed = 20240101;
  std::string output = "out";

  double locate_half = 0.5;
  double locate_step = 0.05;

  std::string dictionary_source = "reference_table";  ///< reference_table, solver, or a JSON file path
  double dictionary_h = 0.1;

  int bisection_steps = 8;
  double grid_step_rel = 1.0 / 40.0;
  double margin_rel = 0.6;
  int resolution_rank = 6;

  PhysicalConfig physical(double omega) const { return PhysicalConfig(mu0, mu0, sigma, alpha, omega, nu_max); }
  Rotation rotation() const { return Rotation::axis_angle(rotation_axis, rotation_angle); }

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.name == b.name && a.L == b.L && a.n_side == b.n_side && a.extent == b.extent && a.mu0 == b.mu0 &&
           a.sigma == b.sigma && a.alpha == b.alpha && a.nu_max == b.nu_max && a.shape == b.shape &&
           a.rotation_axis == b.rotation_axis && a.rotation_angle == b.rotation_angle && a.scale == b.scale &&
           a.center == b.center && a.h == b.h && a.frequencies == b.frequencies &&
           a.noise_levels == b.noise_levels && a.trials == b.trials && a.seed == b.seed && a.output == b.output &&
           a.locate_half == b.locate_half && a.locate_step == b.locate_step &&
           a.dictionary_source == b.dictionary_source && a.dictionary_h == b.dictionary_h &&
           a.bisection_steps == b.bisection_steps && a.grid_step_rel == b.grid_step_rel &&
           a.margin_rel == b.margin_rel && a.resolution_rank == b.resolution_rank;
  }
};

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

inline std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v[i]);
  return s;
}

/// Like ptree::get with a default, but a present, malformed value throws.
template <class T>
T get_or(const boost::property_tree::ptree& t, const std::string& path, const T& fallback) {
  if (!t.get_child_optional(path)) return fallback;
  return t.get<T>(path);
}

inline std::vector<double> parse_list(const std::string& s, const std::string& key) {
  std::istringstream ss(s);
  std::vector<double> out;
  std::string tok;
  while (ss >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      fail(ErrorKind::ConfigError, "'" + key + "' contains a non-numeric value '" + tok + "'");
    }
  }
  return out;
}

inline Vec3 parse_vec3(const std::string& s, const std::string& key) {
  const auto v = parse_list(s, key);
  require(v.size() == 3, ErrorKind::ConfigError, "'" + key + "' needs three components");
  return Vec3(v[0], v[1], v[2]);
}

inline std::string format_vec3(const Vec3& v) { return format_list({v(0), v(1), v(2)}); }

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  auto check = [](bool ok, const std::string& msg) { require(ok, ErrorKind::ConfigError, msg); };
  check(c.L > 0 && c.extent > 0 && c.n_side >= 2, "geometry needs L > 0, extent > 0 and n_side >= 2");
  check(c.mu0 > 0 && c.sigma > 0 && c.alpha > 0 && c.nu_max > 0, "physical constants must be positive");
  check(c.rotation_axis.norm() > 0, "rotation axis must be nonzero");
  check(c.scale > 0 && c.h > 0 && c.dictionary_h > 0, "scale and voxel sizes must be positive");
  check(!c.frequencies.empty(), "at least one frequency is required");
  for (std::size_t i = 0; i < c.frequencies.size(); ++i) {
    check(c.frequencies[i] > 0, "frequencies must be positive");
    check(i == 0 || c.frequencies[i] > c.frequencies[i - 1], "frequencies must be strictly ascending");
  }
  for (double nl : c.noise_levels) check(nl >= 0, "noise levels must be non-negative");
  check(c.trials >= 1, "trials must be at least 1");
  check(c.locate_half > 0 && c.locate_step > 0, "locate window and step must be positive");
  check(c.bisection_steps >= 1 && c.grid_step_rel > 0 && c.margin_rel > 0 && c.resolution_rank >= 1,
        "resolution settings must be positive");
  if (c.dictionary_source != "reference_table" && c.dictionary_source != "solver")
    check(std::filesystem::exists(c.dictionary_source), "dictionary file '" + c.dictionary_source + "' does not exist");
}

inline boost::property_tree::ptree to_ptree(const ExperimentConfig& c) {
  using detail::format_double;
  boost::property_tree::ptree t;
  t.put("name", c.name);
  t.put("geometry.L", format_double(c.L));
  t.put("geometry.n_side", c.n_side);
  t.put("geometry.extent", format_double(c.extent));
  t.put("physics.mu0", format_double(c.mu0));
  t.put("physics.sigma", format_double(c.sigma));
  t.put("physics.alpha", format_double(c.alpha));
  t.put("physics.nu_max", format_double(c.nu_max));
  t.put("target.shape", solver::to_string(c.shape));
  t.put("target.rotation.axis", detail::format_vec3(c.rotation_axis));
  t.put("target.rotation.angle", format_double(c.rotation_angle));
  t.put("target.scale", format_double(c.scale));
  t.put("target.center", detail::format_vec3(c.center));
  t.put("target.h", format_double(c.h));
  t.put("frequencies", detail::format_list(c.frequencies));
  t.put("noise_levels", detail::format_list(c.noise_levels));
  t.put("trials", c.trials);
  t.put("seed", c.seed);
  t.put("output", c.output);
  t.put("locate.half", format_double(c.locate_half));
  t.put("locate.step", format_double(c.locate_step));
  t.put("dictionary.source", c.dictionary_source);
  t.put("dictionary.h", format_double(c.dictionary_h));
  t.put("resolution.bisection_steps", c.bisection_steps);
  t.put("resolution.grid_step_rel", format_double(c.grid_step_rel));
  t.put("resolution.margin_rel", format_double(c.margin_rel));
  t.put("resolution.rank", c.resolution_rank);
  return t;
}

/// Missing keys keep their defaults; malformed values raise ConfigError.
inline ExperimentConfig from_ptree(const boost::property_tree::ptree& t) {
  ExperimentConfig c;
  try {
    c.name = detail::get_or(t, "name", c.name);
    c.L = detail::get_or(t, "geometry.L", c.L);
    c.n_side = detail::get_or(t, "geometry.n_side", c.n_side);
    c.extent = detail::get_or(t, "geometry.extent", c.extent);
    c.mu0 = detail::get_or(t, "physics.mu0", c.mu0);
    c.sigma = detail::get_or(t, "physics.sigma", c.sigma);
    c.alpha = detail::get_or(t, "physics.alpha", c.alpha);
    c.nu_max = detail::get_or(t, "physics.nu_max", c.nu_max);
    if (auto s = t.get_optional<std::string>("target.shape")) c.shape = solver::shape_kind_from_string(*s);
    if (auto s = t.get_optional<std::string>("target.rotation.axis"))
      c.rotation_axis = detail::parse_vec3(*s, "target.rotation.axis");
    c.rotation_angle = detail::get_or(t, "target.rotation.angle", c.rotation_angle);
    c.scale = detail::get_or(t, "target.scale", c.scale);
    if (auto s = t.get_optional<std::string>("target.center")) c.center = detail::parse_vec3(*s, "target.center");
    c.h = detail::get_or(t, "target.h", c.h);
    if (auto s = t.get_optional<std::string>("frequencies")) c.frequencies = detail::parse_list(*s, "frequencies");
    if (auto s = t.get_optional<std::string>("noise_levels")) c.noise_levels = detail::parse_list(*s, "noise_levels");
    c.trials = detail::get_or(t, "trials", c.trials);
    c.seed = detail::get_or(t, "seed", c.seed);
    c.output = detail::get_or(t, "output", c.output);
    c.locate_half = detail::get_or(t, "locate.half", c.locate_half);
    c.locate_step = detail::get_or(t, "locate.step", c.locate_step);
    c.dictionary_source = detail::get_or(t, "dictionary.source", c.dictionary_source);
    c.dictionary_h = detail::get_or(t, "dictionary.h", c.dictionary_h);
    c.bisection_steps = detail::get_or(t, "resolution.bisection_steps", c.bisection_steps);
    c.grid_step_rel = detail::get_or(t, "resolution.grid_step_rel", c.grid_step_rel);
    c.margin_rel = detail::get_or(t, "resolution.margin_rel", c.margin_rel);
    c.resolution_rank = detail::get_or(t, "resolution.rank", c.resolution_rank);
  } catch (const boost::property_tree::ptree_error& e) {
    fail(ErrorKind::ConfigError, std::string("bad config value: ") + e.what());
  }
  return c;
}

inline std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream ss;
  boost::property_tree::write_info(ss, to_ptree(c));
  return ss.str();
}

inline ExperimentConfig parse_config(const std::string& text) {
  boost::property_tree::ptree t;
  std::istringstream ss(text);
  try {
    boost::property_tree::read_info(ss, t);
  } catch (const boost::property_tree::ptree_error& e) {
    fail(ErrorKind::ConfigError, std::string("cannot parse config: ") + e.what());
  }
  return from_ptree(t);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  boost::property_tree::ptree t;
  try {
    boost::property_tree::read_info(path.string(), t);
  } catch (const boost::property_tree::ptree_error& e) {
    fail(ErrorKind::ConfigError, "cannot read config " + path.string() + ": " + e.what());
  }
  ExperimentConfig c = from_ptree(t);
  validate(c);
  return c;
}

}  // namespace eddyscope
