#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eddyscope/eddyscope.hpp"

using namespace eddyscope;
namespace fs = std::filesystem;
using io::json;

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned jobs = default_jobs();
  std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment config file");
  cmd->add_option("--out", f.out, "output directory (overrides the config)");
  cmd->add_option("--seed", f.seed, "seed base (overrides the config)");
  cmd->add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--format", f.format, "table format")->check(CLI::IsMember({"csv", "json"}));
}

ExperimentConfig resolve_config(const CommonFlags& f) {
  ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  if (!f.out.empty()) c.output = f.out;
  if (f.seed) c.seed = *f.seed;
  validate(c);
  return c;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

json point_json(const Point& p) { return {p.x(), p.y(), p.z()}; }

solver::SolverOptions solver_options(unsigned jobs) {
  solver::SolverOptions opt;
  opt.jobs = static_cast<int>(jobs);
  return opt;
}

/// Tensors of the configured target (shape, rotation, scale) at every configured frequency.
std::vector<CptTensor> target_cpts(const ExperimentConfig& c, unsigned jobs) {
  return solver_target_cpts(solver::ShapeSpec::make(c.shape), c.h, c.physical(c.frequencies.front()),
                            c.frequencies, c.rotation(), c.scale, solver_options(jobs));
}

SensorArray plates(const ExperimentConfig& c) { return SensorArray::plates(c.L, c.n_side, c.extent); }

std::vector<MsrMatrix> read_msrs(const std::vector<std::string>& files) {
  std::vector<MsrMatrix> out;
  for (const auto& f : files) out.push_back(io::read_msr(f));
  return out;
}

void emit(const json& summary) { std::cout << summary.dump(2) << '\n'; }

// ---------------------------------------------------------------------------

int cmd_simulate(const CommonFlags& f) {
  const ExperimentConfig c = resolve_config(f);
  const fs::path out = fs::path(c.output) / "msr";
  const auto cpts = target_cpts(c, f.jobs);
  const SensorArray base = plates(c);
  const std::vector<double> levels = c.noise_levels.empty() ? std::vector<double>{0.0} : c.noise_levels;
  const std::size_t nf = c.frequencies.size();

  json files = json::array();
  for (std::size_t lv = 0; lv < levels.size(); ++lv)
    for (std::size_t n = 0; n < nf; ++n)
      for (int q = 0; q < 3; ++q) {
        const TargetInstance t{c.center, cpts[n], c.physical(c.frequencies[n])};
        const MsrMatrix clean = msr_forward(t, base.with_q(Vec3::Unit(q)));
        const double sigma = levels[lv] * largest_singular_value(clean.A);
        const MsrMatrix a = add_noise(clean, sigma, trial_seed(c.seed, lv, 0, n, static_cast<std::size_t>(q), 1, nf));
        const fs::path file = out / ("level" + std::to_string(lv) + "_freq" + std::to_string(n) + "_q" +
                                     std::to_string(q + 1) + ".msr");
        io::write_msr(file, a);
        files.push_back({{"file", file.string()},
                         {"noise_level", levels[lv]},
                         {"omega", c.frequencies[n]},
                         {"q", q + 1},
                         {"sigma_noise", sigma}});
      }
  json tensors = json::array();
  for (std::size_t n = 0; n < nf; ++n) tensors.push_back(io::to_json(cpts[n], c.frequencies[n]));
  io::write_json(fs::path(c.output) / "target_cpts.json", tensors);
  const json manifest = {{"config", c.name}, {"center", point_json(c.center)}, {"files", files}};
  io::write_json(fs::path(c.output) / "simulate.json", manifest);
  emit({{"command", "simulate"}, {"msr_files", files.size()}, {"output", c.output}});
  return 0;
}

int cmd_locate(const CommonFlags& f, const std::vector<std::string>& files, std::optional<double> half,
               std::optional<double> step, const std::string& rank) {
  const ExperimentConfig c = resolve_config(f);
  const auto msrs = read_msrs(files);
  // MUSIC uses the q = e3 measurement when present
  const MsrMatrix* a = &msrs.front();
  for (const auto& m : msrs)
    if ((m.q - Vec3::UnitZ()).norm() < 1e-12) {
      a = &m;
      break;
    }
  const SensorArray base = plates(c);
  require(a->A.rows() == base.num_receivers() && a->A.cols() == base.num_sources(), ErrorKind::LengthMismatch,
          "MSR dimensions do not match the configured sensor array");
  RankRule rule = RankRule::threshold(0.1);
  if (rank != "threshold") {
    std::size_t used = 0;
    int r = 0;
    try {
      r = std::stoi(rank, &used);
    } catch (const std::exception&) {
    }
    require(used == rank.size() && r >= 1, ErrorKind::ConfigError, "--rank must be a positive integer or 'threshold'");
    rule = RankRule::fixed(r);
  }
  const SearchGrid grid =
      SearchGrid::plane(half.value_or(c.locate_half), step.value_or(c.locate_step), c.center.z(), base.sources());
  const NoiseProjector proj = noise_projector(*a, rule);
  const LocateResult loc = locate(proj, grid, base.sources(), base.p());

  const fs::path out(c.output);
  std::string csv = "x,y,value\n";
  for (std::size_t i = 0; i < grid.size(); ++i)
    csv += num(grid.point(i).x()) + "," + num(grid.point(i).y()) + "," + num(loc.map[i]) + "\n";
  io::write_atomic(out / "imaging_map.csv", csv);
  const json report = {{"z_hat", point_json(loc.z_hat)},
                       {"peak_value", loc.map[loc.peak_index]},
                       {"grid_step", grid.step()},
                       {"signal_rank", proj.signal_rank()},
                       {"omega", a->omega}};
  io::write_json(out / "location.json", report);
  emit({{"command", "locate"}, {"z_hat", point_json(loc.z_hat)}, {"output", c.output}});
  return 0;
}

Point parse_location(const std::string& text, const std::string& file) {
  if (!file.empty()) {
    const json j = io::read_json(file);
    try {
      const auto v = j.at("z_hat").get<std::vector<double>>();
      if (v.size() == 3) return Point(v[0], v[1], v[2]);
    } catch (const json::exception&) {
    }
    fail(ErrorKind::IoError, "location file '" + file + "' has no z_hat triple");
  }
  std::istringstream ss(text);
  Point p;
  std::string rest;
  if (!(ss >> p.x() >> p.y() >> p.z()) || (ss >> rest))
    fail(ErrorKind::ConfigError, "--location expects three numbers, e.g. \"0 0 0\"");
  return p;
}

int cmd_recover(const CommonFlags& f, const std::vector<std::string>& files, const std::string& location,
                const std::string& location_file) {
  const ExperimentConfig c = resolve_config(f);
  require(!location.empty() || !location_file.empty(), ErrorKind::ConfigError,
          "recover needs --location or --location-file");
  const Point z = parse_location(location, location_file);
  const auto msrs = read_msrs(files);
  std::map<double, std::vector<MsrMatrix>> by_omega;
  for (const auto& m : msrs) by_omega[m.omega].push_back(m);

  const RecoveryOperator op(z, plates(c));
  std::vector<RecoveredCpt> rec;
  json arr = json::array();
  for (const auto& [omega, group] : by_omega) {
    rec.push_back(recover_cpt(op, group));
    arr.push_back(io::to_json(rec.back()));
  }
  const fs::path out(c.output);
  io::write_json(out / "recovered.json", arr);
  const Descriptor d = recovered_descriptor(rec);
  io::write_json(out / "descriptor.json", io::to_json(d));
  emit({{"command", "recover"}, {"frequencies", rec.size()}, {"output", c.output}});
  return 0;
}

Dictionary load_dictionary(const ExperimentConfig& c, const std::string& source, unsigned jobs) {
  if (source == "reference_table") return reference_table_dictionary();
  if (source == "solver") {
    const auto shapes = standard_shapes();
    return solver_dictionary(shapes, c.dictionary_h, c.physical(c.frequencies.front()), c.frequencies,
                             solver_options(jobs));
  }
  return io::dictionary_from_json(io::read_json(source));
}

int cmd_build_dict(const CommonFlags& f, const std::string& source_flag) {
  const ExperimentConfig c = resolve_config(f);
  const std::string source = source_flag.empty() ? c.dictionary_source : source_flag;
  require(source == "reference_table" || source == "solver", ErrorKind::ConfigError,
          "build-dict source must be reference_table or solver");
  const Dictionary dict = load_dictionary(c, source, f.jobs);
  io::write_json(fs::path(c.output) / "dictionary.json", io::to_json(dict));
  emit({{"command", "build-dict"}, {"entries", dict.size()}, {"provenance", source}, {"output", c.output}});
  return 0;
}

int cmd_classify(const CommonFlags& f, const std::string& dict_flag) {
  const ExperimentConfig c = resolve_config(f);
  require(!c.noise_levels.empty(), ErrorKind::ConfigError, "classify needs at least one noise level");
  const Dictionary dict = load_dictionary(c, dict_flag.empty() ? c.dictionary_source : dict_flag, f.jobs);

  ClassificationTarget target;
  target.true_label = solver::to_string(c.shape);
  target.z = c.center;
  target.cpts = target_cpts(c, f.jobs);
  target.omegas = c.frequencies;
  ClassificationOptions opt;
  opt.config = c.physical(c.frequencies.front());
  opt.L = c.L;
  opt.n_side = c.n_side;
  opt.extent = c.extent;
  opt.search_half = c.locate_half;
  opt.search_step = c.locate_step;
  opt.seed = c.seed;
  opt.jobs = f.jobs;
  const ClassificationReport report = classify_experiment(target, dict, c.noise_levels, c.trials, opt);

  json levels = json::array();
  std::string csv = "noise_level,label,mean_distance,accuracy\n";
  for (const auto& lv : report.levels) {
    json failures = json::array();
    for (const auto& fl : lv.failures)
      failures.push_back({{"trial", fl.trial}, {"kind", to_string(fl.kind)}, {"message", fl.message}});
    json rows = json::array();
    for (const auto& [label, d] : lv.mean_distance) {
      const double share = static_cast<double>(lv.wins.at(label)) / lv.trials;
      csv += num(lv.noise_level) + "," + label + "," + num(d) + "," + num(share) + "\n";
      rows.push_back({{"label", label}, {"mean_distance", d}, {"accuracy", share}});
    }
    levels.push_back({{"noise_level", lv.noise_level},
                      {"argmin", lv.argmin},
                      {"accuracy", lv.accuracy},
                      {"trials", lv.trials},
                      {"rows", rows},
                      {"failures", failures}});
  }
  const fs::path out(c.output);
  const json full = {{"true_label", report.true_label}, {"levels", levels}};
  if (f.format == "json")
    io::write_json(out / "experiment.json", full);
  else
    io::write_atomic(out / "experiment.csv", csv);
  io::write_json(out / "classification.json", full);
  json brief = json::array();
  for (const auto& lv : report.levels)
    brief.push_back({{"noise_level", lv.noise_level}, {"argmin", lv.argmin}, {"accuracy", lv.accuracy}});
  emit({{"command", "classify"}, {"true_label", report.true_label}, {"levels", brief}, {"output", c.output}});
  return 0;
}

int cmd_resolve(const CommonFlags& f) {
  const ExperimentConfig c = resolve_config(f);
  require(!c.noise_levels.empty(), ErrorKind::ConfigError, "resolve needs at least one noise level");
  ResolutionOptions opt;
  const std::array<double, 1> omega{c.frequencies.front()};
  opt.cpt = solver_target_cpts(solver::ShapeSpec::make(c.shape), c.h, c.physical(omega[0]), omega, c.rotation(),
                               c.scale, solver_options(f.jobs))
                .front();
  opt.config = c.physical(omega[0]);
  opt.n_side = c.n_side;
  opt.extent = c.extent;
  opt.grid_step_rel = c.grid_step_rel;
  opt.margin_rel = c.margin_rel;
  opt.bisection_steps = c.bisection_steps;
  opt.rank_rule = RankRule::fixed(c.resolution_rank);
  opt.seed = c.seed;
  opt.jobs = f.jobs;
  const ResolutionTable table = resolution_study(c.L, c.noise_levels, c.trials, opt);
  const double exponent = table.rows.size() >= 2 ? resolution_exponent(table) : std::nan("");

  const fs::path out(c.output);
  json rows = json::array();
  std::string head = "noise_level", vals = "d_min";
  for (const auto& r : table.rows) {
    head += "," + num(r.noise_level);
    vals += "," + num(r.d_min);
    rows.push_back({{"noise_level", r.noise_level}, {"snr", r.snr}, {"d_min", r.d_min}});
  }
  const json full = {{"L", table.L}, {"rows", rows}, {"monotone", table.monotone},
                     {"exponent", std::isfinite(exponent) ? json(exponent) : json(nullptr)}};
  if (f.format == "json")
    io::write_json(out / "dmin.json", full);
  else
    io::write_atomic(out / "dmin.csv", head + "\n" + vals + "\n");
  emit({{"command", "resolve"}, {"L", table.L}, {"monotone", table.monotone}, {"output", c.output}});
  return 0;
}

int cmd_solve_cpt(const CommonFlags& f, const std::string& shape, std::optional<double> h,
                  std::vector<double> omegas) {
  ExperimentConfig c = resolve_config(f);
  if (!shape.empty()) c.shape = solver::shape_kind_from_string(shape);
  if (h) c.h = *h;
  if (!omegas.empty()) c.frequencies = omegas;
  validate(c);
  const auto sweep = solver::cpt_sweep(solver::ShapeSpec::make(c.shape), c.h, c.physical(c.frequencies.front()),
                                       c.frequencies, solver_options(f.jobs));
  json arr = json::array();
  for (const auto& p : sweep) {
    json j = io::to_json(p.cpt, p.omega);
    j["nu"] = p.nu;
    arr.push_back(std::move(j));
  }
  const json full = {{"shape", solver::to_string(c.shape)}, {"h", c.h}, {"tensors", arr}};
  io::write_json(fs::path(c.output) / "cpts.json", full);
  emit({{"command", "solve-cpt"}, {"shape", solver::to_string(c.shape)}, {"frequencies", sweep.size()},
        {"output", c.output}});
  return 0;
}

// ---------------------------------------------------------------------------

struct Check {
  std::string name;
  bool pass;
  double value;
};

std::vector<Check> run_selftest(unsigned jobs) {
  std::vector<Check> out;
  auto record = [&](std::string name, double value, double bound) { out.push_back({std::move(name), value < bound, value}); };

  double orth = 0.0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const Rotation r = Rotation::random(s);
    orth = std::max({orth, (build_O1(r) * build_O1(r).transpose() - Mat9::Identity()).norm(),
                     (build_O2(r) * build_O2(r).transpose() - Mat9::Identity()).norm()});
  }
  record("tensor_core: O1, O2 orthogonal", orth, 1e-12);

  const PhysicalConfig config = PhysicalConfig::reference();
  const std::array<double, 1> omega{config.omega()};
  const CptTensor m = solver_target_cpts(solver::ShapeSpec::make(solver::ShapeKind::Ellipsoid), 0.25, config, omega,
                                         {}, 1.0, solver_options(jobs))
                          .front();
  double sv = 0.0;
  const auto ref = top_singular_values(m.real());
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const auto t = top_singular_values(rotate_cpt(m, Rotation::random(s)).real());
    for (int i = 0; i < 3; ++i) sv = std::max(sv, std::abs(t[i] - ref[i]) / ref[0]);
  }
  record("tensor_core: rotation keeps singular values", sv, 1e-10);

  const SensorArray array = SensorArray::plates();
  const Point z(0.2, -0.1, 0.0);
  std::array<MsrMatrix, 3> msrs;
  for (int q = 0; q < 3; ++q) msrs[q] = msr_forward(TargetInstance{z, m, config}, array.with_q(Vec3::Unit(q)));
  Eigen::BDCSVD<Eigen::MatrixXd> svd(msrs[2].A);
  record("forward_model: MSR has rank three", svd.singularValues()(3) / svd.singularValues()(0), 1e-10);

  const SearchGrid grid = SearchGrid::plane(0.5, 0.05, 0.0, array.sources());
  const LocateResult loc = locate(msrs[2], grid, array.sources(), array.p());
  record("localization: peak at the target", (loc.z_hat - z).norm(), 1e-9);

  const RecoveredCpt rec = recover_cpt(RecoveryOperator(z, array), msrs);
  const Descriptor got = recovered_descriptor(std::span<const RecoveredCpt>(&rec, 1));
  const Descriptor want = descriptor_from_cpts(std::span<const CptTensor>(&m, 1), omega);
  double dd = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) dd = std::max(dd, std::abs(got.values()[i] - want.values()[i]));
  record("cpt_recovery: clean round trip", dd, 1e-7);

  const Dictionary dict = reference_table_dictionary();
  const MatchResult mr = match(dict[2].descriptor, dict);
  out.push_back({"dictionary: entry matches itself", mr.best == dict[2].label, mr.distances.at(dict[2].label)});

  const CptTensor cube = solver_target_cpts(solver::ShapeSpec::make(solver::ShapeKind::Cube), 0.25, config, omega, {},
                                            1.0, solver_options(jobs))
                             .front();
  const auto cs = top_singular_values(cube.real());
  record("cpt_solver: cube singular values coincide", (cs[0] - cs[2]) / cs[0], 0.02);

  ExperimentConfig c;
  c.frequencies = {83.5, 133.5};
  c.noise_levels = {0.1};
  out.push_back({"cli: config round trip", parse_config(serialize_config(c)) == c, 0.0});
  const MsrMatrix back = io::decode_msr(io::encode_msr(msrs[0]));
  out.push_back({"cli: MSR container round trip", back.A == msrs[0].A && back.omega == msrs[0].omega, 0.0});
  return out;
}

int cmd_selftest(const CommonFlags& f) {
  const auto checks = run_selftest(f.jobs);
  bool all = true;
  json arr = json::array();
  for (const auto& c : checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " (" << num(c.value) << ")\n";
    arr.push_back({{"check", c.name}, {"pass", c.pass}, {"value", c.value}});
    all = all && c.pass;
  }
  if (!f.out.empty()) io::write_json(fs::path(f.out) / "selftest.json", arr);
  return all ? 0 : 3;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigError: return 2;
    case ErrorKind::IoError: return 4;
    default: return 3;
  }
}

void report_error(const std::string& kind, const std::string& message, const std::string& command) {
  std::cerr << json{{"error", kind}, {"message", message}, {"command", command}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eddy-current target simulation, localization, CPT recovery and classification"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* simulate = app.add_subcommand("simulate", "write MSR containers for the configured target");
  add_common(simulate, flags);

  std::vector<std::string> msr_files;
  std::optional<double> half, step;
  std::string rank = "3";
  auto* locate_cmd = app.add_subcommand("locate", "MUSIC imaging over a planar grid");
  add_common(locate_cmd, flags);
  locate_cmd->add_option("msr", msr_files, "MSR container files")->required();
  locate_cmd->add_option("--half", half, "half width of the search square");
  locate_cmd->add_option("--step", step, "search grid step");
  locate_cmd->add_option("--rank", rank, "signal rank: an integer or 'threshold'");

  std::string location, location_file;
  auto* recover = app.add_subcommand("recover", "least-squares CPT recovery at a given location");
  add_common(recover, flags);
  recover->add_option("msr", msr_files, "MSR container files, three per frequency")->required();
  recover->add_option("--location", location, "target location \"x y z\"");
  recover->add_option("--location-file", location_file, "location.json written by locate");

  std::string source;
  auto* build_dict = app.add_subcommand("build-dict", "build a descriptor dictionary");
  add_common(build_dict, flags);
  build_dict->add_option("--source", source, "reference_table or solver");

  std::string dict_file;
  auto* classify = app.add_subcommand("classify", "Monte-Carlo classification experiment");
  add_common(classify, flags);
  classify->add_option("--dict", dict_file, "dictionary JSON (overrides the config source)");

  auto* resolve = app.add_subcommand("resolve", "two-target resolution study");
  add_common(resolve, flags);

  std::string shape;
  std::optional<double> h;
  std::vector<double> omegas;
  auto* solve = app.add_subcommand("solve-cpt", "compute CPTs with the volume-integral solver");
  solve->set_help_flag("--help", "print this help message and exit");
  add_common(solve, flags);
  solve->add_option("--shape", shape, "cube, cylinder, ellipsoid, l_shape, prism or sphere");
  solve->add_option("--h", h, "voxel size")->check(CLI::PositiveNumber);
  solve->add_option("--omega", omegas, "angular frequencies")->delimiter(',');

  auto* selftest = app.add_subcommand("selftest", "quick invariant checks of every module");
  add_common(selftest, flags);

  std::string command = "eddyscope";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("ConfigError", e.what(), command);
    return 2;
  }

  try {
    if (*simulate) return cmd_simulate(flags);
    if (*locate_cmd) return cmd_locate(flags, msr_files, half, step, rank);
    if (*recover) return cmd_recover(flags, msr_files, location, location_file);
    if (*build_dict) return cmd_build_dict(flags, source);
    if (*classify) return cmd_classify(flags, dict_file);
    if (*resolve) return cmd_resolve(flags);
    if (*solve) return cmd_solve_cpt(flags, shape, h, omegas);
    if (*selftest) return cmd_selftest(flags);
  } catch (const Error& e) {
    command = app.get_subcommands().front()->get_name();
    report_error(to_string(e.kind()), e.what(), command);
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    report_error("InternalError", e.what(), app.get_subcommands().front()->get_name());
    return 3;
  }
  return 0;
}
