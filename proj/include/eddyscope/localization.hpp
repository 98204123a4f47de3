#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "eddyscope/errors.hpp"
#include "eddyscope/forward_model.hpp"
#include "eddyscope/parallel.hpp"
#include "eddyscope/tensor_core.hpp"

namespace eddyscope {

// ---------------------------------------------------------------------------
// Search grid: a regular lattice over a box, visited in lexicographic (x, y, z) order.

class SearchGrid {
 public:
  SearchGrid(const Point& lo, const Point& hi, double step, std::span<const Point> exclude = {})
      : lo_(lo), step_(step) {
    require(step > 0 && std::isfinite(step), ErrorKind::DomainError, "grid step must be positive");
    for (int a = 0; a < 3; ++a) {
      require(hi(a) >= lo(a), ErrorKind::DomainError, "grid box is inverted");
      dims_[a] = static_cast<int>(std::floor((hi(a) - lo(a)) / step + 1e-9)) + 1;
    }
    const std::size_t n = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    points_.reserve(n);
    active_.reserve(n);
    for (int i = 0; i < dims_[0]; ++i)
      for (int j = 0; j < dims_[1]; ++j)
        for (int k = 0; k < dims_[2]; ++k) {
          const Point x = lo + step * Vec3(i, j, k);
          bool ok = true;
          for (const auto& e : exclude)
            if ((e - x).norm() < kSingularDistance) ok = false;
          points_.push_back(x);
          active_.push_back(ok);
        }
    require(std::find(active_.begin(), active_.end(), true) != active_.end(), ErrorKind::EmptyGrid,
            "search grid has no admissible points");
  }

  /// Square [-half, half]^2 in the plane z = height.
  static SearchGrid plane(double half, double step, double height = 0.0,
                          std::span<const Point> exclude = {}) {
    return SearchGrid(Point(-half, -half, height), Point(half, half, height), step, exclude);
  }

  double step() const { return step_; }
  const std::array<int, 3>& dims() const { return dims_; }
  std::size_t size() const { return points_.size(); }
  const Point& point(std::size_t idx) const { return points_[idx]; }
  bool active(std::size_t idx) const { return active_[idx]; }
  const std::vector<Point>& points() const { return points_; }

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * dims_[1] + j) * dims_[2] + k;
  }

 private:
  Point lo_;
  double step_;
  std::array<int, 3> dims_{};
  std::vector<Point> points_;
  std::vector<bool> active_;
};

// ---------------------------------------------------------------------------

struct RankRule {
  enum class Kind { Fixed, Threshold };
  Kind kind = Kind::Fixed;
  int rank = 3;
  double tau = 0.1;

  static RankRule fixed(int r) { return {Kind::Fixed, r, 0.0}; }
  static RankRule threshold(double tau) { return {Kind::Threshold, 0, tau}; }
};

/// Orthogonal projector onto the complement of the dominant right singular subspace.
/// Held in factored form P = I - V V^T.
class NoiseProjector {
 public:
  NoiseProjector(Eigen::MatrixXd signal_basis, Eigen::VectorXd singular_values)
      : v_(std::move(signal_basis)), s_(std::move(singular_values)) {}

  int signal_rank() const { return static_cast<int>(v_.cols()); }
  Eigen::Index dimension() const { return v_.rows(); }
  const Eigen::MatrixXd& signal_basis() const { return v_; }
  const Eigen::VectorXd& singular_values() const { return s_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return x - v_ * (v_.transpose() * x); }

  Eigen::MatrixXd matrix() const {
    return Eigen::MatrixXd::Identity(v_.rows(), v_.rows()) - v_ * v_.transpose();
  }

 private:
  Eigen::MatrixXd v_;  // M x r, orthonormal columns
  Eigen::VectorXd s_;  // all singular values of the data, descending
};

inline NoiseProjector noise_projector(const Eigen::MatrixXd& a, const RankRule& rule) {
  require(a.rows() > 0 && a.cols() > 0, ErrorKind::DomainError, "empty MSR matrix");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const Eigen::Index full = std::min(a.rows(), a.cols());
  Eigen::Index r = 0;
  if (rule.kind == RankRule::Kind::Fixed) {
    require(rule.rank >= 0, ErrorKind::RankError, "negative signal rank");
    r = rule.rank;
  } else {
    while (r < s.size() && s(r) > rule.tau * s(0)) ++r;
  }
  if (r >= full) fail(ErrorKind::RankError, "signal rank leaves no noise subspace");
  return NoiseProjector(svd.matrixV().leftCols(r), s);
}

inline NoiseProjector noise_projector(const MsrMatrix& a, const RankRule& rule = RankRule::fixed(3)) {
  return noise_projector(a.A, rule);
}

/// Rows i = 0..2 hold the steering vectors g_i(z) with entries (D^2 G(z, s_m) p)_i.
inline Eigen::Matrix<double, 3, Eigen::Dynamic> steering_vectors(const Point& zs,
                                                                  std::span<const Point> sources,
                                                                  const Vec3& p) {
  Eigen::Matrix<double, 3, Eigen::Dynamic> g(3, static_cast<Eigen::Index>(sources.size()));
  for (std::size_t m = 0; m < sources.size(); ++m)
    g.col(static_cast<Eigen::Index>(m)) = green_hessian(zs, sources[m]) * p;
  return g;
}

/// MUSIC imaging functional [sum_i |P g_i(z)|^2]^{-1/2}.
inline double music_functional(const NoiseProjector& proj, const Point& zs,
                               std::span<const Point> sources, const Vec3& p) {
  require(static_cast<Eigen::Index>(sources.size()) == proj.dimension(), ErrorKind::LengthMismatch,
          "projector dimension does not match the number of sources");
  const auto g = steering_vectors(zs, sources, p);
  const Eigen::MatrixXd coeff = g * proj.signal_basis();  // 3 x r
  const Eigen::MatrixXd resid = g - coeff * proj.signal_basis().transpose();
  const double den = resid.squaredNorm();
  return 1.0 / std::sqrt(std::max(den, std::numeric_limits<double>::min()));
}

struct LocateResult {
  Point z_hat;
  std::size_t peak_index = 0;
  std::vector<double> map;  ///< functional per grid point, 0 on excluded points
};

inline std::vector<double> imaging_map(const NoiseProjector& proj, const SearchGrid& grid,
                                       std::span<const Point> sources, const Vec3& p) {
  std::vector<double> values(grid.size(), 0.0);
  for (std::size_t idx = 0; idx < grid.size(); ++idx)
    if (grid.active(idx)) values[idx] = music_functional(proj, grid.point(idx), sources, p);
  return values;
}

/// Grid argmax of the imaging functional; ties go to the lexicographically first point.
inline LocateResult locate(const NoiseProjector& proj, const SearchGrid& grid,
                           std::span<const Point> sources, const Vec3& p) {
  LocateResult out;
  out.map = imaging_map(proj, grid, sources, p);
  double best = -1.0;
  for (std::size_t idx = 0; idx < grid.size(); ++idx)
    if (grid.active(idx) && out.map[idx] > best) {
      best = out.map[idx];
      out.peak_index = idx;
    }
  out.z_hat = grid.point(out.peak_index);
  return out;
}

inline LocateResult locate(const MsrMatrix& a, const SearchGrid& grid, std::span<const Point> sources,
                           const Vec3& p, const RankRule& rule = RankRule::fixed(3)) {
  return locate(noise_projector(a, rule), grid, sources, p);
}

// ---------------------------------------------------------------------------
// Two-target resolution.

struct DifferentiationCriterion {
  double peak_fraction = 0.5;  ///< local maxima counted above this fraction of the global max
  double dip_fraction = 0.75;  ///< midpoint value must fall below this fraction of the lower peak
  double center_steps = 2.0;   ///< peak-to-center tolerance max(center_steps h, d * center_frac)
  double center_frac = 0.25;
};

/// Local maxima over the planar (x, y) lattice; 8-neighbourhood, ties to the earlier point.
inline std::vector<std::size_t> local_maxima(const SearchGrid& grid, std::span<const double> values) {
  const auto& d = grid.dims();
  require(d[2] == 1, ErrorKind::DomainError, "local maxima are defined on planar grids");
  std::vector<std::size_t> out;
  for (int i = 0; i < d[0]; ++i)
    for (int j = 0; j < d[1]; ++j) {
      const std::size_t c = grid.index(i, j, 0);
      if (!grid.active(c)) continue;
      bool is_max = true;
      for (int di = -1; di <= 1 && is_max; ++di)
        for (int dj = -1; dj <= 1 && is_max; ++dj) {
          if (di == 0 && dj == 0) continue;
          const int ii = i + di, jj = j + dj;
          if (ii < 0 || jj < 0 || ii >= d[0] || jj >= d[1]) continue;
          const std::size_t nb = grid.index(ii, jj, 0);
          if (!grid.active(nb)) continue;
          if (values[nb] > values[c] || (values[nb] == values[c] && nb < c)) is_max = false;
        }
      if (is_max) out.push_back(c);
    }
  return out;
}

/// True when the map shows two distinct peaks at the two centers with a dip in between.
inline bool differentiated(const NoiseProjector& proj, const SearchGrid& grid,
                           std::span<const double> values, const Point& z1, const Point& z2,
                           std::span<const Point> sources, const Vec3& p,
                           const DifferentiationCriterion& crit = {}) {
  double global = 0.0;
  for (double v : values) global = std::max(global, v);
  std::vector<std::size_t> peaks;
  for (std::size_t idx : local_maxima(grid, values))
    if (values[idx] > crit.peak_fraction * global) peaks.push_back(idx);
  if (peaks.size() != 2) return false;

  const double d = (z2 - z1).norm();
  const double tol = std::max(crit.center_steps * grid.step(), crit.center_frac * d);
  const Point& a = grid.point(peaks[0]);
  const Point& b = grid.point(peaks[1]);
  const bool direct = (a - z1).norm() <= tol && (b - z2).norm() <= tol;
  const bool swapped = (a - z2).norm() <= tol && (b - z1).norm() <= tol;
  if (!direct && !swapped) return false;

  const double lower = std::min(values[peaks[0]], values[peaks[1]]);
  const double mid = music_functional(proj, 0.5 * (z1 + z2), sources, p);
  return mid < crit.dip_fraction * lower;
}

struct ResolutionOptions {
  CptTensor cpt;           ///< unit-shape CPT of each target
  PhysicalConfig config;   ///< conductor, size and frequency
  int n_side = 16;
  double extent = 2.0;
  double grid_step_rel = 1.0 / 40.0;  ///< search step as a fraction of L
  double margin_rel = 0.6;            ///< search window margin around the pair, fraction of L
  int bisection_steps = 8;
  double vote_fraction = 0.5;
  RankRule rank_rule = RankRule::fixed(6);
  DifferentiationCriterion criterion;
  std::uint64_t seed = 20240101;
  unsigned jobs = 1;
};

struct ResolutionRow {
  double noise_level;
  double snr;
  double d_min;
};

struct ResolutionTable {
  double L = 0.0;
  std::vector<ResolutionRow> rows;
  bool monotone = true;  ///< d_min nondecreasing in noise level
};

namespace detail {

struct PairSetup {
  SensorArray array;
  Eigen::MatrixXd clean;
  double sigma1;
  SearchGrid grid;
  Point z1, z2;
};

inline PairSetup make_pair(double L, double d, const ResolutionOptions& opt) {
  SensorArray array = SensorArray::plates(L, opt.n_side, opt.extent);
  const Point z1(-0.5 * d, 0.0, 0.0);
  const Point z2(0.5 * d, 0.0, 0.0);
  const std::array<TargetInstance, 2> targets{TargetInstance{z1, opt.cpt, opt.config},
                                              TargetInstance{z2, opt.cpt, opt.config}};
  Eigen::MatrixXd clean = msr_forward(targets, array).A;
  const double sigma1 = largest_singular_value(clean);
  const double h = opt.grid_step_rel * L;
  const double w = opt.margin_rel * L;
  // symmetric about the midpoint so both centers sit at mirrored lattice offsets
  const double kx = std::ceil((0.5 * d + w) / h - 1e-9) * h;
  const double ky = std::ceil(w / h - 1e-9) * h;
  SearchGrid grid(Point(-kx, -ky, 0.0), Point(kx, ky, 0.0), h, array.sources());
  return {std::move(array), std::move(clean), sigma1, std::move(grid), z1, z2};
}

}  // namespace detail

/// Fraction of noisy trials in which two targets at separation d are differentiated.
/// Trial t uses the same Gaussian matrix at every separation and noise level.
inline double differentiation_rate(double L, double d, double noise_level,
                                   std::span<const Eigen::MatrixXd> noise,
                                   const ResolutionOptions& opt) {
  const detail::PairSetup setup = detail::make_pair(L, d, opt);
  const double sigma_noise = noise_level * setup.sigma1;
  const double scale = sigma_noise / std::sqrt(static_cast<double>(setup.clean.cols()));
  std::vector<char> ok(noise.size(), 0);
  parallel_for(noise.size(), opt.jobs, [&](std::size_t t) {
    const Eigen::MatrixXd a = setup.clean + scale * noise[t];
    const NoiseProjector proj = noise_projector(a, opt.rank_rule);
    const auto values = imaging_map(proj, setup.grid, setup.array.sources(), setup.array.p());
    ok[t] = differentiated(proj, setup.grid, values, setup.z1, setup.z2, setup.array.sources(),
                           setup.array.p(), opt.criterion);
  });
  double count = 0;
  for (char c : ok) count += c;
  return noise.empty() ? 0.0 : count / static_cast<double>(noise.size());
}

/// Bisection over the separation of two identical targets centered on the origin; returns the
/// smallest separation differentiated in at least `vote_fraction` of trials, for each noise level.
inline ResolutionTable resolution_study(double L, std::span<const double> noise_levels, int trials,
                                        const ResolutionOptions& opt) {
  require(L > 0, ErrorKind::DomainError, "L must be positive");
  require(trials >= 1, ErrorKind::DomainError, "need at least one trial");
  for (double nl : noise_levels)
    require(nl > 0 && nl < 1, ErrorKind::DomainError, "noise levels must lie in (0, 1)");

  const Eigen::Index m = static_cast<Eigen::Index>(opt.n_side) * opt.n_side;
  std::vector<Eigen::MatrixXd> noise(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) noise[t] = gaussian_matrix(m, m, opt.seed + static_cast<std::uint64_t>(t));

  ResolutionTable table;
  table.L = L;
  const double h = opt.grid_step_rel * L;
  for (double nl : noise_levels) {
    // upper bracket: largest of 4L, 2L, L, ... that is differentiated (wide pairs can leave the aperture)
    double lo = h, hi = 4.0 * L;
    while (differentiation_rate(L, hi, nl, noise, opt) < opt.vote_fraction) {
      hi *= 0.5;
      if (hi <= h) fail(ErrorKind::BisectionFailure, "no separation in [h, 4L] is differentiated");
    }
    for (int it = 0; it < opt.bisection_steps; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (differentiation_rate(L, mid, nl, noise, opt) >= opt.vote_fraction)
        hi = mid;
      else
        lo = mid;
    }
    table.rows.push_back({nl, 1.0 / nl, hi});
  }
  for (std::size_t i = 1; i < table.rows.size(); ++i)
    if (table.rows[i].noise_level >= table.rows[i - 1].noise_level &&
        table.rows[i].d_min < table.rows[i - 1].d_min)
      table.monotone = false;
  return table;
}

/// Least-squares slope of log d_min against log SNR.
inline double resolution_exponent(const ResolutionTable& table) {
  const std::size_t n = table.rows.size();
  require(n >= 2, ErrorKind::DomainError, "need at least two rows for a slope");
  double mx = 0, my = 0;
  for (const auto& r : table.rows) {
    mx += std::log(r.snr);
    my += std::log(r.d_min);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (const auto& r : table.rows) {
    sxy += (std::log(r.snr) - mx) * (std::log(r.d_min) - my);
    sxx += (std::log(r.snr) - mx) * (std::log(r.snr) - mx);
  }
  return sxy / sxx;
}

}  // namespace eddyscope
