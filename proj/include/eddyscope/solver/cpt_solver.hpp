#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>
#include <vector>

#include "eddyscope/errors.hpp"
#include "eddyscope/parallel.hpp"
#include "eddyscope/solver/gmres.hpp"
#include "eddyscope/solver/newton_potential.hpp"
#include "eddyscope/solver/voxel.hpp"
#include "eddyscope/tensor_core.hpp"

namespace eddyscope::solver {

struct SolverOptions {
  GmresOptions gmres{};
  int jobs = 1;
};

/// Interior faces of a voxel grid. Face f joins cells a(f) and a(f) + e_dir(f);
/// faces are ordered by direction, then by the lower cell.
class FaceLayout {
 public:
  explicit FaceLayout(const VoxelGrid& grid) : h_(grid.h()), n_cells_(grid.size()) {
    for (int d = 0; d < 3; ++d) {
      offset_[d] = lower_.size();
      face_of_[d].assign(grid.size(), -1);
      for (std::size_t c = 0; c < grid.size(); ++c) {
        Index3 nb = grid.cells()[c];
        ++nb[d];
        const int b = grid.find(nb);
        if (b < 0) continue;
        face_of_[d][c] = static_cast<int>(lower_.size());
        lower_.push_back(static_cast<int>(c));
        upper_.push_back(b);
        pos_[d].push_back(grid.cells()[c]);
        centers_.push_back(grid.center(c) + 0.5 * grid.h() * Vec3::Unit(d));
      }
    }
    offset_[3] = lower_.size();
  }

  std::size_t size() const { return lower_.size(); }
  std::size_t cells() const { return n_cells_; }
  std::size_t begin(int d) const { return offset_[d]; }
  std::size_t count(int d) const { return offset_[d + 1] - offset_[d]; }
  int direction(std::size_t f) const { return f < offset_[1] ? 0 : (f < offset_[2] ? 1 : 2); }
  int lower(std::size_t f) const { return lower_[f]; }
  int upper(std::size_t f) const { return upper_[f]; }
  const Vec3& center(std::size_t f) const { return centers_[f]; }
  const std::vector<Index3>& lattice_positions(int d) const { return pos_[d]; }
  /// Face in direction d whose lower cell is c, or -1.
  int face_above(int d, std::size_t c) const { return face_of_[d][c]; }

  /// Net outflow per cell.
  Eigen::VectorXcd divergence(const Eigen::VectorXcd& j) const {
    Eigen::VectorXcd div = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n_cells_));
    for (std::size_t f = 0; f < size(); ++f) {
      div(lower_[f]) += j(static_cast<Eigen::Index>(f));
      div(upper_[f]) -= j(static_cast<Eigen::Index>(f));
    }
    return div;
  }

 private:
  double h_;
  std::size_t n_cells_;
  std::array<std::size_t, 4> offset_{};
  std::array<std::vector<int>, 3> face_of_;
  std::vector<int> lower_, upper_;
  std::array<std::vector<Index3>, 3> pos_;
  std::vector<Vec3> centers_;
};

/// Induced current density on the faces of a grid for unit excitation along one axis.
struct CurrentField {
  std::shared_ptr<const VoxelGrid> grid;
  std::shared_ptr<const FaceLayout> faces;
  double nu = 0.0;
  int axis = 0;
  Eigen::VectorXcd flux;
  int iterations = 0;
  double residual = 0.0;

  /// Per-voxel current vectors, averaging the two faces along each direction (boundary faces carry none).
  std::vector<CVec3> cell_currents() const {
    std::vector<CVec3> out(grid->size(), CVec3::Zero());
    for (std::size_t f = 0; f < faces->size(); ++f) {
      const int d = faces->direction(f);
      const cplx half = 0.5 * flux(static_cast<Eigen::Index>(f));
      out[faces->lower(f)](d) += half;
      out[faces->upper(f)](d) += half;
    }
    return out;
  }

  /// ||div J|| / ||J||.
  double divergence_ratio() const {
    const double n = flux.norm();
    return n == 0.0 ? 0.0 : faces->divergence(flux).norm() / n;
  }
};

/// Volume-integral eddy-current solver for one voxelized body. Currents live on interior
/// faces; the divergence constraint is imposed by an exact projection.
class CptSolver {
 public:
  explicit CptSolver(VoxelGrid grid, SolverOptions opt = {})
      : grid_(std::make_shared<const VoxelGrid>(std::move(grid))),
        faces_(std::make_shared<const FaceLayout>(*grid_)),
        opt_(opt) {
    build_projector();
  }

  const VoxelGrid& grid() const { return *grid_; }
  const FaceLayout& faces() const { return *faces_; }
  const SolverOptions& options() const { return opt_; }

  /// Removes the gradient part of a face field.
  Eigen::VectorXcd project(const Eigen::VectorXcd& j) const {
    const Eigen::VectorXcd div = faces_->divergence(j);
    Eigen::MatrixXd rhs(static_cast<Eigen::Index>(reduced_.size()), 2);
    for (std::size_t r = 0; r < reduced_.size(); ++r) {
      rhs(static_cast<Eigen::Index>(r), 0) = -div(reduced_[r]).real();
      rhs(static_cast<Eigen::Index>(r), 1) = -div(reduced_[r]).imag();
    }
    Eigen::MatrixXd sol = rhs.rows() > 0 ? Eigen::MatrixXd(ldlt_.solve(rhs)) : rhs;
    Eigen::VectorXcd phi = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(faces_->cells()));
    for (std::size_t r = 0; r < reduced_.size(); ++r)
      phi(reduced_[r]) = cplx(sol(static_cast<Eigen::Index>(r), 0), sol(static_cast<Eigen::Index>(r), 1));
    Eigen::VectorXcd out = j;
    for (std::size_t f = 0; f < faces_->size(); ++f)
      out(static_cast<Eigen::Index>(f)) -= phi(faces_->upper(f)) - phi(faces_->lower(f));
    return out;
  }

  /// Right-hand side e_i x x sampled at face centers, face-normal component.
  Eigen::VectorXcd excitation(int axis) const {
    require(axis >= 0 && axis < 3, ErrorKind::DomainError, "axis index must be 0, 1 or 2");
    Eigen::VectorXcd b(static_cast<Eigen::Index>(faces_->size()));
    const Vec3 e = Vec3::Unit(axis);
    for (std::size_t f = 0; f < faces_->size(); ++f)
      b(static_cast<Eigen::Index>(f)) = e.cross(faces_->center(f))(faces_->direction(f));
    return b;
  }

  CurrentField solve_current(double nu, int axis) const {
    require(nu > 0 && std::isfinite(nu), ErrorKind::DomainError, "nu must be positive");
    const cplx inu(0.0, nu);
    const Eigen::VectorXcd rhs = inu * project(excitation(axis));
    auto lease = acquire_potential();
    NewtonPotential& pot = *lease.pot;
    auto apply = [&](const Eigen::VectorXcd& j) -> Eigen::VectorXcd {
      Eigen::VectorXcd nj(j.size());
      for (int d = 0; d < 3; ++d) {
        const auto off = static_cast<Eigen::Index>(faces_->begin(d));
        pot.apply(faces_->lattice_positions(d), j.data() + off, nj.data() + off);
      }
      return j - inu * project(nj);
    };
    GmresResult r = gmres(apply, rhs, rhs, opt_.gmres);
    if (!r.converged)
      fail(ErrorKind::NoConvergence, "GMRES stopped after " + std::to_string(r.iterations) +
                                         " iterations with relative residual " + std::to_string(r.relative_residual));
    CurrentField out;
    out.grid = grid_;
    out.faces = faces_;
    out.nu = nu;
    out.axis = axis;
    out.flux = project(r.x);
    out.iterations = r.iterations;
    out.residual = r.relative_residual;
    return out;
  }

  /// Full tensor at one nu; nu == 0 yields the zero tensor.
  CptTensor cpt(double nu) const {
    require(nu >= 0 && std::isfinite(nu), ErrorKind::DomainError, "nu must be non-negative");
    if (nu == 0.0) return CptTensor();
    std::array<CurrentField, 3> fields;
    parallel_for(3, opt_.jobs, [&](std::size_t i) { fields[i] = solve_current(nu, static_cast<int>(i)); });
    return compute_cpt(*grid_, nu, fields);
  }

  static CptTensor compute_cpt(const VoxelGrid& grid, double nu, std::span<const CurrentField> fields) {
    require(fields.size() == 3, ErrorKind::GridMismatch, "need one current field per axis");
    require(nu > 0, ErrorKind::DomainError, "nu must be positive");
    std::array<bool, 3> seen{false, false, false};
    std::array<const CurrentField*, 3> by_axis{};
    for (const auto& f : fields) {
      require(f.grid && *f.grid == grid, ErrorKind::GridMismatch, "current field computed on a different grid");
      require(f.nu == nu, ErrorKind::GridMismatch, "current field computed at a different nu");
      require(f.axis >= 0 && f.axis < 3 && !seen[f.axis], ErrorKind::GridMismatch, "need axes 0, 1, 2 once each");
      seen[f.axis] = true;
      by_axis[f.axis] = &f;
    }
    const double h3 = grid.h() * grid.h() * grid.h();
    const cplx scale = h3 / (2.0 * cplx(0.0, nu));
    std::array<std::array<CVec3, 3>, 3> w{};
    for (int i = 0; i < 3; ++i) {
      const CurrentField& fi = *by_axis[i];
      const FaceLayout& faces = *fi.faces;
      std::array<CVec3, 3> acc{CVec3::Zero(), CVec3::Zero(), CVec3::Zero()};
      for (std::size_t f = 0; f < faces.size(); ++f) {
        const cplx j = fi.flux(static_cast<Eigen::Index>(f));
        const int d = faces.direction(f);
        const Vec3& x = faces.center(f);
        for (int lp = 0; lp < 3; ++lp) acc[lp](d) += x(lp) * j;
      }
      for (int lp = 0; lp < 3; ++lp) w[lp][i] = scale * acc[lp];
    }
    return CptTensor::from_moments(w);
  }

 private:
  struct Lease {
    NewtonPotential* pot;
    const CptSolver* owner;
    std::size_t slot;
    ~Lease() {
      std::lock_guard<std::mutex> lock(owner->pool_mutex_);
      owner->pool_busy_[slot] = false;
    }
  };

  Lease acquire_potential() const {
    std::lock_guard<std::mutex> lock(pool_mutex_);
    for (std::size_t s = 0; s < pool_.size(); ++s)
      if (!pool_busy_[s]) {
        pool_busy_[s] = true;
        return Lease{pool_[s].get(), this, s};
      }
    pool_.push_back(std::make_unique<NewtonPotential>(grid_->dims(), grid_->h()));
    pool_busy_.push_back(true);
    return Lease{pool_.back().get(), this, pool_.size() - 1};
  }

  void build_projector() {
    const std::size_t n = grid_->size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto root = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (std::size_t f = 0; f < faces_->size(); ++f) {
      const std::size_t a = root(faces_->lower(f)), b = root(faces_->upper(f));
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
    std::vector<int> index(n, -1);
    for (std::size_t c = 0; c < n; ++c) {
      if (root(c) == c) continue;  // one pinned cell per connected component
      index[c] = static_cast<int>(reduced_.size());
      reduced_.push_back(static_cast<Eigen::Index>(c));
    }
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(4 * faces_->size());
    for (std::size_t f = 0; f < faces_->size(); ++f) {
      const int a = index[faces_->lower(f)], b = index[faces_->upper(f)];
      if (a >= 0) trip.emplace_back(a, a, 1.0);
      if (b >= 0) trip.emplace_back(b, b, 1.0);
      if (a >= 0 && b >= 0) {
        trip.emplace_back(a, b, -1.0);
        trip.emplace_back(b, a, -1.0);
      }
    }
    const auto m = static_cast<Eigen::Index>(reduced_.size());
    Eigen::SparseMatrix<double> lap(m, m);
    lap.setFromTriplets(trip.begin(), trip.end());
    if (m > 0) {
      ldlt_.compute(lap);
      require(ldlt_.info() == Eigen::Success, ErrorKind::NoConvergence, "graph Laplacian factorization failed");
    }
  }

  std::shared_ptr<const VoxelGrid> grid_;
  std::shared_ptr<const FaceLayout> faces_;
  SolverOptions opt_;
  std::vector<Eigen::Index> reduced_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  mutable std::mutex pool_mutex_;
  mutable std::vector<std::unique_ptr<NewtonPotential>> pool_;
  mutable std::vector<bool> pool_busy_;
};

inline CurrentField solve_current(const VoxelGrid& grid, double nu, int axis, const SolverOptions& opt = {}) {
  return CptSolver(grid, opt).solve_current(nu, axis);
}

inline CptTensor compute_cpt(const VoxelGrid& grid, double nu, std::span<const CurrentField> fields) {
  return CptSolver::compute_cpt(grid, nu, fields);
}

struct SweepPoint {
  double omega = 0.0;
  double nu = 0.0;
  CptTensor cpt;
};

/// One tensor per angular frequency for a unit-scale shape under the given physical constants.
inline std::vector<SweepPoint> cpt_sweep(const ShapeSpec& shape, double h, const PhysicalConfig& config,
                                         std::span<const double> omegas, const SolverOptions& opt = {}) {
  require(!omegas.empty(), ErrorKind::DomainError, "frequency list is empty");
  for (double w : omegas) {
    require(w >= 0 && std::isfinite(w), ErrorKind::DomainError, "frequencies must be non-negative");
    require(w == 0.0 || !config.with_omega(w).beyond_asymptotic_regime(), ErrorKind::DomainError,
            "nu exceeds the admissible maximum");
  }
  CptSolver solver(voxelize(shape, h), opt);
  std::vector<SweepPoint> out;
  out.reserve(omegas.size());
  for (double w : omegas) {
    const double nu = w == 0.0 ? 0.0 : config.with_omega(w).nu();
    out.push_back({w, nu, solver.cpt(nu)});
  }
  return out;
}

}  // namespace eddyscope::solver
