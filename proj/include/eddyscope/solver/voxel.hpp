#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "eddyscope/errors.hpp"
#include "eddyscope/tensor_core.hpp"

namespace eddyscope::solver {

enum class ShapeKind { Cube, Cylinder, Ellipsoid, LShape, Prism, Sphere, CustomImplicit };

inline const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::Cube: return "cube";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Ellipsoid: return "ellipsoid";
    case ShapeKind::LShape: return "l_shape";
    case ShapeKind::Prism: return "prism";
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::CustomImplicit: return "custom_implicit";
  }
  return "unknown";
}

inline ShapeKind shape_kind_from_string(const std::string& s) {
  for (ShapeKind k : {ShapeKind::Cube, ShapeKind::Cylinder, ShapeKind::Ellipsoid, ShapeKind::LShape,
                      ShapeKind::Prism, ShapeKind::Sphere, ShapeKind::CustomImplicit})
    if (s == to_string(k)) return k;
  fail(ErrorKind::ConfigError, "unknown shape kind '" + s + "'");
}

/// Unit-scale reference shape. Defaults reproduce the dictionary shapes:
/// cube [-1,1]^3, cylinder {x^2+y^2 <= 1, |z| <= 0.5}, ellipsoid x^2+y^2+z^2/4 <= 1,
/// L-shape [-1,1]x[-0.5,0.5]^2, prism {x >= -1, y >= -1, x+y <= 1} x [-1,1], unit sphere.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::Sphere;
  Vec3 half_extents = Vec3::Ones();  ///< cube / l_shape half widths, ellipsoid semi-axes
  double radius = 1.0;               ///< sphere, cylinder
  double half_height = 0.5;          ///< cylinder
  double scale = 1.0;                ///< uniform dilation applied to all of the above
  std::function<double(const Vec3&)> implicit;  ///< custom: inside where value <= 0
  Vec3 bbox_lo = -Vec3::Ones();                 ///< custom bounding box (before scaling)
  Vec3 bbox_hi = Vec3::Ones();

  static ShapeSpec make(ShapeKind kind) {
    ShapeSpec s;
    s.kind = kind;
    switch (kind) {
      case ShapeKind::Ellipsoid: s.half_extents = Vec3(1.0, 1.0, 2.0); break;
      case ShapeKind::LShape: s.half_extents = Vec3(1.0, 0.5, 0.5); break;
      default: break;
    }
    return s;
  }

  bool contains(const Vec3& x_scaled) const {
    const Vec3 x = x_scaled / scale;
    switch (kind) {
      case ShapeKind::Cube:
      case ShapeKind::LShape:
        return (x.cwiseAbs() - half_extents).maxCoeff() <= 0.0;
      case ShapeKind::Cylinder:
        return x.x() * x.x() + x.y() * x.y() <= radius * radius && std::abs(x.z()) <= half_height;
      case ShapeKind::Ellipsoid:
        return x.cwiseQuotient(half_extents).squaredNorm() <= 1.0;
      case ShapeKind::Prism:
        return x.x() >= -1.0 && x.y() >= -1.0 && x.x() + x.y() <= 1.0 && std::abs(x.z()) <= 1.0;
      case ShapeKind::Sphere:
        return x.squaredNorm() <= radius * radius;
      case ShapeKind::CustomImplicit:
        require(static_cast<bool>(implicit), ErrorKind::ConfigError, "custom shape needs an implicit function");
        return implicit(x) <= 0.0;
    }
    return false;
  }

  std::pair<Vec3, Vec3> bounding_box() const {
    Vec3 lo, hi;
    switch (kind) {
      case ShapeKind::Cube:
      case ShapeKind::LShape:
      case ShapeKind::Ellipsoid: lo = -half_extents; hi = half_extents; break;
      case ShapeKind::Cylinder: lo = Vec3(-radius, -radius, -half_height); hi = -lo; break;
      case ShapeKind::Prism: lo = Vec3(-1, -1, -1); hi = Vec3(2, 2, 1); break;
      case ShapeKind::Sphere: lo = -radius * Vec3::Ones(); hi = -lo; break;
      case ShapeKind::CustomImplicit: lo = bbox_lo; hi = bbox_hi; break;
    }
    return {scale * lo, scale * hi};
  }

  double diameter() const {
    const auto [lo, hi] = bounding_box();
    return (hi - lo).norm();
  }
};

using Index3 = std::array<int, 3>;

/// Cubic voxels of edge h. Cell (i, j, k) is centered at origin + h (i + 1/2, j + 1/2, k + 1/2);
/// indices are non-negative and fit in dims().
class VoxelGrid {
 public:
  VoxelGrid(double h, Vec3 origin, std::vector<Index3> cells) : h_(h), origin_(origin), cells_(std::move(cells)) {
    require(h > 0 && std::isfinite(h), ErrorKind::DomainError, "voxel size must be positive");
    if (cells_.empty()) fail(ErrorKind::EmptyGrid, "no voxels inside the shape");
    Index3 lo{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), std::numeric_limits<int>::max()};
    for (const auto& c : cells_)
      for (int a = 0; a < 3; ++a) lo[a] = std::min(lo[a], c[a]);
    for (auto& c : cells_)
      for (int a = 0; a < 3; ++a) c[a] -= lo[a];
    for (int a = 0; a < 3; ++a) origin_(a) += h_ * lo[a];
    std::sort(cells_.begin(), cells_.end());
    cells_.erase(std::unique(cells_.begin(), cells_.end()), cells_.end());
    dims_ = {0, 0, 0};
    for (const auto& c : cells_)
      for (int a = 0; a < 3; ++a) dims_[a] = std::max(dims_[a], c[a] + 1);
    lookup_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], -1);
    for (std::size_t n = 0; n < cells_.size(); ++n) lookup_[linear(cells_[n])] = static_cast<int>(n);
  }

  double h() const { return h_; }
  const Vec3& origin() const { return origin_; }
  const Index3& dims() const { return dims_; }
  const std::vector<Index3>& cells() const { return cells_; }
  std::size_t size() const { return cells_.size(); }
  double volume() const { return static_cast<double>(cells_.size()) * h_ * h_ * h_; }

  Vec3 center(const Index3& c) const { return origin_ + h_ * Vec3(c[0] + 0.5, c[1] + 0.5, c[2] + 0.5); }
  Vec3 center(std::size_t n) const { return center(cells_[n]); }

  /// Cell number of index c, or -1 when outside the body.
  int find(const Index3& c) const {
    for (int a = 0; a < 3; ++a)
      if (c[a] < 0 || c[a] >= dims_[a]) return -1;
    return lookup_[linear(c)];
  }

  std::size_t linear(const Index3& c) const {
    return (static_cast<std::size_t>(c[0]) * dims_[1] + c[1]) * dims_[2] + c[2];
  }

  VoxelGrid translated(const Vec3& z) const { return VoxelGrid(h_, origin_ + z, cells_); }

  /// Image of the voxel set under a rotation that maps the lattice to itself
  /// (a signed permutation about a point where cell corners meet).
  VoxelGrid rotated(const Rotation& rot) const {
    const Mat3& o = rot.matrix();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        const double v = std::abs(o(r, c));
        require(v < 1e-12 || std::abs(v - 1.0) < 1e-12, ErrorKind::DomainError,
                "lattice rotation must be a signed permutation");
      }
    std::vector<Vec3> centers;
    centers.reserve(cells_.size());
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
    for (std::size_t n = 0; n < cells_.size(); ++n) {
      centers.push_back(o * center(n));
      lo = lo.cwiseMin(centers.back());
    }
    const Vec3 origin = lo - 0.5 * h_ * Vec3::Ones();
    std::vector<Index3> cells;
    cells.reserve(centers.size());
    for (const auto& c : centers) {
      const Vec3 f = (c - origin) / h_ - 0.5 * Vec3::Ones();
      cells.push_back({static_cast<int>(std::lround(f(0))), static_cast<int>(std::lround(f(1))),
                       static_cast<int>(std::lround(f(2)))});
    }
    return VoxelGrid(h_, origin, std::move(cells));
  }

  friend bool operator==(const VoxelGrid& a, const VoxelGrid& b) {
    return a.h_ == b.h_ && a.origin_ == b.origin_ && a.cells_ == b.cells_;
  }

 private:
  double h_;
  Vec3 origin_;
  std::vector<Index3> cells_;
  Index3 dims_{};
  std::vector<int> lookup_;
};

/// Voxels whose centers lie inside the shape; lattice centers at h (n + 1/2).
inline VoxelGrid voxelize(const ShapeSpec& shape, double h) {
  require(h > 0 && std::isfinite(h), ErrorKind::DomainError, "voxel size must be positive");
  require(h <= shape.diameter() / 4.0 + 1e-15, ErrorKind::DomainError,
          "voxel size must not exceed a quarter of the shape diameter");
  const auto [lo, hi] = shape.bounding_box();
  Index3 first{}, last{};
  for (int a = 0; a < 3; ++a) {
    first[a] = static_cast<int>(std::floor(lo(a) / h - 0.5)) - 1;
    last[a] = static_cast<int>(std::ceil(hi(a) / h - 0.5)) + 1;
  }
  std::vector<Index3> cells;
  for (int i = first[0]; i <= last[0]; ++i)
    for (int j = first[1]; j <= last[1]; ++j)
      for (int k = first[2]; k <= last[2]; ++k) {
        const Vec3 c = h * Vec3(i + 0.5, j + 0.5, k + 0.5);
        if (shape.contains(c)) cells.push_back({i, j, k});
      }
  if (cells.empty()) fail(ErrorKind::EmptyGrid, "no voxel center falls inside the shape");
  return VoxelGrid(h, Vec3::Zero(), std::move(cells));
}

}  // namespace eddyscope::solver
