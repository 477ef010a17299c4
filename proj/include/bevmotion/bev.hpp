#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bevmotion/errors.hpp"
#include "bevmotion/geometry.hpp"

namespace bevmotion {

// BEV grid geometry. Cells are half-open [lo, lo + size) along every axis;
// a point exactly at the global max boundary is out of range. Counts use
// ceil with a small slack so ranges that divide evenly in exact arithmetic
// are not rounded up by floating-point noise.
struct GridConfig {
  double x_min = -32.0, x_max = 32.0;
  double y_min = -32.0, y_max = 32.0;
  double z_min = -3.0, z_max = 2.0;
  double dx = 0.25, dy = 0.25, dz = 0.4;

  static int cell_count(double lo, double hi, double size) {
    return static_cast<int>(std::ceil((hi - lo) / size - 1e-9));
  }

  int nx() const { return cell_count(x_min, x_max, dx); }  // H
  int ny() const { return cell_count(y_min, y_max, dy); }  // W
  int nz() const { return cell_count(z_min, z_max, dz); }  // C

  bool contains(const Point3& p) const {
    return p.x() >= x_min && p.x() < x_max && p.y() >= y_min && p.y() < y_max &&
           p.z() >= z_min && p.z() < z_max;
  }

  void validate() const {
    if (!(x_max > x_min) || !(y_max > y_min) || !(z_max > z_min))
      throw ValidationError("GridConfig: ranges must be nonempty");
    if (!(dx > 0.0) || !(dy > 0.0) || !(dz > 0.0))
      throw ValidationError("GridConfig: voxel sizes must be > 0");
    if (nx() < 1 || ny() < 1 || nz() < 1)
      throw ValidationError("GridConfig: grid must have at least one cell per axis");
  }
};

// H x W x C binary voxel grid; voxel (i,j,k) lives at ((i*W)+j)*C + k.
struct BevOccupancy {
  GridConfig config;
  std::vector<std::uint8_t> voxels;

  bool occupied(int i, int j, int k) const {
    return voxels[(static_cast<std::size_t>(i) * config.ny() + j) * config.nz() + k] != 0;
  }
  bool column_occupied(int i, int j) const {
    const int c = config.nz();
    const std::size_t base = (static_cast<std::size_t>(i) * config.ny() + j) * c;
    for (int k = 0; k < c; ++k)
      if (voxels[base + k] != 0) return true;
    return false;
  }
};

// Point <-> BEV-cell scatter map. point_to_cell holds the linear cell id
// i * W + j, or kOutOfRange; cell_to_points inverts it over in-range points.
struct CellAssignment {
  static constexpr std::int64_t kOutOfRange = -1;

  int height = 0, width = 0;
  std::vector<std::int64_t> point_to_cell;
  std::vector<std::vector<std::uint32_t>> cell_to_points;

  std::size_t n_points() const { return point_to_cell.size(); }
  bool in_range(std::size_t point) const { return point_to_cell[point] >= 0; }
};

// Per-cell horizontal displacement over the prediction horizon.
struct MotionField {
  int height = 0, width = 0;
  double horizon = 0.5;  // seconds
  std::vector<Eigen::Vector2d> cells;

  static MotionField zeros(int h, int w, double horizon_s = 0.5) {
    MotionField f;
    f.height = h;
    f.width = w;
    f.horizon = horizon_s;
    f.cells.assign(static_cast<std::size_t>(h) * w, Eigen::Vector2d::Zero());
    return f;
  }

  Eigen::Vector2d& at(int i, int j) { return cells[static_cast<std::size_t>(i) * width + j]; }
  const Eigen::Vector2d& at(int i, int j) const {
    return cells[static_cast<std::size_t>(i) * width + j];
  }

  void validate() const {
    if (cells.size() != static_cast<std::size_t>(height) * width)
      throw ValidationError("MotionField: cell count does not match dimensions");
    for (const auto& v : cells)
      if (!v.allFinite()) throw ValidationError("MotionField: non-finite entry");
  }
};

// Per-cell (FG score, BG score).
struct CategoryMap {
  int height = 0, width = 0;
  std::vector<Eigen::Vector2d> cells;

  static CategoryMap zeros(int h, int w) {
    CategoryMap m;
    m.height = h;
    m.width = w;
    m.cells.assign(static_cast<std::size_t>(h) * w, Eigen::Vector2d::Zero());
    return m;
  }

  Eigen::Vector2d& at(int i, int j) { return cells[static_cast<std::size_t>(i) * width + j]; }
  const Eigen::Vector2d& at(int i, int j) const {
    return cells[static_cast<std::size_t>(i) * width + j];
  }
};

struct VoxelizeResult {
  BevOccupancy occupancy;
  CellAssignment assignment;
};

// Quantizes a cloud onto the grid. Out-of-range points are flagged, not an
// error; they are excluded from cell_to_points and from occupancy.
inline VoxelizeResult voxelize(const PointCloud& cloud, const GridConfig& config) {
  config.validate();
  cloud.validate();
  const int h = config.nx(), w = config.ny(), c = config.nz();
  VoxelizeResult out;
  out.occupancy.config = config;
  out.occupancy.voxels.assign(static_cast<std::size_t>(h) * w * c, 0);
  out.assignment.height = h;
  out.assignment.width = w;
  out.assignment.point_to_cell.assign(cloud.size(), CellAssignment::kOutOfRange);
  out.assignment.cell_to_points.assign(static_cast<std::size_t>(h) * w, {});
  for (std::size_t n = 0; n < cloud.size(); ++n) {
    const Point3& p = cloud.points[n];
    if (!config.contains(p)) continue;
    const int i = std::min(static_cast<int>((p.x() - config.x_min) / config.dx), h - 1);
    const int j = std::min(static_cast<int>((p.y() - config.y_min) / config.dy), w - 1);
    const int k = std::min(static_cast<int>((p.z() - config.z_min) / config.dz), c - 1);
    const std::size_t cell = static_cast<std::size_t>(i) * w + j;
    out.assignment.point_to_cell[n] = static_cast<std::int64_t>(cell);
    out.assignment.cell_to_points[cell].push_back(static_cast<std::uint32_t>(n));
    out.occupancy.voxels[cell * c + k] = 1;
  }
  return out;
}

// Per-point motion from a BEV field: each in-range point receives its cell's
// (dx, dy) with zero vertical component; out-of-range points receive zero.
// This is the dense product U * [X; 0] realized as a gather.
inline std::vector<Point3> lift_motion_to_points(const MotionField& field,
                                                 const CellAssignment& assign,
                                                 std::size_t n_points) {
  if (field.height != assign.height || field.width != assign.width)
    throw ValidationError("lift_motion_to_points: field and assignment dimensions differ");
  if (n_points != assign.n_points())
    throw ValidationError("lift_motion_to_points: point count does not match assignment");
  std::vector<Point3> out(n_points, Point3::Zero());
  for (std::size_t n = 0; n < n_points; ++n) {
    const std::int64_t cell = assign.point_to_cell[n];
    if (cell < 0) continue;
    const Eigen::Vector2d& v = field.cells[static_cast<std::size_t>(cell)];
    out[n] = Point3(v.x(), v.y(), 0.0);
  }
  return out;
}

inline std::vector<Eigen::Vector2d> lift_categories_to_points(const CategoryMap& map,
                                                              const CellAssignment& assign,
                                                              std::size_t n_points) {
  if (map.height != assign.height || map.width != assign.width)
    throw ValidationError("lift_categories_to_points: map and assignment dimensions differ");
  if (n_points != assign.n_points())
    throw ValidationError("lift_categories_to_points: point count does not match assignment");
  std::vector<Eigen::Vector2d> out(n_points, Eigen::Vector2d::Zero());
  for (std::size_t n = 0; n < n_points; ++n) {
    const std::int64_t cell = assign.point_to_cell[n];
    if (cell < 0) continue;
    out[n] = map.cells[static_cast<std::size_t>(cell)];
  }
  return out;
}

}  // namespace bevmotion
