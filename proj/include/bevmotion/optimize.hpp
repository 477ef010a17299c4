#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "bevmotion/bev.hpp"
#include "bevmotion/errors.hpp"
#include "bevmotion/geometry.hpp"
#include "bevmotion/ground.hpp"
#include "bevmotion/losses.hpp"
#include "bevmotion/rng.hpp"

namespace bevmotion {

struct FitConfig {
  SupervisionMode mode = SupervisionMode::SELF;
  int steps = 300;
  double step_size = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;  // recorded in manifests; the fit itself is deterministic
  LossConfig loss;

  void validate() const {
    if (steps < 1) throw ValidationError("FitConfig: steps must be >= 1");
    if (!(step_size > 0.0)) throw ValidationError("FitConfig: step_size must be > 0");
    if (!(adam_beta1 > 0.0) || !(adam_beta1 < 1.0) || !(adam_beta2 > 0.0) || !(adam_beta2 < 1.0))
      throw ValidationError("FitConfig: adaptive-moment decays must be in (0, 1)");
    loss.validate();
  }
};

struct FitTrace {
  std::vector<double> loss_values;  // objective at the start of each step
  MotionField final_field;
  double wall_seconds = 0.0;
};

// Index partition of the triple's clouds into the dynamic subset (RCCD +
// smoothness) and the current frame's static subset (pulled to zero motion).
struct SupervisionPartition {
  std::vector<std::uint32_t> dynamic_past;
  std::vector<std::uint32_t> dynamic_current;
  std::vector<std::uint32_t> dynamic_future;
  std::vector<std::uint32_t> static_current;
};

// FB-style partition from per-point FG/BG labels carried by the clouds:
// foreground points are dynamic, current-frame background points are static,
// unlabeled points are not supervised.
inline SupervisionPartition partition_from_labels(const SyncedTriple& triple) {
  if (!triple.past.has_labels() || !triple.current.has_labels() || !triple.future.has_labels())
    throw ValidationError("partition_from_labels: all three clouds need labels");
  SupervisionPartition out;
  auto collect = [](const PointCloud& cloud, std::vector<std::uint32_t>& fg,
                    std::vector<std::uint32_t>* bg) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (cloud.labels[i] == PointLabel::Foreground)
        fg.push_back(static_cast<std::uint32_t>(i));
      else if (bg && cloud.labels[i] == PointLabel::Background)
        bg->push_back(static_cast<std::uint32_t>(i));
    }
  };
  collect(triple.past, out.dynamic_past, nullptr);
  collect(triple.current, out.dynamic_current, &out.static_current);
  collect(triple.future, out.dynamic_future, nullptr);
  return out;
}

// NG/SELF-style partition: a ground plane is fitted per frame and non-ground
// points become the dynamic subset; current-frame ground points are static.
inline SupervisionPartition partition_by_ground(const SyncedTriple& triple,
                                                const RansacConfig& ransac) {
  SupervisionPartition out;
  auto split = [&](const PointCloud& cloud, std::vector<std::uint32_t>& dynamic,
                   std::vector<std::uint32_t>* ground_out) {
    const Plane plane = fit_ground_plane(cloud, ransac);
    auto [ground, nonground] = segment_by_plane(cloud, plane, ransac.d_thresh);
    dynamic = std::move(nonground);
    if (ground_out) *ground_out = std::move(ground);
  };
  split(triple.past, out.dynamic_past, nullptr);
  split(triple.current, out.dynamic_current, &out.static_current);
  split(triple.future, out.dynamic_future, nullptr);
  return out;
}

// Fits a per-sample BEV motion field against the composite loss with
// adaptive-moment updates. Only cells containing supervised in-range points
// are free; every other cell stays exactly zero. Points outside the grid are
// dropped from supervision. Deterministic given (inputs, config).
inline std::pair<MotionField, FitTrace> fit_motion_field(const SyncedTriple& triple,
                                                         const GridConfig& grid,
                                                         const SupervisionPartition& partition,
                                                         const FitConfig& cfg) {
  cfg.validate();
  grid.validate();
  if (triple.current.empty())
    throw EmptyInputError("fit_motion_field: current cloud must be nonempty");
  const auto t_start = std::chrono::steady_clock::now();

  const VoxelizeResult vox = voxelize(triple.current, grid);
  const CellAssignment& assign = vox.assignment;

  auto keep_in_range = [&](const PointCloud& cloud, const std::vector<std::uint32_t>& idx) {
    std::vector<std::uint32_t> out;
    out.reserve(idx.size());
    for (std::uint32_t i : idx)
      if (grid.contains(cloud.points[i])) out.push_back(i);
    return out;
  };
  const std::vector<std::uint32_t> dyn_current =
      keep_in_range(triple.current, partition.dynamic_current);
  const std::vector<std::uint32_t> stat_current =
      keep_in_range(triple.current, partition.static_current);
  if (dyn_current.empty())
    throw DegenerateError("fit_motion_field: nothing to supervise in the dynamic subset");

  SyncedTriple sub;
  sub.past = triple.past.subset(keep_in_range(triple.past, partition.dynamic_past));
  sub.current = triple.current.subset(dyn_current);
  sub.future = triple.future.subset(keep_in_range(triple.future, partition.dynamic_future));
  sub.dt = triple.dt;
  if (sub.past.empty() || sub.future.empty())
    throw DegenerateError("fit_motion_field: dynamic past/future subset is empty");

  const Neighborhoods neighborhoods =
      smoothness_neighborhoods(sub.current, cfg.loss.smooth_radius, cfg.loss.smooth_k);

  // free-cell layout: every cell holding a supervised point, in ascending order
  std::vector<std::int64_t> cell_of_dyn(dyn_current.size());
  for (std::size_t i = 0; i < dyn_current.size(); ++i)
    cell_of_dyn[i] = assign.point_to_cell[dyn_current[i]];
  std::vector<std::int64_t> cell_of_stat(stat_current.size());
  for (std::size_t i = 0; i < stat_current.size(); ++i)
    cell_of_stat[i] = assign.point_to_cell[stat_current[i]];

  std::vector<std::int64_t> free_cells = cell_of_dyn;
  free_cells.insert(free_cells.end(), cell_of_stat.begin(), cell_of_stat.end());
  std::sort(free_cells.begin(), free_cells.end());
  free_cells.erase(std::unique(free_cells.begin(), free_cells.end()), free_cells.end());
  auto slot_of = [&](std::int64_t cell) {
    return static_cast<std::size_t>(
        std::lower_bound(free_cells.begin(), free_cells.end(), cell) - free_cells.begin());
  };
  std::vector<std::size_t> slot_of_dyn(dyn_current.size()), slot_of_stat(stat_current.size());
  for (std::size_t i = 0; i < cell_of_dyn.size(); ++i) slot_of_dyn[i] = slot_of(cell_of_dyn[i]);
  for (std::size_t i = 0; i < cell_of_stat.size(); ++i) slot_of_stat[i] = slot_of(cell_of_stat[i]);

  const std::size_t n_free = free_cells.size();
  std::vector<Eigen::Vector2d> params(n_free, Eigen::Vector2d::Zero());
  std::vector<Eigen::Vector2d> m1(n_free, Eigen::Vector2d::Zero());
  std::vector<Eigen::Vector2d> m2(n_free, Eigen::Vector2d::Zero());

  FitTrace trace;
  trace.loss_values.reserve(cfg.steps);
  std::vector<Point3> motion_dyn(dyn_current.size());
  std::vector<Point3> motion_stat(stat_current.size());
  std::vector<Eigen::Vector2d> cell_grad(n_free);

  for (int step = 1; step <= cfg.steps; ++step) {
    for (std::size_t i = 0; i < motion_dyn.size(); ++i) {
      const Eigen::Vector2d& v = params[slot_of_dyn[i]];
      motion_dyn[i] = Point3(v.x(), v.y(), 0.0);
    }
    for (std::size_t i = 0; i < motion_stat.size(); ++i) {
      const Eigen::Vector2d& v = params[slot_of_stat[i]];
      motion_stat[i] = Point3(v.x(), v.y(), 0.0);
    }
    const LossReport report =
        composite_motion_loss(cfg.mode, sub, motion_dyn, motion_stat, cfg.loss, neighborhoods);
    trace.loss_values.push_back(report.value);

    std::fill(cell_grad.begin(), cell_grad.end(), Eigen::Vector2d::Zero());
    for (std::size_t i = 0; i < motion_dyn.size(); ++i)
      cell_grad[slot_of_dyn[i]] += report.grad[i];
    for (std::size_t i = 0; i < motion_stat.size(); ++i)
      cell_grad[slot_of_stat[i]] += report.grad[motion_dyn.size() + i];

    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, step);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, step);
    for (std::size_t s = 0; s < n_free; ++s) {
      m1[s] = cfg.adam_beta1 * m1[s] + (1.0 - cfg.adam_beta1) * cell_grad[s];
      m2[s] = cfg.adam_beta2 * m2[s] + (1.0 - cfg.adam_beta2) * cell_grad[s].cwiseAbs2();
      const Eigen::Vector2d mhat = m1[s] / bc1;
      const Eigen::Vector2d vhat = m2[s] / bc2;
      params[s] -= cfg.step_size *
                   (mhat.array() / (vhat.array().sqrt() + cfg.adam_eps)).matrix();
    }
  }

  MotionField field = MotionField::zeros(grid.nx(), grid.ny(), triple.dt);
  for (std::size_t s = 0; s < n_free; ++s)
    field.cells[static_cast<std::size_t>(free_cells[s])] = params[s];
  trace.final_field = field;
  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return {std::move(field), std::move(trace)};
}

// Sets the motion of background-argmax cells to zero; score ties count as
// background. Foreground cells pass through. Idempotent.
inline MotionField zero_background(const MotionField& field, const CategoryMap& categories) {
  if (field.height != categories.height || field.width != categories.width)
    throw ValidationError("zero_background: field and category map dimensions differ");
  MotionField out = field;
  for (std::size_t c = 0; c < out.cells.size(); ++c)
    if (categories.cells[c].y() >= categories.cells[c].x()) out.cells[c].setZero();
  return out;
}

struct FieldLossReport {
  double value = 0.0;
  std::vector<Eigen::Vector2d> cell_grad;  // one entry per field cell
};

using FieldLossFn = std::function<FieldLossReport(const MotionField&)>;

// Central finite-difference check of an analytic field gradient on a random
// subset of at least min_components components. Relative error uses the
// denominator max(|analytic|, |numeric|, 1e-8).
inline double gradient_check(const FieldLossFn& loss_thunk, const MotionField& point,
                             double step, std::size_t min_components = 100,
                             std::uint64_t seed = 0) {
  if (!(step > 0.0)) throw ValidationError("gradient_check: step must be > 0");
  const FieldLossReport base = loss_thunk(point);
  if (base.cell_grad.size() != point.cells.size())
    throw ValidationError("gradient_check: gradient size does not match field");
  const std::size_t total = point.cells.size() * 2;
  Rng rng(seed);
  const std::vector<std::uint32_t> chosen =
      rng.sample_indices(total, std::max<std::size_t>(min_components, 100));
  double max_rel = 0.0;
  MotionField probe = point;
  for (std::uint32_t comp : chosen) {
    const std::size_t cell = comp / 2;
    const int axis = static_cast<int>(comp % 2);
    const double saved = probe.cells[cell][axis];
    probe.cells[cell][axis] = saved + step;
    const double up = loss_thunk(probe).value;
    probe.cells[cell][axis] = saved - step;
    const double down = loss_thunk(probe).value;
    probe.cells[cell][axis] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = base.cell_grad[cell][axis];
    const double rel = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace bevmotion
