#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "bevmotion/bev.hpp"
#include "bevmotion/errors.hpp"
#include "bevmotion/geometry.hpp"
#include "bevmotion/segmentation.hpp"

namespace bevmotion {

struct GroupStats {
  std::size_t count = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
};

// Speed-grouped displacement errors over evaluated nonempty cells. Groups:
// static (speed <= static_thresh), slow (below 5 m/s), fast (5 m/s and up).
struct MotionMetrics {
  GroupStats group_static;
  GroupStats group_slow;
  GroupStats group_fast;
  double static_thresh = 0.2;

  std::size_t evaluated_cells() const {
    return group_static.count + group_slow.count + group_fast.count;
  }
};

struct SegMetrics {
  std::size_t bg_total = 0, fg_total = 0;
  std::size_t bg_correct = 0, fg_correct = 0;
  double bg_accuracy = std::numeric_limits<double>::quiet_NaN();
  double fg_accuracy = std::numeric_limits<double>::quiet_NaN();
  double overall_accuracy = std::numeric_limits<double>::quiet_NaN();

  std::size_t total() const { return bg_total + fg_total; }
};

// Doubles every cell displacement under the constant-speed assumption.
inline MotionField extrapolate_to_1s(const MotionField& field) {
  if (std::abs(field.horizon - 0.5) > 1e-9)
    throw ValidationError("extrapolate_to_1s: input horizon must be 0.5s");
  MotionField out = field;
  out.horizon = 1.0;
  for (auto& v : out.cells) v *= 2.0;
  return out;
}

// Per-cell ground truth for the next 1s, averaged from the member points'
// 0.5s displacements and extrapolated linearly. Only nonempty cells are
// valid.
struct CellMotionGt {
  int height = 0, width = 0;
  std::vector<Eigen::Vector2d> disp_1s;
  std::vector<std::uint8_t> valid;
};

inline CellMotionGt cell_motion_gt(const PointCloud& current, const CellAssignment& assign) {
  if (!current.has_gt_motion())
    throw ValidationError("cell_motion_gt: cloud carries no ground-truth motion");
  if (current.size() != assign.n_points())
    throw ValidationError("cell_motion_gt: assignment does not match cloud");
  CellMotionGt out;
  out.height = assign.height;
  out.width = assign.width;
  out.disp_1s.assign(assign.cell_to_points.size(), Eigen::Vector2d::Zero());
  out.valid.assign(assign.cell_to_points.size(), 0);
  for (std::size_t cell = 0; cell < assign.cell_to_points.size(); ++cell) {
    const auto& members = assign.cell_to_points[cell];
    if (members.empty()) continue;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    for (std::uint32_t p : members) sum += current.gt_motion[p].head<2>();
    out.disp_1s[cell] = 2.0 * sum / static_cast<double>(members.size());
    out.valid[cell] = 1;
  }
  return out;
}

namespace detail {

inline GroupStats summarize(std::vector<double>& errors) {
  GroupStats s;
  s.count = errors.size();
  if (errors.empty()) return s;
  double sum = 0.0;
  for (double e : errors) sum += e;
  s.mean = sum / static_cast<double>(errors.size());
  std::sort(errors.begin(), errors.end());
  const std::size_t n = errors.size();
  s.median = n % 2 == 1 ? errors[n / 2] : 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
  return s;
}

}  // namespace detail

// L2 distance between predicted and ground-truth 1s displacements, grouped
// by ground-truth speed. Cell speed is |gt 1s displacement| / 1s.
inline MotionMetrics motion_errors(const MotionField& pred_1s, const CellMotionGt& gt,
                                   double static_thresh = 0.2) {
  if (pred_1s.height != gt.height || pred_1s.width != gt.width)
    throw ValidationError("motion_errors: prediction and ground-truth grids differ");
  if (std::abs(pred_1s.horizon - 1.0) > 1e-9)
    throw ValidationError("motion_errors: prediction horizon must be 1s");
  if (!(static_thresh >= 0.0) || !(static_thresh < 5.0))
    throw ValidationError("motion_errors: static_thresh must be in [0, 5)");
  std::vector<double> stat, slow, fast;
  for (std::size_t cell = 0; cell < gt.disp_1s.size(); ++cell) {
    if (!gt.valid[cell]) continue;
    const double err = (pred_1s.cells[cell] - gt.disp_1s[cell]).norm();
    const double speed = gt.disp_1s[cell].norm();
    if (speed <= static_thresh)
      stat.push_back(err);
    else if (speed < 5.0)
      slow.push_back(err);
    else
      fast.push_back(err);
  }
  MotionMetrics m;
  m.static_thresh = static_thresh;
  m.group_static = detail::summarize(stat);
  m.group_slow = detail::summarize(slow);
  m.group_fast = detail::summarize(fast);
  return m;
}

// Per-class and overall accuracy over cells with a ground-truth category.
// Predicted category is the score argmax with ties counting as background.
inline SegMetrics seg_accuracy(const CategoryMap& pred, const std::vector<PointLabel>& gt_cells) {
  if (gt_cells.size() != pred.cells.size())
    throw ValidationError("seg_accuracy: prediction and ground-truth grids differ");
  SegMetrics s;
  for (std::size_t cell = 0; cell < gt_cells.size(); ++cell) {
    if (gt_cells[cell] == PointLabel::Unlabeled) continue;
    const bool pred_fg = pred.cells[cell].x() > pred.cells[cell].y();
    if (gt_cells[cell] == PointLabel::Foreground) {
      ++s.fg_total;
      if (pred_fg) ++s.fg_correct;
    } else {
      ++s.bg_total;
      if (!pred_fg) ++s.bg_correct;
    }
  }
  if (s.bg_total > 0)
    s.bg_accuracy = static_cast<double>(s.bg_correct) / static_cast<double>(s.bg_total);
  if (s.fg_total > 0)
    s.fg_accuracy = static_cast<double>(s.fg_correct) / static_cast<double>(s.fg_total);
  if (s.total() > 0)
    s.overall_accuracy =
        static_cast<double>(s.bg_correct + s.fg_correct) / static_cast<double>(s.total());
  return s;
}

}  // namespace bevmotion
