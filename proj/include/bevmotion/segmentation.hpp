#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <vector>

#include "bevmotion/bev.hpp"
#include "bevmotion/errors.hpp"
#include "bevmotion/ground.hpp"
#include "bevmotion/losses.hpp"

namespace bevmotion {

// Handcrafted per-cell descriptors computed from the occupancy column and
// the fitted ground plane: [occupied-bin fraction, occupied height span,
// top height above ground, mean occupied height, C profile bits, bias].
struct CellFeatures {
  int height = 0, width = 0, feature_count = 0;
  std::vector<double> values;          // (H*W) x feature_count, row-major
  std::vector<std::uint8_t> nonempty;  // per cell

  std::size_t cells() const { return static_cast<std::size_t>(height) * width; }
  const double* at(std::size_t cell) const { return values.data() + cell * feature_count; }
  double* at(std::size_t cell) { return values.data() + cell * feature_count; }
};

inline CellFeatures featurize_cells(const BevOccupancy& occupancy, const Plane& plane) {
  plane.validate();
  const GridConfig& g = occupancy.config;
  const int h = g.nx(), w = g.ny(), c = g.nz();
  CellFeatures out;
  out.height = h;
  out.width = w;
  out.feature_count = c + 5;
  out.values.assign(static_cast<std::size_t>(h) * w * out.feature_count, 0.0);
  out.nonempty.assign(static_cast<std::size_t>(h) * w, 0);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const std::size_t cell = static_cast<std::size_t>(i) * w + j;
      int count = 0, bottom = -1, top = -1;
      double z_sum = 0.0;
      for (int k = 0; k < c; ++k) {
        if (!occupancy.occupied(i, j, k)) continue;
        ++count;
        if (bottom < 0) bottom = k;
        top = k;
        z_sum += g.z_min + (k + 0.5) * g.dz;
      }
      if (count == 0) continue;
      out.nonempty[cell] = 1;
      const double cx = g.x_min + (i + 0.5) * g.dx;
      const double cy = g.y_min + (j + 0.5) * g.dy;
      double* f = out.at(cell);
      f[0] = static_cast<double>(count) / c;
      f[1] = static_cast<double>(top - bottom + 1) * g.dz;
      f[2] = (g.z_min + (top + 0.5) * g.dz) - plane.height_at(cx, cy);
      f[3] = z_sum / count;
      for (int k = 0; k < c; ++k) f[4 + k] = occupancy.occupied(i, j, k) ? 1.0 : 0.0;
      f[4 + c] = 1.0;
    }
  }
  return out;
}

// Conservative lift of partial point labels to cells: FG if any labeled
// member point is foreground, BG if all labeled members are background,
// unlabeled otherwise (including cells with no points).
inline std::vector<PointLabel> lift_labels_to_cells(const PointCloud& cloud,
                                                    const CellAssignment& assign) {
  if (!cloud.has_labels()) throw ValidationError("lift_labels_to_cells: cloud has no labels");
  if (cloud.size() != assign.n_points())
    throw ValidationError("lift_labels_to_cells: assignment does not match cloud");
  std::vector<PointLabel> out(assign.cell_to_points.size(), PointLabel::Unlabeled);
  for (std::size_t cell = 0; cell < assign.cell_to_points.size(); ++cell) {
    bool any_fg = false, any_bg = false;
    for (std::uint32_t p : assign.cell_to_points[cell]) {
      if (cloud.labels[p] == PointLabel::Foreground) any_fg = true;
      if (cloud.labels[p] == PointLabel::Background) any_bg = true;
    }
    if (any_fg)
      out[cell] = PointLabel::Foreground;
    else if (any_bg)
      out[cell] = PointLabel::Background;
  }
  return out;
}

// Linear per-cell FG/BG classifier; weights map features to two raw scores.
struct FgBgModel {
  int feature_count = 0;
  Eigen::MatrixXd weights;  // 2 x feature_count, row 0 = FG, row 1 = BG
  int epochs = 0;
  double learning_rate = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> loss_curve;  // training loss per epoch, pre-update

  void validate() const {
    if (weights.rows() != 2 || weights.cols() != feature_count)
      throw ValidationError("FgBgModel: weight shape does not match feature count");
    if (!weights.allFinite()) throw ValidationError("FgBgModel: non-finite weights");
  }
};

struct TrainConfig {
  double alpha_bg = 0.005;
  int epochs = 300;
  double learning_rate = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 0) throw ValidationError("TrainConfig: epochs must be >= 0");
    if (!(learning_rate > 0.0)) throw ValidationError("TrainConfig: learning_rate must be > 0");
    if (alpha_bg < 0.0) throw ValidationError("TrainConfig: alpha_bg must be >= 0");
  }
};

// Full-batch gradient descent on the weighted cross-entropy over all labeled
// nonempty cells of the corpus. Zero-initialized, deterministic given the
// data order; zero epochs returns the initialization.
inline FgBgModel train_fgbg(const std::vector<CellFeatures>& frames,
                            const std::vector<std::vector<PointLabel>>& cell_labels,
                            const TrainConfig& cfg) {
  cfg.validate();
  if (frames.empty()) throw EmptyInputError("train_fgbg: no training frames");
  if (frames.size() != cell_labels.size())
    throw ValidationError("train_fgbg: frame and label counts differ");
  const int dim = frames.front().feature_count;

  // gather labeled nonempty cells in corpus order
  std::vector<Eigen::VectorXd> feats;
  std::vector<PointLabel> labels;
  for (std::size_t fr = 0; fr < frames.size(); ++fr) {
    const CellFeatures& cf = frames[fr];
    if (cf.feature_count != dim)
      throw ValidationError("train_fgbg: inconsistent feature dimensions across frames");
    if (cell_labels[fr].size() != cf.cells())
      throw ValidationError("train_fgbg: label grid does not match feature grid");
    for (std::size_t cell = 0; cell < cf.cells(); ++cell) {
      if (!cf.nonempty[cell] || cell_labels[fr][cell] == PointLabel::Unlabeled) continue;
      feats.push_back(Eigen::Map<const Eigen::VectorXd>(cf.at(cell), dim));
      labels.push_back(cell_labels[fr][cell]);
    }
  }
  bool has_fg = false, has_bg = false;
  for (PointLabel l : labels) {
    has_fg |= l == PointLabel::Foreground;
    has_bg |= l == PointLabel::Background;
  }
  if (!has_fg || !has_bg)
    throw DegenerateError("train_fgbg: corpus must contain both FG and BG labeled cells");

  FgBgModel model;
  model.feature_count = dim;
  model.weights = Eigen::MatrixXd::Zero(2, dim);
  model.epochs = cfg.epochs;
  model.learning_rate = cfg.learning_rate;
  model.seed = cfg.seed;

  std::vector<Eigen::Vector2d> scores(feats.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < feats.size(); ++i) scores[i] = model.weights * feats[i];
    const LossReport report = weak_cls_loss(scores, labels, cfg.alpha_bg);
    model.loss_curve.push_back(report.value);
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(2, dim);
    for (std::size_t i = 0; i < feats.size(); ++i)
      grad += report.grad[i] * feats[i].transpose();
    model.weights -= cfg.learning_rate * grad;
  }
  return model;
}

// Per-cell softmax category scores. Empty cells are labeled background with
// probabilities (0, 1); a cell's prediction depends on its own features only.
inline CategoryMap predict_fgbg(const FgBgModel& model, const CellFeatures& features) {
  model.validate();
  if (features.feature_count != model.feature_count)
    throw ValidationError("predict_fgbg: feature dimension does not match model");
  CategoryMap map = CategoryMap::zeros(features.height, features.width);
  for (std::size_t cell = 0; cell < features.cells(); ++cell) {
    if (!features.nonempty[cell]) {
      map.cells[cell] = Eigen::Vector2d(0.0, 1.0);
      continue;
    }
    const Eigen::Vector2d s =
        model.weights * Eigen::Map<const Eigen::VectorXd>(features.at(cell), model.feature_count);
    const double m = std::max(s.x(), s.y());
    const double lse = m + std::log(std::exp(s.x() - m) + std::exp(s.y() - m));
    map.cells[cell] = Eigen::Vector2d(std::exp(s.x() - lse), std::exp(s.y() - lse));
  }
  return map;
}

}  // namespace bevmotion
