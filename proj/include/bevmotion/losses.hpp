#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bevmotion/errors.hpp"
#include "bevmotion/geometry.hpp"
#include "bevmotion/spatial.hpp"

namespace bevmotion {

// Robust penalty applied to 3D residuals. L2/Welsch-Leclerc/Geman-McClure act
// on the squared Euclidean norm, L1 on the component-wise absolute sum.
// Geman-McClure is the default.
enum class PenaltyKind : std::uint8_t {
  L2 = 0,
  L1 = 1,
  WelschLeclerc = 2,
  GemanMcClure = 3,
};

enum class SupervisionMode : std::uint8_t { FB = 0, NG = 1, SELF = 2 };

struct LossConfig {
  double theta_sq = 0.5;  // Gaussian consistency kernel width (squared meters)
  PenaltyKind penalty = PenaltyKind::GemanMcClure;
  double beta1 = 1.0;   // classification loss weight
  double beta2 = 5.0;   // motion loss weight
  double phi_bg = 0.005;  // static-motion weight for predicted background points
  double phi_g = 0.02;    // static-motion weight for ground points
  double smooth_radius = 2.5;  // meters
  int smooth_k = 8;
  int omega_gate = 1;  // 1 if the frame carries partial annotations, else 0

  // Ablation switches for the loss family (backward term, consistency
  // reweighting, smoothness regularization).
  bool use_past_frame = true;
  bool use_confidence = true;
  bool use_smoothness = true;

  void validate() const {
    if (!(theta_sq > 0.0)) throw ValidationError("LossConfig: theta_sq must be > 0");
    if (beta1 < 0.0 || beta2 < 0.0) throw ValidationError("LossConfig: beta weights must be >= 0");
    if (phi_bg < 0.0 || phi_g < 0.0) throw ValidationError("LossConfig: phi weights must be >= 0");
    if (!(smooth_radius > 0.0)) throw ValidationError("LossConfig: smooth_radius must be > 0");
    if (smooth_k < 1) throw ValidationError("LossConfig: smooth_k must be >= 1");
    if (omega_gate != 0 && omega_gate != 1)
      throw ValidationError("LossConfig: omega_gate must be 0 or 1");
  }
};

// Scalar loss plus its analytic gradient with respect to the horizontal
// motion of the supervised points (or with respect to raw scores, for the
// classification loss). Nearest-neighbor correspondences and confidence
// weights are treated as constants inside one evaluation.
struct LossReport {
  double value = 0.0;
  std::vector<Eigen::Vector2d> grad;
};

struct PenaltyValue {
  double value = 0.0;
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();  // d value / d residual
};

inline PenaltyValue penalty(PenaltyKind kind, const Eigen::Vector3d& residual) {
  switch (kind) {
    case PenaltyKind::L2:
      return {residual.squaredNorm(), 2.0 * residual};
    case PenaltyKind::L1: {
      PenaltyValue out;
      for (int a = 0; a < 3; ++a) {
        out.value += std::abs(residual[a]);
        out.grad[a] = residual[a] > 0.0 ? 1.0 : (residual[a] < 0.0 ? -1.0 : 0.0);
      }
      return out;
    }
    case PenaltyKind::WelschLeclerc: {
      const double e = std::exp(-0.5 * residual.squaredNorm());
      return {1.0 - e, e * residual};
    }
    case PenaltyKind::GemanMcClure: {
      const double s = residual.squaredNorm();
      const double den = s + 1.0;
      return {s / den, (2.0 / (den * den)) * residual};
    }
  }
  throw ValidationError("penalty: unknown kind");
}

// p_hat = p + sign * f. Labels and ground truth ride along unchanged.
inline PointCloud warp(const PointCloud& points, std::span<const Point3> motion, int sign) {
  if (sign != 1 && sign != -1) throw ValidationError("warp: sign must be +1 or -1");
  if (motion.size() != points.size())
    throw ValidationError("warp: motion count does not match point count");
  PointCloud out = points;
  const double s = static_cast<double>(sign);
  for (std::size_t i = 0; i < out.points.size(); ++i) out.points[i] += s * motion[i];
  return out;
}

// Symmetric mean of squared nearest-neighbor distances. The gradient is with
// respect to the motion that produced `warped` (identical to the gradient
// with respect to the warped coordinates), horizontal components only.
inline LossReport chamfer_l2(const PointCloud& warped, const PointCloud& target) {
  if (warped.empty() || target.empty())
    throw EmptyInputError("chamfer_l2: point sets must be nonempty");
  const NnIndex target_index(target);
  const NnIndex warped_index(warped);
  const double inv_nw = 1.0 / static_cast<double>(warped.size());
  const double inv_nt = 1.0 / static_cast<double>(target.size());

  LossReport report;
  report.grad.assign(warped.size(), Eigen::Vector2d::Zero());
  double forward = 0.0, backward = 0.0;
  for (std::size_t i = 0; i < warped.size(); ++i) {
    const auto hit = target_index.nearest(warped.points[i]);
    const Eigen::Vector3d r = warped.points[i] - target.points[hit.index];
    forward += r.squaredNorm();
    report.grad[i] += 2.0 * inv_nw * r.head<2>();
  }
  for (std::size_t j = 0; j < target.size(); ++j) {
    const auto hit = warped_index.nearest(target.points[j]);
    const Eigen::Vector3d r = target.points[j] - warped.points[hit.index];
    backward += r.squaredNorm();
    report.grad[hit.index] -= 2.0 * inv_nt * r.head<2>();
  }
  report.value = forward * inv_nw + backward * inv_nt;
  return report;
}

struct PseudoLabels {
  std::vector<Point3> forward;   // y_f(i) = NN(future, p0(i) + f(i)) - p0(i)
  std::vector<Point3> backward;  // y_b(i) = NN(past,   p0(i) - f(i)) - p0(i)
};

inline PseudoLabels pseudo_labels(const SyncedTriple& triple,
                                  std::span<const Point3> motion_current) {
  if (triple.past.empty() || triple.future.empty())
    throw EmptyInputError("pseudo_labels: past and future clouds must be nonempty");
  if (motion_current.size() != triple.current.size())
    throw ValidationError("pseudo_labels: motion count does not match current cloud");
  const NnIndex future_index(triple.future);
  const NnIndex past_index(triple.past);
  PseudoLabels out;
  out.forward.reserve(triple.current.size());
  out.backward.reserve(triple.current.size());
  for (std::size_t i = 0; i < triple.current.size(); ++i) {
    const Point3& p = triple.current.points[i];
    const auto fwd = future_index.nearest(p + motion_current[i]);
    const auto bwd = past_index.nearest(p - motion_current[i]);
    out.forward.push_back(triple.future.points[fwd.index] - p);
    out.backward.push_back(triple.past.points[bwd.index] - p);
  }
  return out;
}

// w0(i) = exp(-|y_f(i) + y_b(i)|^2 / (2 theta^2)). Weight 1 iff the labels
// are exactly antisymmetric.
inline std::vector<double> confidence_current(std::span<const Point3> y_f,
                                              std::span<const Point3> y_b, double theta_sq) {
  if (!(theta_sq > 0.0)) throw ValidationError("confidence_current: theta_sq must be > 0");
  if (y_f.size() != y_b.size())
    throw ValidationError("confidence_current: label arrays differ in length");
  std::vector<double> w(y_f.size());
  for (std::size_t i = 0; i < y_f.size(); ++i)
    w[i] = std::exp(-(y_f[i] + y_b[i]).squaredNorm() / (2.0 * theta_sq));
  return w;
}

// Each target point adopts the confidence of its nearest warped-current
// point (forward-warped for the future cloud, backward-warped for the past).
inline std::vector<double> propagate_confidence(const PointCloud& target,
                                                const PointCloud& warped_current,
                                                std::span<const double> w0) {
  if (warped_current.empty())
    throw EmptyInputError("propagate_confidence: warped cloud must be nonempty");
  if (w0.size() != warped_current.size())
    throw ValidationError("propagate_confidence: weight count does not match warped cloud");
  const NnIndex index(warped_current);
  std::vector<double> out(target.size());
  for (std::size_t j = 0; j < target.size(); ++j)
    out[j] = w0[index.nearest(target.points[j]).index];
  return out;
}

// One directed pair of weighted robust Chamfer terms: the source sum over
// warped points against their nearest target, plus the target sum against
// the nearest warped point, each normalized by the L1 mass of its weight
// vector. Gradient with respect to the motion that produced `warped`.
inline LossReport weighted_robust_chamfer(const PointCloud& warped, const PointCloud& target,
                                          std::span<const double> w_src,
                                          std::span<const double> w_tgt, PenaltyKind kind) {
  if (warped.empty() || target.empty())
    throw EmptyInputError("weighted_robust_chamfer: point sets must be nonempty");
  if (w_src.size() != warped.size() || w_tgt.size() != target.size())
    throw ValidationError("weighted_robust_chamfer: weight counts do not match clouds");
  double mass_src = 0.0, mass_tgt = 0.0;
  for (double w : w_src) mass_src += w;
  for (double w : w_tgt) mass_tgt += w;
  if (mass_src < 1e-8 * static_cast<double>(warped.size()) ||
      mass_tgt < 1e-8 * static_cast<double>(target.size()))
    throw DegenerateError("weighted_robust_chamfer: weight mass is degenerate");

  const NnIndex target_index(target);
  const NnIndex warped_index(warped);
  LossReport report;
  report.grad.assign(warped.size(), Eigen::Vector2d::Zero());
  for (std::size_t i = 0; i < warped.size(); ++i) {
    const auto hit = target_index.nearest(warped.points[i]);
    const PenaltyValue rho = penalty(kind, warped.points[i] - target.points[hit.index]);
    const double scale = w_src[i] / mass_src;
    report.value += scale * rho.value;
    report.grad[i] += scale * rho.grad.head<2>();
  }
  for (std::size_t j = 0; j < target.size(); ++j) {
    const auto hit = warped_index.nearest(target.points[j]);
    const PenaltyValue rho = penalty(kind, target.points[j] - warped.points[hit.index]);
    const double scale = w_tgt[j] / mass_tgt;
    report.value += scale * rho.value;
    report.grad[hit.index] -= scale * rho.grad.head<2>();
  }
  return report;
}

// Robust consistency-aware Chamfer distance over a synchronized triple:
// the backward-warped current cloud against the past plus the forward-warped
// current cloud against the future, reweighted by multi-frame consistency.
// Confidences and correspondences are recomputed once per call and held
// constant in the gradient.
inline LossReport rccd(const SyncedTriple& triple, std::span<const Point3> motion_current,
                       const LossConfig& cfg) {
  cfg.validate();
  if (triple.current.empty()) throw EmptyInputError("rccd: current cloud must be nonempty");
  if (triple.past.empty() || triple.future.empty())
    throw EmptyInputError("rccd: past and future clouds must be nonempty");
  if (motion_current.size() != triple.current.size())
    throw ValidationError("rccd: motion count does not match current cloud");

  const PointCloud warped_f = warp(triple.current, motion_current, +1);
  const PointCloud warped_b = warp(triple.current, motion_current, -1);

  std::vector<double> w0(triple.current.size(), 1.0);
  std::vector<double> w_past(triple.past.size(), 1.0);
  std::vector<double> w_future(triple.future.size(), 1.0);
  if (cfg.use_confidence) {
    const PseudoLabels labels = pseudo_labels(triple, motion_current);
    w0 = confidence_current(labels.forward, labels.backward, cfg.theta_sq);
    w_future = propagate_confidence(triple.future, warped_f, w0);
    w_past = propagate_confidence(triple.past, warped_b, w0);
  }

  const LossReport fwd = weighted_robust_chamfer(warped_f, triple.future, w0, w_future, cfg.penalty);
  if (!cfg.use_past_frame) return fwd;
  const LossReport bwd = weighted_robust_chamfer(warped_b, triple.past, w0, w_past, cfg.penalty);
  LossReport report;
  report.value = bwd.value + fwd.value;
  report.grad.resize(triple.current.size());
  // backward warp is p - f, so its chain rule contributes with a minus sign
  for (std::size_t i = 0; i < report.grad.size(); ++i)
    report.grad[i] = fwd.grad[i] - bwd.grad[i];
  return report;
}

using Neighborhoods = std::vector<std::vector<std::size_t>>;

// Neighborhood sets C_i for the smoothness term: up to k_max same-subset
// points within the radius, excluding the point itself, computed on the
// unwarped cloud.
inline Neighborhoods smoothness_neighborhoods(const PointCloud& points, double radius,
                                              int k_max) {
  Neighborhoods out(points.size());
  if (points.empty()) return out;
  const NnIndex index(points);
  for (std::size_t i = 0; i < points.size(); ++i)
    out[i] = index.radius_neighbors(points.points[i], radius, static_cast<std::size_t>(k_max), i);
  return out;
}

// Mean over points of the mean L1 difference between a point's motion and
// its neighbors' motions. Points with empty neighborhoods contribute zero.
inline LossReport smoothness(const PointCloud& points, std::span<const Point3> motion,
                             const Neighborhoods& neighborhoods) {
  if (motion.size() != points.size())
    throw ValidationError("smoothness: motion count does not match point count");
  if (neighborhoods.size() != points.size())
    throw ValidationError("smoothness: neighborhood count does not match point count");
  LossReport report;
  report.grad.assign(points.size(), Eigen::Vector2d::Zero());
  if (points.empty()) return report;
  const double inv_n = 1.0 / static_cast<double>(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& nb = neighborhoods[i];
    if (nb.empty()) continue;
    const double scale = inv_n / static_cast<double>(nb.size());
    for (std::size_t j : nb) {
      if (j >= points.size()) throw ValidationError("smoothness: neighbor index out of range");
      const Eigen::Vector3d d = motion[i] - motion[j];
      Eigen::Vector2d sg;
      for (int a = 0; a < 2; ++a) {
        report.value += scale * std::abs(d[a]);
        sg[a] = d[a] > 0.0 ? scale : (d[a] < 0.0 ? -scale : 0.0);
      }
      report.value += scale * std::abs(d[2]);
      report.grad[i] += sg;
      report.grad[j] -= sg;
    }
  }
  return report;
}

// Mean per-point L1 norm of the motion of a static subset; empty subset
// scores zero.
inline LossReport static_loss(std::span<const Point3> motion_static) {
  LossReport report;
  report.grad.assign(motion_static.size(), Eigen::Vector2d::Zero());
  if (motion_static.empty()) return report;
  const double inv_n = 1.0 / static_cast<double>(motion_static.size());
  for (std::size_t i = 0; i < motion_static.size(); ++i) {
    const Point3& f = motion_static[i];
    report.value += inv_n * (std::abs(f.x()) + std::abs(f.y()) + std::abs(f.z()));
    for (int a = 0; a < 2; ++a)
      report.grad[i][a] = f[a] > 0.0 ? inv_n : (f[a] < 0.0 ? -inv_n : 0.0);
  }
  return report;
}

// Weighted cross-entropy over labeled entries; scores are raw (FG, BG)
// logits, alpha_bg down-weights background labels. Gradient with respect to
// the scores. Unlabeled entries never contribute.
inline LossReport weak_cls_loss(std::span<const Eigen::Vector2d> scores,
                                std::span<const PointLabel> labels, double alpha_bg) {
  if (scores.size() != labels.size())
    throw ValidationError("weak_cls_loss: score and label counts differ");
  if (alpha_bg < 0.0) throw ValidationError("weak_cls_loss: alpha_bg must be >= 0");
  std::size_t n_labeled = 0;
  for (PointLabel l : labels)
    if (l != PointLabel::Unlabeled) ++n_labeled;
  if (n_labeled == 0) throw DegenerateError("weak_cls_loss: no labeled points");

  LossReport report;
  report.grad.assign(scores.size(), Eigen::Vector2d::Zero());
  const double inv_n = 1.0 / static_cast<double>(n_labeled);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == PointLabel::Unlabeled) continue;
    const bool fg = labels[i] == PointLabel::Foreground;
    const double alpha = fg ? 1.0 : alpha_bg;
    const double m = std::max(scores[i].x(), scores[i].y());
    const double lse = m + std::log(std::exp(scores[i].x() - m) + std::exp(scores[i].y() - m));
    const double ce = lse - (fg ? scores[i].x() : scores[i].y());
    report.value += inv_n * alpha * ce;
    const Eigen::Vector2d softmax{std::exp(scores[i].x() - lse), std::exp(scores[i].y() - lse)};
    Eigen::Vector2d onehot = Eigen::Vector2d::Zero();
    onehot[fg ? 0 : 1] = 1.0;
    report.grad[i] = inv_n * alpha * (softmax - onehot);
  }
  return report;
}

// Full motion loss: RCCD on the dynamic subset, smoothness on the same
// subset, and a weighted static term on the complementary subset. FB mode
// weighs the static term by phi_bg (predicted background), NG/SELF by phi_g
// (ground points). The gradient is the concatenation
// [dynamic points..., static points...].
inline LossReport composite_motion_loss(SupervisionMode mode, const SyncedTriple& dynamic_triple,
                                        std::span<const Point3> motion_dynamic,
                                        std::span<const Point3> motion_static,
                                        const LossConfig& cfg,
                                        const Neighborhoods& dynamic_neighborhoods) {
  if (dynamic_triple.current.empty())
    throw EmptyInputError("composite_motion_loss: dynamic subset must be nonempty");
  LossReport report = rccd(dynamic_triple, motion_dynamic, cfg);
  if (cfg.use_smoothness) {
    const LossReport smooth =
        smoothness(dynamic_triple.current, motion_dynamic, dynamic_neighborhoods);
    report.value += smooth.value;
    for (std::size_t i = 0; i < report.grad.size(); ++i) report.grad[i] += smooth.grad[i];
  }
  const double phi = mode == SupervisionMode::FB ? cfg.phi_bg : cfg.phi_g;
  const LossReport stat = static_loss(motion_static);
  report.value += phi * stat.value;
  report.grad.reserve(report.grad.size() + stat.grad.size());
  for (const Eigen::Vector2d& g : stat.grad) report.grad.push_back(phi * g);
  return report;
}

// Total objective. FB: beta1*cls + beta2*mot. NG: omega*beta1*cls +
// beta2*mot. SELF has no classification head. The reported gradient is the
// motion-side gradient (the classification term is constant with respect to
// the motion parameters).
inline LossReport total_weak_loss(SupervisionMode mode, const LossReport& mot,
                                  const LossReport& cls, const LossConfig& cfg) {
  cfg.validate();
  double cls_weight = 0.0;
  if (mode == SupervisionMode::FB) cls_weight = cfg.beta1;
  if (mode == SupervisionMode::NG) cls_weight = static_cast<double>(cfg.omega_gate) * cfg.beta1;
  LossReport report;
  report.value = cls_weight * cls.value + cfg.beta2 * mot.value;
  report.grad.reserve(mot.grad.size());
  for (const Eigen::Vector2d& g : mot.grad) report.grad.push_back(cfg.beta2 * g);
  return report;
}

}  // namespace bevmotion
