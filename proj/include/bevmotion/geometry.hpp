#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bevmotion/errors.hpp"

namespace bevmotion {

using Point3 = Eigen::Vector3d;

enum class PointLabel : std::uint8_t {
  Background = 0,
  Foreground = 1,
  Unlabeled = 255,
};

// Ordered 3D point set. Point order is identity: assignment maps, confidence
// maps and ground-truth arrays all index by position. Side arrays are either
// empty or hold exactly one entry per point.
struct PointCloud {
  std::vector<Point3> points;
  std::vector<PointLabel> labels;
  std::vector<Point3> gt_motion;  // displacement in meters, evaluation only

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_labels() const { return !labels.empty(); }
  bool has_gt_motion() const { return !gt_motion.empty(); }

  void validate() const {
    if (has_labels() && labels.size() != points.size())
      throw ValidationError("PointCloud: labels must have one entry per point");
    if (has_gt_motion() && gt_motion.size() != points.size())
      throw ValidationError("PointCloud: gt_motion must have one entry per point");
    for (const Point3& p : points)
      if (!p.allFinite()) throw ValidationError("PointCloud: non-finite coordinate");
  }

  // Subset by index list, carrying side arrays along.
  PointCloud subset(const std::vector<std::uint32_t>& indices) const {
    PointCloud out;
    out.points.reserve(indices.size());
    if (has_labels()) out.labels.reserve(indices.size());
    if (has_gt_motion()) out.gt_motion.reserve(indices.size());
    for (std::uint32_t i : indices) {
      out.points.push_back(points[i]);
      if (has_labels()) out.labels.push_back(labels[i]);
      if (has_gt_motion()) out.gt_motion.push_back(gt_motion[i]);
    }
    return out;
  }
};

// World-from-sensor rigid transform.
struct RigidPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static constexpr double kOrthonormalTol = 1e-9;

  bool is_valid() const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const Eigen::Matrix3d gram = rotation.transpose() * rotation;
    if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > kOrthonormalTol)
      return false;
    return rotation.determinant() > 0.0;
  }

  Point3 apply(const Point3& p) const { return rotation * p + translation; }

  RigidPose inverse() const {
    RigidPose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(rotation.transpose() * translation);
    return inv;
  }

  // this after other: (this * other).apply(p) == this.apply(other.apply(p))
  RigidPose compose(const RigidPose& other) const {
    RigidPose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }
};

struct Frame {
  double timestamp = 0.0;  // seconds
  PointCloud cloud;
  RigidPose pose;  // world-from-sensor
};

// frames[0 .. past_count) are past, frames[past_count] is the current frame,
// anything after it is future.
struct FrameSequence {
  std::vector<Frame> frames;
  std::size_t past_count = 0;

  std::size_t current_index() const { return past_count; }

  void validate() const {
    if (past_count + 1 > frames.size())
      throw ValidationError("FrameSequence: past_count + 1 exceeds frame count");
    for (std::size_t i = 1; i < frames.size(); ++i)
      if (!(frames[i].timestamp > frames[i - 1].timestamp))
        throw ValidationError("FrameSequence: timestamps must be strictly increasing");
  }
};

// Past/current/future clouds expressed in current-frame coordinates.
struct SyncedTriple {
  PointCloud past;
  PointCloud current;
  PointCloud future;
  double dt = 0.0;  // seconds between adjacent members
};

// Applies p' = R p + t to every point. Labels pass through unchanged;
// gt_motion vectors are rotated but not translated (they are displacements).
inline PointCloud transform_points(const PointCloud& cloud, const RigidPose& pose) {
  if (!pose.is_valid())
    throw ValidationError("transform_points: rotation is not orthonormal with det +1");
  cloud.validate();
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Point3& p : cloud.points) out.points.push_back(pose.apply(p));
  out.labels = cloud.labels;
  out.gt_motion.reserve(cloud.gt_motion.size());
  for (const Point3& v : cloud.gt_motion) out.gt_motion.push_back(pose.rotation * v);
  return out;
}

// Expresses every frame's cloud in the target frame's coordinates. The
// relative transform is pose_target^-1 * pose_source; the target frame's own
// cloud is returned untouched.
inline std::vector<PointCloud> synchronize_sequence(const FrameSequence& seq,
                                                    std::size_t target_index) {
  seq.validate();
  if (target_index >= seq.frames.size())
    throw ValidationError("synchronize_sequence: target index " +
                          std::to_string(target_index) + " out of range");
  const RigidPose target_inv = seq.frames[target_index].pose.inverse();
  std::vector<PointCloud> out;
  out.reserve(seq.frames.size());
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    if (i == target_index) {
      out.push_back(seq.frames[i].cloud);
    } else {
      out.push_back(transform_points(seq.frames[i].cloud,
                                     target_inv.compose(seq.frames[i].pose)));
    }
  }
  return out;
}

// Pulls frames at t-stride, t, t+stride (t = current index), synchronized to
// frame t. dt is the stride-scaled frame spacing; the spacing on both sides
// must match.
inline SyncedTriple extract_triple(const FrameSequence& seq, std::size_t stride) {
  seq.validate();
  if (stride == 0) throw ValidationError("extract_triple: stride must be >= 1");
  const std::size_t t = seq.current_index();
  if (t < stride || t + stride >= seq.frames.size())
    throw ValidationError("extract_triple: sequence too short for stride " +
                          std::to_string(stride));
  const double dt_back = seq.frames[t].timestamp - seq.frames[t - stride].timestamp;
  const double dt_fwd = seq.frames[t + stride].timestamp - seq.frames[t].timestamp;
  if (std::abs(dt_fwd - dt_back) > 1e-6)
    throw ValidationError("extract_triple: asymmetric frame spacing around current frame");
  const std::vector<PointCloud> synced = synchronize_sequence(seq, t);
  SyncedTriple triple;
  triple.past = synced[t - stride];
  triple.current = synced[t];
  triple.future = synced[t + stride];
  triple.dt = dt_fwd;
  return triple;
}

}  // namespace bevmotion
