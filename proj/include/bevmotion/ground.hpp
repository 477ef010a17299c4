#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "bevmotion/errors.hpp"
#include "bevmotion/geometry.hpp"
#include "bevmotion/rng.hpp"

namespace bevmotion {

// Plane {p : n.p + d = 0} with unit normal oriented upward (n.z > 0).
struct Plane {
  Eigen::Vector3d normal{0.0, 0.0, 1.0};
  double offset = 0.0;

  double distance(const Point3& p) const { return std::abs(normal.dot(p) + offset); }

  // z of the plane at a horizontal location; requires n.z > 0.
  double height_at(double x, double y) const {
    return -(offset + normal.x() * x + normal.y() * y) / normal.z();
  }

  void validate() const {
    if (std::abs(normal.norm() - 1.0) > 1e-9)
      throw ValidationError("Plane: normal must be unit length");
    if (!(normal.z() > 0.0)) throw ValidationError("Plane: normal must point upward");
    if (!std::isfinite(offset)) throw ValidationError("Plane: non-finite offset");
  }
};

struct RansacConfig {
  int iterations = 100;
  double d_thresh = 0.4;                   // meters
  double candidate_height_quantile = 0.5;  // fraction of lowest points kept
  double max_tilt_deg = 10.0;
  std::uint64_t rng_seed = 0;
  bool refit = false;  // least-squares refit on the best hypothesis's inliers

  void validate() const {
    if (iterations < 1) throw ValidationError("RansacConfig: iterations must be >= 1");
    if (!(d_thresh > 0.0)) throw ValidationError("RansacConfig: d_thresh must be > 0");
    if (!(candidate_height_quantile > 0.0) || candidate_height_quantile > 1.0)
      throw ValidationError("RansacConfig: candidate_height_quantile must be in (0, 1]");
    if (!(max_tilt_deg > 0.0) || !(max_tilt_deg < 90.0))
      throw ValidationError("RansacConfig: max_tilt_deg must be in (0, 90)");
  }
};

namespace detail {

inline Plane least_squares_plane(const std::vector<Point3>& pts,
                                 const std::vector<std::uint32_t>& indices) {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (std::uint32_t i : indices) centroid += pts[i];
  centroid /= static_cast<double>(indices.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::uint32_t i : indices) {
    const Eigen::Vector3d q = pts[i] - centroid;
    cov += q * q.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  Eigen::Vector3d n = solver.eigenvectors().col(0);  // smallest eigenvalue
  n.normalize();
  if (n.z() < 0.0) n = -n;
  Plane plane;
  plane.normal = n;
  plane.offset = -n.dot(centroid);
  return plane;
}

}  // namespace detail

// RANSAC plane fit over the low-height candidate subset. Deterministic given
// rng_seed: hypotheses are drawn in a fixed order and ties in the inlier
// count keep the earliest hypothesis.
inline Plane fit_ground_plane(const PointCloud& cloud, const RansacConfig& cfg) {
  cfg.validate();
  cloud.validate();

  // candidate filter: z at or below the configured quantile of the z distribution
  std::vector<double> zs(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) zs[i] = cloud.points[i].z();
  std::vector<std::uint32_t> candidates;
  if (!zs.empty()) {
    std::vector<double> sorted = zs;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t rank = static_cast<std::size_t>(std::ceil(
                                 cfg.candidate_height_quantile * static_cast<double>(sorted.size()))) -
                             1;
    const double z_cut = sorted[std::min(rank, sorted.size() - 1)];
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (zs[i] <= z_cut) candidates.push_back(static_cast<std::uint32_t>(i));
  }
  if (candidates.size() < 3)
    throw DegenerateError("fit_ground_plane: fewer than 3 candidate points after height filtering");

  Rng rng(cfg.rng_seed);
  const double cos_max_tilt = std::cos(cfg.max_tilt_deg * M_PI / 180.0);
  const std::size_t m = candidates.size();

  Plane best;
  long best_inliers = -1;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::uint32_t ia = candidates[rng.bounded(m)];
    std::uint32_t ib = ia, ic = ia;
    while (ib == ia) ib = candidates[rng.bounded(m)];
    while (ic == ia || ic == ib) ic = candidates[rng.bounded(m)];
    const Point3& a = cloud.points[ia];
    Eigen::Vector3d n = (cloud.points[ib] - a).cross(cloud.points[ic] - a);
    const double norm = n.norm();
    if (norm <= 1e-12) continue;  // collinear sample
    n /= norm;
    if (n.z() < 0.0) n = -n;
    if (n.z() < cos_max_tilt) continue;  // not near-horizontal
    const double d = -n.dot(a);
    long count = 0;
    for (std::uint32_t i : candidates)
      if (std::abs(n.dot(cloud.points[i]) + d) < cfg.d_thresh) ++count;
    if (count > best_inliers) {
      best_inliers = count;
      best.normal = n;
      best.offset = d;
    }
  }
  if (best_inliers < 0)
    throw DegenerateError("fit_ground_plane: no near-horizontal hypothesis in any iteration");

  if (cfg.refit) {
    std::vector<std::uint32_t> inliers;
    for (std::uint32_t i : candidates)
      if (best.distance(cloud.points[i]) < cfg.d_thresh) inliers.push_back(i);
    if (inliers.size() >= 3) {
      const Plane refined = detail::least_squares_plane(cloud.points, inliers);
      if (refined.normal.z() >= cos_max_tilt) best = refined;
    }
  }
  return best;
}

// Partition of all point indices: perpendicular distance < d_thresh is
// ground, everything else non-ground. Exhaustive and disjoint.
inline std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> segment_by_plane(
    const PointCloud& cloud, const Plane& plane, double d_thresh) {
  plane.validate();
  if (!(d_thresh > 0.0)) throw ValidationError("segment_by_plane: d_thresh must be > 0");
  std::vector<std::uint32_t> ground, nonground;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (plane.distance(cloud.points[i]) < d_thresh)
      ground.push_back(static_cast<std::uint32_t>(i));
    else
      nonground.push_back(static_cast<std::uint32_t>(i));
  }
  return {std::move(ground), std::move(nonground)};
}

}  // namespace bevmotion
