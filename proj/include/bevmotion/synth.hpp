#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <vector>

#include "bevmotion/errors.hpp"
#include "bevmotion/geometry.hpp"
#include "bevmotion/rng.hpp"

namespace bevmotion {

// Axis-aligned-sized box with yaw, moving at constant horizontal velocity.
// The center is its position at the first frame's timestamp.
struct MoverSpec {
  Eigen::Vector3d size{4.0, 2.0, 1.6};    // meters
  Eigen::Vector3d center{10.0, 0.0, -0.9};  // world frame at t = 0
  double yaw = 0.0;                        // radians
  Eigen::Vector2d velocity{0.0, 0.0};      // m/s, world frame
};

// Deterministic LiDAR-like scene: a flat ground patch plus box movers,
// observed by an ego sensor translating along +x. Surface samples are drawn
// once in world/body coordinates and re-observed every frame, so a static
// noiseless scene produces identical clouds.
struct ScenarioSpec {
  double ground_height = -1.8;  // meters, world z
  double ground_extent = 20.0;  // half side length of the sampled square
  double ground_density = 1.5;  // points per square meter
  double box_density = 30.0;    // points per square meter of box surface
  std::vector<MoverSpec> movers;
  double ego_velocity = 0.0;  // m/s along world +x
  double noise_sigma = 0.0;   // per-frame sensor noise, truncated at 2 sigma
  int frame_count = 3;
  double frame_dt = 0.5;  // seconds
  // Optional angular dropout: sensor-frame azimuth sector [start, start+width)
  // removed from one frame (occlusion_frame >= 0) or from every frame (-1).
  int occlusion_frame = -1;
  double occlusion_start_deg = 0.0;
  double occlusion_width_deg = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(frame_dt > 0.0)) throw ValidationError("ScenarioSpec: frame_dt must be > 0");
    if (frame_count < 1) throw ValidationError("ScenarioSpec: frame_count must be >= 1");
    if (!(ground_density > 0.0) || !(box_density > 0.0))
      throw ValidationError("ScenarioSpec: densities must be > 0");
    if (!(ground_extent > 0.0)) throw ValidationError("ScenarioSpec: ground_extent must be > 0");
    if (noise_sigma < 0.0) throw ValidationError("ScenarioSpec: noise_sigma must be >= 0");
    if (occlusion_width_deg < 0.0 || occlusion_width_deg > 360.0)
      throw ValidationError("ScenarioSpec: occlusion_width_deg must be in [0, 360]");
    for (const MoverSpec& m : movers)
      if (!(m.size.minCoeff() > 0.0)) throw ValidationError("ScenarioSpec: box dimensions must be > 0");
  }
};

// Generated sequence with per-frame oracle data. Clouds carry FG/BG labels
// (movers are FG) and 0.5s ground-truth displacement in their own sensor
// frame; the 1s displacement and the ground/non-ground partition live in the
// side arrays, index-aligned with each frame's points.
struct SynthSequence {
  FrameSequence sequence;
  std::vector<std::vector<Point3>> gt_disp_1s;
  std::vector<std::vector<std::uint8_t>> is_ground;
  std::vector<std::vector<std::uint32_t>> injected;  // outlier indices per frame

  void validate() const {
    sequence.validate();
    if (gt_disp_1s.size() != sequence.frames.size() ||
        is_ground.size() != sequence.frames.size())
      throw ValidationError("SynthSequence: side arrays must match frame count");
  }
};

namespace detail {

struct SurfaceSample {
  Eigen::Vector3d local;  // body coordinates
};

// Area-uniform samples over the six faces of a unit-centered box.
inline std::vector<SurfaceSample> sample_box_surface(const Eigen::Vector3d& size,
                                                     double density, Rng& rng) {
  const double ax = size.y() * size.z(), ay = size.x() * size.z(), az = size.x() * size.y();
  const double total = 2.0 * (ax + ay + az);
  const std::size_t n = static_cast<std::size_t>(std::llround(density * total));
  const double areas[6] = {ax, ax, ay, ay, az, az};
  double cumulative[6];
  double acc = 0.0;
  for (int f = 0; f < 6; ++f) {
    acc += areas[f];
    cumulative[f] = acc;
  }
  std::vector<SurfaceSample> out;
  out.reserve(n);
  const Eigen::Vector3d half = 0.5 * size;
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = rng.uniform() * total;
    int face = 0;
    while (face < 5 && pick >= cumulative[face]) ++face;
    const double u = rng.uniform(), v = rng.uniform();
    Eigen::Vector3d p;
    switch (face) {
      case 0: p = {-half.x(), (u - 0.5) * size.y(), (v - 0.5) * size.z()}; break;
      case 1: p = {+half.x(), (u - 0.5) * size.y(), (v - 0.5) * size.z()}; break;
      case 2: p = {(u - 0.5) * size.x(), -half.y(), (v - 0.5) * size.z()}; break;
      case 3: p = {(u - 0.5) * size.x(), +half.y(), (v - 0.5) * size.z()}; break;
      case 4: p = {(u - 0.5) * size.x(), (v - 0.5) * size.y(), -half.z()}; break;
      default: p = {(u - 0.5) * size.x(), (v - 0.5) * size.y(), +half.z()}; break;
    }
    out.push_back({p});
  }
  return out;
}

inline bool in_footprint(const Eigen::Vector2d& p, const Eigen::Vector2d& center, double yaw,
                         const Eigen::Vector3d& size) {
  const Eigen::Vector2d d = p - center;
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double lx = c * d.x() + s * d.y();
  const double ly = -s * d.x() + c * d.y();
  return std::abs(lx) < 0.5 * size.x() && std::abs(ly) < 0.5 * size.y();
}

// Gaussian noise with the norm rejected above 2 sigma, keeping frame-to-frame
// deviations of one surface sample bounded by 4 sigma.
inline Eigen::Vector3d truncated_noise(Rng& rng, double sigma) {
  if (sigma <= 0.0) return Eigen::Vector3d::Zero();
  while (true) {
    const Eigen::Vector3d n = rng.gaussian3(sigma);
    if (n.norm() <= 2.0 * sigma) return n;
  }
}

}  // namespace detail

inline SynthSequence generate_scene(const ScenarioSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  // world-fixed ground samples
  const double side = 2.0 * spec.ground_extent;
  const std::size_t n_ground =
      static_cast<std::size_t>(std::llround(spec.ground_density * side * side));
  std::vector<Eigen::Vector2d> ground_xy;
  ground_xy.reserve(n_ground);
  for (std::size_t i = 0; i < n_ground; ++i)
    ground_xy.push_back({rng.uniform(-spec.ground_extent, spec.ground_extent),
                         rng.uniform(-spec.ground_extent, spec.ground_extent)});

  // body-fixed mover samples
  std::vector<std::vector<detail::SurfaceSample>> mover_samples;
  mover_samples.reserve(spec.movers.size());
  for (const MoverSpec& m : spec.movers)
    mover_samples.push_back(detail::sample_box_surface(m.size, spec.box_density, rng));

  SynthSequence out;
  out.sequence.past_count = static_cast<std::size_t>((spec.frame_count - 1) / 2);
  const bool occlusion_on = spec.occlusion_width_deg > 0.0;

  for (int f = 0; f < spec.frame_count; ++f) {
    const double t = f * spec.frame_dt;
    RigidPose pose;  // world-from-sensor, ego translating along +x
    pose.translation = Eigen::Vector3d(spec.ego_velocity * t, 0.0, 0.0);

    std::vector<Eigen::Vector2d> mover_centers;
    mover_centers.reserve(spec.movers.size());
    for (const MoverSpec& m : spec.movers)
      mover_centers.push_back(m.center.head<2>() + t * m.velocity);

    PointCloud cloud;
    std::vector<Point3> disp_1s;
    std::vector<std::uint8_t> ground_flags;

    auto emit = [&](const Point3& world, PointLabel label, const Eigen::Vector2d& velocity) {
      Point3 sensor = world - pose.translation;
      if (occlusion_on && (spec.occlusion_frame < 0 || spec.occlusion_frame == f)) {
        double az = std::atan2(sensor.y(), sensor.x()) * 180.0 / M_PI;
        if (az < 0.0) az += 360.0;
        double rel = az - spec.occlusion_start_deg;
        rel -= 360.0 * std::floor(rel / 360.0);
        if (rel < spec.occlusion_width_deg) return;
      }
      sensor += detail::truncated_noise(rng, spec.noise_sigma);
      cloud.points.push_back(sensor);
      cloud.labels.push_back(label);
      cloud.gt_motion.push_back(Point3(0.5 * velocity.x(), 0.5 * velocity.y(), 0.0));
      disp_1s.push_back(Point3(velocity.x(), velocity.y(), 0.0));
      ground_flags.push_back(label == PointLabel::Background ? 1 : 0);
    };

    for (const Eigen::Vector2d& g : ground_xy) {
      bool shadowed = false;
      for (std::size_t m = 0; m < spec.movers.size(); ++m) {
        if (detail::in_footprint(g, mover_centers[m], spec.movers[m].yaw, spec.movers[m].size)) {
          shadowed = true;
          break;
        }
      }
      if (shadowed) continue;  // ground under a mover is not observed
      emit(Point3(g.x(), g.y(), spec.ground_height), PointLabel::Background,
           Eigen::Vector2d::Zero());
    }
    for (std::size_t m = 0; m < spec.movers.size(); ++m) {
      const MoverSpec& mv = spec.movers[m];
      const double c = std::cos(mv.yaw), s = std::sin(mv.yaw);
      for (const detail::SurfaceSample& sample : mover_samples[m]) {
        const Eigen::Vector3d& l = sample.local;
        const Point3 world(mover_centers[m].x() + c * l.x() - s * l.y(),
                           mover_centers[m].y() + s * l.x() + c * l.y(),
                           mv.center.z() + l.z());
        emit(world, PointLabel::Foreground, mv.velocity);
      }
    }

    Frame frame;
    frame.timestamp = t;
    frame.cloud = std::move(cloud);
    frame.pose = pose;
    out.sequence.frames.push_back(std::move(frame));
    out.gt_disp_1s.push_back(std::move(disp_1s));
    out.is_ground.push_back(std::move(ground_flags));
    out.injected.emplace_back();
  }
  return out;
}

// Displaces a uniformly chosen fraction of each frame's points by offsets
// drawn from the ball of the given radius. Ground truth and labels are left
// untouched; the chosen indices are recorded for oracle checks.
inline SynthSequence inject_outliers(const SynthSequence& seq, double fraction, double magnitude,
                                     std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw ValidationError("inject_outliers: fraction must be in [0, 1]");
  if (magnitude < 0.0) throw ValidationError("inject_outliers: magnitude must be >= 0");
  SynthSequence out = seq;
  Rng rng(seed);
  for (std::size_t f = 0; f < out.sequence.frames.size(); ++f) {
    PointCloud& cloud = out.sequence.frames[f].cloud;
    const std::size_t n = cloud.size();
    const std::size_t k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::uint32_t> chosen = rng.sample_indices(n, k);
    for (std::uint32_t idx : chosen) cloud.points[idx] += rng.in_ball(magnitude);
    out.injected[f] = std::move(chosen);
  }
  return out;
}

}  // namespace bevmotion
