// bevmotion: synthetic-scene motion supervision pipeline.
//
// Subcommands: gen, ground, segtrain, segpredict, fit, eval, gradcheck,
// report. Exit codes: 0 success, 1 runtime error, 2 usage error,
// 3 validation error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "bevmotion/bevmotion.hpp"

namespace fs = std::filesystem;
using namespace bevmotion;

namespace {

// Usage errors detected after flag parsing (mode/data mismatches).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

io::RunConfig load_config(const std::string& path) {
  if (path.empty()) return io::RunConfig{};
  return io::parse_config(path);
}

std::vector<fs::path> config_input(const std::string& path) {
  std::vector<fs::path> inputs;
  if (!path.empty()) inputs.emplace_back(path);
  return inputs;
}

// Masks point labels down to the requested fraction, mirroring per-frame
// partial annotation. Fraction 1 keeps everything.
void mask_labels(PointCloud& cloud, double fraction, Rng& rng) {
  if (!cloud.has_labels() || fraction >= 1.0) return;
  const std::size_t keep =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cloud.size())));
  const std::vector<std::uint32_t> kept = rng.sample_indices(cloud.size(), keep);
  std::vector<PointLabel> masked(cloud.size(), PointLabel::Unlabeled);
  for (std::uint32_t i : kept) masked[i] = cloud.labels[i];
  cloud.labels = std::move(masked);
}

// FG/BG partition of a synchronized triple from classifier predictions.
SupervisionPartition partition_by_model(const SyncedTriple& triple, const io::RunConfig& cfg,
                                        const FgBgModel& model) {
  auto predict_labels = [&](const PointCloud& cloud) {
    const VoxelizeResult vox = voxelize(cloud, cfg.grid);
    const Plane plane = fit_ground_plane(cloud, cfg.ransac);
    const CellFeatures features = featurize_cells(vox.occupancy, plane);
    const CategoryMap map = predict_fgbg(model, features);
    const std::vector<Eigen::Vector2d> scores =
        lift_categories_to_points(map, vox.assignment, cloud.size());
    std::vector<PointLabel> labels(cloud.size(), PointLabel::Background);
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (scores[i].x() > scores[i].y()) labels[i] = PointLabel::Foreground;
    return labels;
  };
  SyncedTriple labeled = triple;
  labeled.past.labels = predict_labels(triple.past);
  labeled.current.labels = predict_labels(triple.current);
  labeled.future.labels = predict_labels(triple.future);
  return partition_from_labels(labeled);
}

CategoryMap predict_map_for_cloud(const PointCloud& cloud, const io::RunConfig& cfg,
                                  const FgBgModel& model) {
  const VoxelizeResult vox = voxelize(cloud, cfg.grid);
  const Plane plane = fit_ground_plane(cloud, cfg.ransac);
  return predict_fgbg(model, featurize_cells(vox.occupancy, plane));
}

// ---------------------------------------------------------------------------

int cmd_gen(const std::string& config_path, const std::string& out_dir) {
  const io::RunConfig cfg = load_config(config_path);
  SynthSequence seq = generate_scene(cfg.scene);
  if (cfg.gen.outlier_fraction > 0.0)
    seq = inject_outliers(seq, cfg.gen.outlier_fraction, cfg.gen.outlier_magnitude,
                          cfg.gen.outlier_seed);

  const SyncedTriple triple = extract_triple(seq.sequence, cfg.gen.stride);

  fs::create_directories(out_dir);
  std::vector<fs::path> outputs;
  // training frames in their own sensor coordinates, labels masked to the
  // configured annotation fraction
  Rng label_rng(cfg.gen.label_seed);
  for (std::size_t f = 0; f < seq.sequence.frames.size(); ++f) {
    PointCloud masked = seq.sequence.frames[f].cloud;
    mask_labels(masked, cfg.gen.label_fraction, label_rng);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03zu.bmlpc", f);
    const fs::path p = fs::path(out_dir) / name;
    io::write_cloud(masked, p);
    outputs.push_back(p);
  }
  // synchronized triple with full labels and ground truth, for fitting and
  // evaluation
  const fs::path past_p = fs::path(out_dir) / "past.bmlpc";
  const fs::path current_p = fs::path(out_dir) / "current.bmlpc";
  const fs::path future_p = fs::path(out_dir) / "future.bmlpc";
  io::write_cloud(triple.past, past_p);
  io::write_cloud(triple.current, current_p);
  io::write_cloud(triple.future, future_p);
  outputs.insert(outputs.end(), {past_p, current_p, future_p});

  io::write_manifest(fs::path(out_dir) / "manifest.json", "gen", cfg,
                     config_input(config_path), outputs);
  std::cout << "gen: " << seq.sequence.frames.size() << " frames, "
            << triple.current.size() << " current points -> " << out_dir << "\n";
  return 0;
}

int cmd_ground(const std::string& config_path, const std::string& cloud_path,
               const std::string& out_path) {
  const io::RunConfig cfg = load_config(config_path);
  const PointCloud cloud = io::read_cloud(cloud_path);
  const Plane plane = fit_ground_plane(cloud, cfg.ransac);
  const auto [ground, nonground] = segment_by_plane(cloud, plane, cfg.ransac.d_thresh);

  std::string out = "bmlground 1\n";
  out += "plane " + io::format_double(plane.normal.x()) + " " +
         io::format_double(plane.normal.y()) + " " + io::format_double(plane.normal.z()) + " " +
         io::format_double(plane.offset) + "\n";
  out += "d_thresh " + io::format_double(cfg.ransac.d_thresh) + "\n";
  out += "seed " + io::format_u64(cfg.ransac.rng_seed) + "\n";
  out += "ground " + io::format_u64(ground.size());
  for (std::uint32_t i : ground) out += " " + io::format_u64(i);
  out += "\nnonground " + io::format_u64(nonground.size());
  for (std::uint32_t i : nonground) out += " " + io::format_u64(i);
  out += "\n";
  io::write_file(out_path, out);

  std::vector<fs::path> inputs = config_input(config_path);
  inputs.emplace_back(cloud_path);
  io::write_manifest(fs::path(out_path).string() + ".manifest.json", "ground", cfg, inputs,
                     {out_path});
  std::cout << "ground: " << ground.size() << " ground / " << nonground.size()
            << " non-ground -> " << out_path << "\n";
  return 0;
}

int cmd_segtrain(const std::string& config_path, const std::vector<std::string>& cloud_paths,
                 const std::string& out_path) {
  const io::RunConfig cfg = load_config(config_path);
  if (cloud_paths.empty()) throw UsageError("segtrain: at least one --clouds file is required");
  std::vector<CellFeatures> features;
  std::vector<std::vector<PointLabel>> labels;
  for (const std::string& path : cloud_paths) {
    const PointCloud cloud = io::read_cloud(path);
    const VoxelizeResult vox = voxelize(cloud, cfg.grid);
    const Plane plane = fit_ground_plane(cloud, cfg.ransac);
    features.push_back(featurize_cells(vox.occupancy, plane));
    labels.push_back(lift_labels_to_cells(cloud, vox.assignment));
  }
  const FgBgModel model = train_fgbg(features, labels, cfg.seg);
  io::write_fgbg_model(model, out_path);

  std::vector<fs::path> inputs = config_input(config_path);
  for (const std::string& p : cloud_paths) inputs.emplace_back(p);
  io::write_manifest(fs::path(out_path).string() + ".manifest.json", "segtrain", cfg, inputs,
                     {out_path});
  std::cout << "segtrain: " << cloud_paths.size() << " frames, final loss "
            << (model.loss_curve.empty() ? 0.0 : model.loss_curve.back()) << " -> " << out_path
            << "\n";
  return 0;
}

int cmd_segpredict(const std::string& config_path, const std::string& model_path,
                   const std::string& cloud_path, const std::string& out_path) {
  const io::RunConfig cfg = load_config(config_path);
  const FgBgModel model = io::read_fgbg_model(model_path);
  const PointCloud cloud = io::read_cloud(cloud_path);
  const CategoryMap map = predict_map_for_cloud(cloud, cfg, model);
  io::write_category_map(map, out_path);

  std::vector<fs::path> inputs = config_input(config_path);
  inputs.emplace_back(model_path);
  inputs.emplace_back(cloud_path);
  io::write_manifest(fs::path(out_path).string() + ".manifest.json", "segpredict", cfg, inputs,
                     {out_path});
  std::size_t fg_cells = 0;
  for (const auto& s : map.cells)
    if (s.x() > s.y()) ++fg_cells;
  std::cout << "segpredict: " << fg_cells << " FG cells -> " << out_path << "\n";
  return 0;
}

int cmd_fit(const std::string& config_path, const std::string& mode_name,
            const std::string& past_path, const std::string& current_path,
            const std::string& future_path, const std::string& model_path, bool zero_bg,
            const std::string& out_dir) {
  io::RunConfig cfg = load_config(config_path);
  cfg.fit.mode = io::detail::parse_mode(mode_name);
  if (cfg.fit.mode == SupervisionMode::FB && model_path.empty())
    throw UsageError("fit --mode fb requires --model (classifier for FG/BG points)");
  if (zero_bg && model_path.empty())
    throw UsageError("fit --zero-bg requires --model");

  SyncedTriple triple;
  triple.past = io::read_cloud(past_path);
  triple.current = io::read_cloud(current_path);
  triple.future = io::read_cloud(future_path);
  triple.dt = cfg.scene.frame_dt * cfg.gen.stride;

  std::optional<FgBgModel> model;
  if (!model_path.empty()) model = io::read_fgbg_model(model_path);

  const SupervisionPartition partition =
      cfg.fit.mode == SupervisionMode::FB ? partition_by_model(triple, cfg, *model)
                                          : partition_by_ground(triple, cfg.ransac);
  auto [field, trace] = fit_motion_field(triple, cfg.grid, partition, cfg.fit);

  fs::create_directories(out_dir);
  const fs::path field_p = fs::path(out_dir) / "field.bmlmf";
  const fs::path trace_p = fs::path(out_dir) / "trace.txt";
  io::write_motion_field(field, field_p);
  io::write_trace(trace, trace_p);
  std::vector<fs::path> outputs{field_p, trace_p};

  if (zero_bg) {
    const CategoryMap map = predict_map_for_cloud(triple.current, cfg, *model);
    const fs::path zeroed_p = fs::path(out_dir) / "field_zeroed.bmlmf";
    io::write_motion_field(zero_background(field, map), zeroed_p);
    outputs.push_back(zeroed_p);
  }

  std::vector<fs::path> inputs = config_input(config_path);
  inputs.insert(inputs.end(), {past_path, current_path, future_path});
  if (!model_path.empty()) inputs.emplace_back(model_path);
  io::write_manifest(fs::path(out_dir) / "manifest.json", "fit", cfg, inputs, outputs);
  std::cout << "fit --mode " << mode_name << ": loss " << trace.loss_values.front() << " -> "
            << trace.loss_values.back() << " over " << trace.loss_values.size() << " steps ("
            << io::format_double(trace.wall_seconds) << "s) -> " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& field_path,
             const std::string& cloud_path, const std::string& catmap_path,
             const std::string& out_path) {
  const io::RunConfig cfg = load_config(config_path);
  const MotionField field = io::read_motion_field(field_path);
  const PointCloud cloud = io::read_cloud(cloud_path);

  const MotionField pred_1s = extrapolate_to_1s(field);
  const VoxelizeResult vox = voxelize(cloud, cfg.grid);
  const CellMotionGt gt = cell_motion_gt(cloud, vox.assignment);
  const MotionMetrics motion = motion_errors(pred_1s, gt, cfg.eval_static_thresh);

  std::optional<SegMetrics> seg;
  if (!catmap_path.empty()) {
    if (!cloud.has_labels())
      throw ValidationError("eval: --catmap given but the cloud carries no labels");
    const CategoryMap pred_map = io::read_category_map(catmap_path);
    seg = seg_accuracy(pred_map, lift_labels_to_cells(cloud, vox.assignment));
  }
  io::write_metrics(motion, seg, out_path);

  std::vector<fs::path> inputs = config_input(config_path);
  inputs.insert(inputs.end(), {field_path, cloud_path});
  if (!catmap_path.empty()) inputs.emplace_back(catmap_path);
  io::write_manifest(fs::path(out_path).string() + ".manifest.json", "eval", cfg, inputs,
                     {out_path});
  std::cout << io::format_metrics(motion, seg);
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck: deterministic random instances per loss, analytic vs central
// finite differences at step 1e-5, pass threshold 1e-4.

struct GradScene {
  SyncedTriple triple;
  GridConfig grid;
  CellAssignment assign;
  MotionField field;
  std::vector<std::uint32_t> static_idx;  // indices into current cloud
  std::vector<std::uint32_t> dynamic_idx;
};

// Clouds drawn with a minimum pairwise separation so nearest-neighbor
// correspondences stay put under the finite-difference step.
PointCloud separated_cloud(Rng& rng, std::size_t n, double lo, double hi, double min_sep) {
  PointCloud cloud;
  while (cloud.size() < n) {
    const Point3 p{rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(-1.0, 1.0)};
    bool ok = true;
    for (const Point3& q : cloud.points)
      if ((p - q).norm() < min_sep) {
        ok = false;
        break;
      }
    if (ok) cloud.points.push_back(p);
  }
  return cloud;
}

PointCloud jittered_copy(const PointCloud& base, Rng& rng, double jitter,
                         const Eigen::Vector2d& shift) {
  PointCloud out = base;
  for (Point3& p : out.points)
    p += Point3(shift.x() + rng.uniform(-jitter, jitter), shift.y() + rng.uniform(-jitter, jitter),
                rng.uniform(-jitter, jitter));
  return out;
}

// Compact scene with overlapping frame supports and modest motion. This keeps
// residuals and consistency weights in a range where every nonzero gradient
// component stays well above the resolution of central differences; sprawling
// scenes would crush the Gaussian confidence of far points to ~1e-9 and push
// true gradients below what the finite-difference probe can resolve.
GradScene make_grad_scene(std::uint64_t seed) {
  Rng rng(seed);
  GradScene scene;
  scene.grid.x_min = -6;
  scene.grid.x_max = 6;
  scene.grid.y_min = -6;
  scene.grid.y_max = 6;
  scene.grid.z_min = -2;
  scene.grid.z_max = 2;
  scene.grid.dx = scene.grid.dy = 1.0;
  scene.grid.dz = 1.0;
  scene.triple.current = separated_cloud(rng, 60, -4.5, 4.5, 0.25);
  scene.triple.past = jittered_copy(scene.triple.current, rng, 0.35, {0.20, -0.15});
  scene.triple.future = jittered_copy(scene.triple.current, rng, 0.35, {-0.18, 0.22});
  scene.triple.dt = 0.5;
  const VoxelizeResult vox = voxelize(scene.triple.current, scene.grid);
  scene.assign = vox.assignment;
  scene.field = MotionField::zeros(scene.grid.nx(), scene.grid.ny(), 0.5);
  for (auto& v : scene.field.cells) v = Eigen::Vector2d(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
  for (std::size_t i = 0; i < scene.triple.current.size(); ++i) {
    if (i % 4 == 0)
      scene.static_idx.push_back(static_cast<std::uint32_t>(i));
    else
      scene.dynamic_idx.push_back(static_cast<std::uint32_t>(i));
  }
  return scene;
}

// Wraps a per-point loss into a field-space thunk: lift, evaluate, scatter.
FieldLossFn field_thunk(const GradScene& scene,
                        std::function<LossReport(std::span<const Point3>)> pointwise) {
  return [&scene, pointwise](const MotionField& field) {
    const std::vector<Point3> motion =
        lift_motion_to_points(field, scene.assign, scene.triple.current.size());
    const LossReport rep = pointwise(motion);
    FieldLossReport out;
    out.value = rep.value;
    out.cell_grad.assign(field.cells.size(), Eigen::Vector2d::Zero());
    for (std::size_t i = 0; i < rep.grad.size(); ++i) {
      const std::int64_t cell = scene.assign.point_to_cell[i];
      if (cell >= 0) out.cell_grad[static_cast<std::size_t>(cell)] += rep.grad[i];
    }
    return out;
  };
}

double gradcheck_one(const std::string& name, std::uint64_t seed) {
  const GradScene scene = make_grad_scene(seed);
  const std::size_t n = scene.triple.current.size();
  LossConfig loss;

  if (name == "chamfer_l2") {
    auto fn = field_thunk(scene, [&](std::span<const Point3> motion) {
      return chamfer_l2(warp(scene.triple.current, motion, +1), scene.triple.future);
    });
    return gradient_check(fn, scene.field, 1e-5, 120, seed);
  }
  if (name == "wrc_l2" || name == "wrc_l1" || name == "wrc_wl" || name == "wrc_gm") {
    const PenaltyKind kind = name == "wrc_l2"   ? PenaltyKind::L2
                             : name == "wrc_l1" ? PenaltyKind::L1
                             : name == "wrc_wl" ? PenaltyKind::WelschLeclerc
                                                : PenaltyKind::GemanMcClure;
    Rng wrng(seed + 1);
    std::vector<double> w_src(n), w_tgt(scene.triple.future.size());
    for (double& w : w_src) w = wrng.uniform(0.1, 1.0);
    for (double& w : w_tgt) w = wrng.uniform(0.1, 1.0);
    auto fn = field_thunk(scene, [&, kind](std::span<const Point3> motion) {
      return weighted_robust_chamfer(warp(scene.triple.current, motion, +1),
                                     scene.triple.future, w_src, w_tgt, kind);
    });
    return gradient_check(fn, scene.field, 1e-5, 120, seed);
  }
  if (name == "rccd") {
    auto fn = field_thunk(scene, [&](std::span<const Point3> motion) {
      return rccd(scene.triple, motion, loss);
    });
    return gradient_check(fn, scene.field, 1e-5, 120, seed);
  }
  if (name == "smoothness") {
    const Neighborhoods nb =
        smoothness_neighborhoods(scene.triple.current, loss.smooth_radius, loss.smooth_k);
    auto fn = field_thunk(scene, [&, nb](std::span<const Point3> motion) {
      return smoothness(scene.triple.current, motion, nb);
    });
    return gradient_check(fn, scene.field, 1e-5, 120, seed);
  }
  if (name == "static") {
    auto fn = field_thunk(scene, [&](std::span<const Point3> motion) {
      LossReport rep = static_loss(motion);
      return rep;
    });
    return gradient_check(fn, scene.field, 1e-5, 120, seed);
  }
  if (name == "composite_self" || name == "composite_fb") {
    const SupervisionMode mode =
        name == "composite_fb" ? SupervisionMode::FB : SupervisionMode::SELF;
    SyncedTriple dyn;
    dyn.past = scene.triple.past;
    dyn.future = scene.triple.future;
    dyn.current = scene.triple.current.subset(scene.dynamic_idx);
    dyn.dt = scene.triple.dt;
    const Neighborhoods nb = smoothness_neighborhoods(dyn.current, loss.smooth_radius, loss.smooth_k);
    auto fn = [&, nb, mode](const MotionField& field) {
      const std::vector<Point3> motion =
          lift_motion_to_points(field, scene.assign, scene.triple.current.size());
      std::vector<Point3> motion_dyn, motion_stat;
      for (std::uint32_t i : scene.dynamic_idx) motion_dyn.push_back(motion[i]);
      for (std::uint32_t i : scene.static_idx) motion_stat.push_back(motion[i]);
      const LossReport rep = composite_motion_loss(mode, dyn, motion_dyn, motion_stat, loss, nb);
      FieldLossReport out;
      out.value = rep.value;
      out.cell_grad.assign(field.cells.size(), Eigen::Vector2d::Zero());
      for (std::size_t k = 0; k < scene.dynamic_idx.size(); ++k) {
        const std::int64_t cell = scene.assign.point_to_cell[scene.dynamic_idx[k]];
        if (cell >= 0) out.cell_grad[static_cast<std::size_t>(cell)] += rep.grad[k];
      }
      for (std::size_t k = 0; k < scene.static_idx.size(); ++k) {
        const std::int64_t cell = scene.assign.point_to_cell[scene.static_idx[k]];
        if (cell >= 0)
          out.cell_grad[static_cast<std::size_t>(cell)] += rep.grad[scene.dynamic_idx.size() + k];
      }
      return out;
    };
    return gradient_check(fn, scene.field, 1e-5, 120, seed);
  }
  if (name == "cls") {
    // score-space check, independent of the motion field machinery
    Rng crng(seed);
    std::vector<Eigen::Vector2d> scores(40);
    std::vector<PointLabel> labels(40);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      scores[i] = Eigen::Vector2d(crng.uniform(-2, 2), crng.uniform(-2, 2));
      const double pick = crng.uniform();
      labels[i] = pick < 0.4   ? PointLabel::Foreground
                  : pick < 0.8 ? PointLabel::Background
                               : PointLabel::Unlabeled;
    }
    const LossReport base = weak_cls_loss(scores, labels, 0.005);
    double max_rel = 0.0;
    const double h = 1e-5;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      for (int a = 0; a < 2; ++a) {
        std::vector<Eigen::Vector2d> probe = scores;
        probe[i][a] += h;
        const double up = weak_cls_loss(probe, labels, 0.005).value;
        probe[i][a] -= 2 * h;
        const double down = weak_cls_loss(probe, labels, 0.005).value;
        const double numeric = (up - down) / (2 * h);
        const double analytic = base.grad[i][a];
        max_rel = std::max(max_rel, std::abs(analytic - numeric) /
                                        std::max({std::abs(analytic), std::abs(numeric), 1e-8}));
      }
    }
    return max_rel;
  }
  throw UsageError("gradcheck: unknown loss '" + name +
                   "' (expected chamfer_l2|wrc_l2|wrc_l1|wrc_wl|wrc_gm|rccd|smoothness|static|"
                   "cls|composite_self|composite_fb|all)");
}

int cmd_gradcheck(const std::string& loss_name, std::uint64_t seed) {
  const std::vector<std::string> all = {"chamfer_l2", "wrc_l2",  "wrc_l1",
                                        "wrc_wl",     "wrc_gm",  "rccd",
                                        "smoothness", "static",  "cls",
                                        "composite_self", "composite_fb"};
  std::vector<std::string> names;
  if (loss_name == "all")
    names = all;
  else
    names.push_back(loss_name);
  bool ok = true;
  for (const std::string& name : names) {
    const double err = gradcheck_one(name, seed);
    const bool pass = err < 1e-4;
    ok = ok && pass;
    std::cout << "gradcheck " << name << " max_rel_error=" << io::format_double(err) << " "
              << (pass ? "ok" : "FAIL") << "\n";
  }
  return ok ? 0 : 1;
}

int cmd_report(const std::string& config_path, const std::vector<std::string>& metrics_paths,
               const std::vector<std::string>& trace_paths, const std::string& out_dir) {
  const io::RunConfig cfg = load_config(config_path);
  if (metrics_paths.empty()) throw UsageError("report: at least one metrics file is required");
  fs::create_directories(out_dir);

  auto run_name = [](const std::string& p) { return fs::path(p).stem().string(); };
  std::string table =
      "run static_mean static_median slow_mean slow_median fast_mean fast_median"
      " bg_acc fg_acc overall_acc\n";
  std::string series = "run group mean\n";
  for (const std::string& path : metrics_paths) {
    const io::MetricsRecord rec = io::read_metrics(path);
    const std::string name = run_name(path);
    table += name;
    for (const GroupStats* g :
         {&rec.motion.group_static, &rec.motion.group_slow, &rec.motion.group_fast})
      table += " " + io::format_double(g->mean) + " " + io::format_double(g->median);
    if (rec.seg) {
      table += " " + io::format_double(rec.seg->bg_accuracy) + " " +
               io::format_double(rec.seg->fg_accuracy) + " " +
               io::format_double(rec.seg->overall_accuracy);
    } else {
      table += " nan nan nan";
    }
    table += "\n";
    series += name + " static " + io::format_double(rec.motion.group_static.mean) + "\n";
    series += name + " slow " + io::format_double(rec.motion.group_slow.mean) + "\n";
    series += name + " fast " + io::format_double(rec.motion.group_fast.mean) + "\n";
  }
  const fs::path table_p = fs::path(out_dir) / "table.txt";
  const fs::path series_p = fs::path(out_dir) / "errors_by_group.txt";
  io::write_file(table_p, table);
  io::write_file(series_p, series);
  std::vector<fs::path> outputs{table_p, series_p};

  for (const std::string& path : trace_paths) {
    const std::vector<double> losses = io::read_trace(path);
    std::string curve = "step loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i)
      curve += io::format_u64(i) + " " + io::format_double(losses[i]) + "\n";
    const fs::path p = fs::path(out_dir) / ("loss_curve_" + run_name(path) + ".txt");
    io::write_file(p, curve);
    outputs.push_back(p);
  }

  std::vector<fs::path> inputs = config_input(config_path);
  for (const std::string& p : metrics_paths) inputs.emplace_back(p);
  for (const std::string& p : trace_paths) inputs.emplace_back(p);
  io::write_manifest(fs::path(out_dir) / "manifest.json", "report", cfg, inputs, outputs);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weak/self-supervised BEV motion supervision toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, cloud_path, model_path, catmap_path;
  std::string past_path, current_path, future_path, field_path;
  std::string mode_name = "self", loss_name = "all";
  std::vector<std::string> cloud_paths, metrics_paths, trace_paths;
  std::uint64_t gradcheck_seed = 7;
  bool zero_bg = false;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic scene");
  gen->add_option("--config", config_path, "run configuration file");
  gen->add_option("--out", out_path, "output directory")->required();

  CLI::App* ground = app.add_subcommand("ground", "fit a ground plane and segment a cloud");
  ground->add_option("--config", config_path, "run configuration file");
  ground->add_option("--cloud", cloud_path, "input cloud")->required();
  ground->add_option("--out", out_path, "output text file")->required();

  CLI::App* segtrain = app.add_subcommand("segtrain", "train the FG/BG cell classifier");
  segtrain->add_option("--config", config_path, "run configuration file");
  segtrain->add_option("--clouds", cloud_paths, "training cloud files")->required();
  segtrain->add_option("--out", out_path, "output model file")->required();

  CLI::App* segpredict = app.add_subcommand("segpredict", "predict a FG/BG category map");
  segpredict->add_option("--config", config_path, "run configuration file");
  segpredict->add_option("--model", model_path, "classifier model file")->required();
  segpredict->add_option("--cloud", cloud_path, "input cloud")->required();
  segpredict->add_option("--out", out_path, "output category map file")->required();

  CLI::App* fit = app.add_subcommand("fit", "fit a BEV motion field against the losses");
  fit->add_option("--config", config_path, "run configuration file");
  fit->add_option("--mode", mode_name, "supervision mode: fb|ng|self")->required();
  fit->add_option("--past", past_path, "past cloud (synchronized)")->required();
  fit->add_option("--current", current_path, "current cloud")->required();
  fit->add_option("--future", future_path, "future cloud (synchronized)")->required();
  fit->add_option("--model", model_path, "classifier model (fb mode, --zero-bg)");
  fit->add_flag("--zero-bg", zero_bg, "also write a field with background cells zeroed");
  fit->add_option("--out", out_path, "output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a fitted field against ground truth");
  eval->add_option("--config", config_path, "run configuration file");
  eval->add_option("--field", field_path, "fitted motion field")->required();
  eval->add_option("--cloud", cloud_path, "current cloud with ground truth")->required();
  eval->add_option("--catmap", catmap_path, "predicted category map (optional)");
  eval->add_option("--out", out_path, "output metrics file")->required();

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--loss", loss_name, "loss to check, or 'all'");
  gradcheck->add_option("--seed", gradcheck_seed, "instance seed");

  CLI::App* report = app.add_subcommand("report", "aggregate metrics into a comparison table");
  report->add_option("--config", config_path, "run configuration file");
  report->add_option("metrics", metrics_paths, "metrics files")->required();
  report->add_option("--traces", trace_paths, "trace files for loss curves");
  report->add_option("--out", out_path, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(config_path, out_path);
    if (ground->parsed()) return cmd_ground(config_path, cloud_path, out_path);
    if (segtrain->parsed()) return cmd_segtrain(config_path, cloud_paths, out_path);
    if (segpredict->parsed())
      return cmd_segpredict(config_path, model_path, cloud_path, out_path);
    if (fit->parsed())
      return cmd_fit(config_path, mode_name, past_path, current_path, future_path, model_path,
                     zero_bg, out_path);
    if (eval->parsed())
      return cmd_eval(config_path, field_path, cloud_path, catmap_path, out_path);
    if (gradcheck->parsed()) return cmd_gradcheck(loss_name, gradcheck_seed);
    if (report->parsed())
      return cmd_report(config_path, metrics_paths, trace_paths, out_path);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
