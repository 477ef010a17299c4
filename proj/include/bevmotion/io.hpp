#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bevmotion/bev.hpp"
#include "bevmotion/errors.hpp"
#include "bevmotion/eval.hpp"
#include "bevmotion/geometry.hpp"
#include "bevmotion/ground.hpp"
#include "bevmotion/losses.hpp"
#include "bevmotion/optimize.hpp"
#include "bevmotion/segmentation.hpp"
#include "bevmotion/synth.hpp"

namespace bevmotion::io {

inline constexpr std::string_view kVersion = "bevmotion 0.1.0";

// ---------------------------------------------------------------------------
// locale-independent numeric text

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_u64(std::uint64_t v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_i64(std::int64_t v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw FormatError("expected a real number for " + std::string(what) + ", got '" +
                      std::string(s) + "'");
  return v;
}

inline std::int64_t parse_i64(std::string_view s, std::string_view what) {
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw FormatError("expected an integer for " + std::string(what) + ", got '" +
                      std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_u64(std::string_view s, std::string_view what) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw FormatError("expected an unsigned integer for " + std::string(what) + ", got '" +
                      std::string(s) + "'");
  return v;
}

inline bool parse_bool(std::string_view s, std::string_view what) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw FormatError("expected a boolean for " + std::string(what) + ", got '" + std::string(s) +
                    "'");
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// ---------------------------------------------------------------------------
// whole-file helpers

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("short write to " + path.string());
}

// ---------------------------------------------------------------------------
// little-endian binary primitives

namespace detail {

inline void put_u8(std::string& buf, std::uint8_t v) { buf.push_back(static_cast<char>(v)); }

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& buf, float v) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

// byte reader that reports the offset of any truncation
class Reader {
 public:
  Reader(std::string_view data, std::string name) : data_(data), name_(std::move(name)) {}

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return data_.size() - offset_; }

  void expect_magic(std::string_view magic) {
    if (remaining() < magic.size() || data_.substr(offset_, magic.size()) != magic)
      throw FormatError(name_ + ": bad magic at offset 0, expected '" + std::string(magic) + "'");
    offset_ += magic.size();
  }

  std::uint8_t u8() {
    need(1, "u8");
    return static_cast<std::uint8_t>(data_[offset_++]);
  }

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[offset_ + i])) << (8 * i);
    offset_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[offset_ + i])) << (8 * i);
    offset_ += 8;
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float v = 0.0f;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  void expect_end() {
    if (remaining() != 0)
      throw FormatError(name_ + ": " + std::to_string(remaining()) +
                        " trailing bytes at offset " + std::to_string(offset_));
  }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n)
      throw FormatError(name_ + ": truncated " + what + " at offset " + std::to_string(offset_) +
                        " (need " + std::to_string(n) + " bytes, have " +
                        std::to_string(remaining()) + ")");
  }

  std::string_view data_;
  std::string name_;
  std::size_t offset_ = 0;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// cloud file: magic "BMLPC1", u64 count, u8 flags (bit0 labels, bit1 gt),
// u8 reserved, then count xyz float32 triples, optional label bytes,
// optional gt float32 triples. All little-endian.

inline constexpr std::string_view kCloudMagic = "BMLPC1";

inline std::string encode_cloud(const PointCloud& cloud) {
  cloud.validate();
  std::string buf;
  buf.reserve(16 + cloud.size() * (12 + (cloud.has_labels() ? 1 : 0) +
                                   (cloud.has_gt_motion() ? 12 : 0)));
  buf.append(kCloudMagic);
  detail::put_u64(buf, cloud.size());
  std::uint8_t flags = 0;
  if (cloud.has_labels()) flags |= 1;
  if (cloud.has_gt_motion()) flags |= 2;
  detail::put_u8(buf, flags);
  detail::put_u8(buf, 0);
  for (const Point3& p : cloud.points) {
    detail::put_f32(buf, static_cast<float>(p.x()));
    detail::put_f32(buf, static_cast<float>(p.y()));
    detail::put_f32(buf, static_cast<float>(p.z()));
  }
  if (cloud.has_labels())
    for (PointLabel l : cloud.labels) detail::put_u8(buf, static_cast<std::uint8_t>(l));
  if (cloud.has_gt_motion())
    for (const Point3& v : cloud.gt_motion) {
      detail::put_f32(buf, static_cast<float>(v.x()));
      detail::put_f32(buf, static_cast<float>(v.y()));
      detail::put_f32(buf, static_cast<float>(v.z()));
    }
  return buf;
}

inline PointCloud decode_cloud(std::string_view bytes, const std::string& name) {
  detail::Reader r(bytes, name);
  r.expect_magic(kCloudMagic);
  const std::uint64_t count = r.u64();
  const std::uint8_t flags = r.u8();
  if ((flags & ~0x3u) != 0)
    throw FormatError(name + ": unknown flag bits at offset " + std::to_string(r.offset() - 1));
  r.u8();  // reserved
  PointCloud cloud;
  cloud.points.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const double x = r.f32(), y = r.f32(), z = r.f32();
    cloud.points.emplace_back(x, y, z);
  }
  if (flags & 1) {
    cloud.labels.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint8_t raw = r.u8();
      if (raw != 0 && raw != 1 && raw != 255)
        throw FormatError(name + ": invalid label byte at offset " +
                          std::to_string(r.offset() - 1));
      cloud.labels.push_back(static_cast<PointLabel>(raw));
    }
  }
  if (flags & 2) {
    cloud.gt_motion.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const double x = r.f32(), y = r.f32(), z = r.f32();
      cloud.gt_motion.emplace_back(x, y, z);
    }
  }
  r.expect_end();
  return cloud;
}

inline void write_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  write_file(path, encode_cloud(cloud));
}

inline PointCloud read_cloud(const std::filesystem::path& path) {
  return decode_cloud(read_file(path), path.filename().string());
}

// ---------------------------------------------------------------------------
// motion field file: magic "BMLMF1", u32 H, u32 W, f32 horizon, H*W (dx,dy)
// float32 pairs, row-major.

inline constexpr std::string_view kFieldMagic = "BMLMF1";

inline std::string encode_motion_field(const MotionField& field) {
  field.validate();
  std::string buf;
  buf.append(kFieldMagic);
  detail::put_u32(buf, static_cast<std::uint32_t>(field.height));
  detail::put_u32(buf, static_cast<std::uint32_t>(field.width));
  detail::put_f32(buf, static_cast<float>(field.horizon));
  for (const auto& v : field.cells) {
    detail::put_f32(buf, static_cast<float>(v.x()));
    detail::put_f32(buf, static_cast<float>(v.y()));
  }
  return buf;
}

inline MotionField decode_motion_field(std::string_view bytes, const std::string& name) {
  detail::Reader r(bytes, name);
  r.expect_magic(kFieldMagic);
  MotionField field;
  field.height = static_cast<int>(r.u32());
  field.width = static_cast<int>(r.u32());
  field.horizon = r.f32();
  const std::size_t n = static_cast<std::size_t>(field.height) * field.width;
  field.cells.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = r.f32(), y = r.f32();
    field.cells.emplace_back(x, y);
  }
  r.expect_end();
  return field;
}

inline void write_motion_field(const MotionField& field, const std::filesystem::path& path) {
  write_file(path, encode_motion_field(field));
}

inline MotionField read_motion_field(const std::filesystem::path& path) {
  return decode_motion_field(read_file(path), path.filename().string());
}

// ---------------------------------------------------------------------------
// category map file: magic "BMLCM1", u32 H, u32 W, H*W (fg,bg) float32 pairs.

inline constexpr std::string_view kCatMapMagic = "BMLCM1";

inline std::string encode_category_map(const CategoryMap& map) {
  std::string buf;
  buf.append(kCatMapMagic);
  detail::put_u32(buf, static_cast<std::uint32_t>(map.height));
  detail::put_u32(buf, static_cast<std::uint32_t>(map.width));
  for (const auto& v : map.cells) {
    detail::put_f32(buf, static_cast<float>(v.x()));
    detail::put_f32(buf, static_cast<float>(v.y()));
  }
  return buf;
}

inline CategoryMap decode_category_map(std::string_view bytes, const std::string& name) {
  detail::Reader r(bytes, name);
  r.expect_magic(kCatMapMagic);
  CategoryMap map;
  map.height = static_cast<int>(r.u32());
  map.width = static_cast<int>(r.u32());
  const std::size_t n = static_cast<std::size_t>(map.height) * map.width;
  map.cells.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = r.f32(), y = r.f32();
    map.cells.emplace_back(x, y);
  }
  r.expect_end();
  return map;
}

inline void write_category_map(const CategoryMap& map, const std::filesystem::path& path) {
  write_file(path, encode_category_map(map));
}

inline CategoryMap read_category_map(const std::filesystem::path& path) {
  return decode_category_map(read_file(path), path.filename().string());
}

// ---------------------------------------------------------------------------
// classifier model: versioned flat numeric text

inline std::string encode_fgbg_model(const FgBgModel& model) {
  model.validate();
  std::string out = "bmlfgbg 1\n";
  out += "feature_count " + format_i64(model.feature_count) + "\n";
  out += "epochs " + format_i64(model.epochs) + "\n";
  out += "learning_rate " + format_double(model.learning_rate) + "\n";
  out += "seed " + format_u64(model.seed) + "\n";
  for (int row = 0; row < 2; ++row) {
    out += row == 0 ? "weights_fg" : "weights_bg";
    for (int c = 0; c < model.feature_count; ++c)
      out += " " + format_double(model.weights(row, c));
    out += "\n";
  }
  out += "loss_curve";
  for (double v : model.loss_curve) out += " " + format_double(v);
  out += "\n";
  return out;
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace detail

inline FgBgModel decode_fgbg_model(std::string_view text, const std::string& name) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (lines.empty() || lines[0] != "bmlfgbg 1")
    throw FormatError(name + ": bad model header, expected 'bmlfgbg 1'");
  FgBgModel model;
  bool have_fg = false, have_bg = false;
  std::vector<double> fg_row, bg_row;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto tokens = detail::split_ws(lines[i]);
    const std::string_view key = tokens[0];
    if (key == "feature_count")
      model.feature_count = static_cast<int>(parse_i64(tokens.at(1), key));
    else if (key == "epochs")
      model.epochs = static_cast<int>(parse_i64(tokens.at(1), key));
    else if (key == "learning_rate")
      model.learning_rate = parse_double(tokens.at(1), key);
    else if (key == "seed")
      model.seed = parse_u64(tokens.at(1), key);
    else if (key == "weights_fg" || key == "weights_bg") {
      std::vector<double>& row = key == "weights_fg" ? fg_row : bg_row;
      (key == "weights_fg" ? have_fg : have_bg) = true;
      for (std::size_t t = 1; t < tokens.size(); ++t)
        row.push_back(parse_double(tokens[t], key));
    } else if (key == "loss_curve") {
      for (std::size_t t = 1; t < tokens.size(); ++t)
        model.loss_curve.push_back(parse_double(tokens[t], key));
    } else {
      throw FormatError(name + ": unknown model key '" + std::string(key) + "'");
    }
  }
  if (!have_fg || !have_bg ||
      fg_row.size() != static_cast<std::size_t>(model.feature_count) ||
      bg_row.size() != static_cast<std::size_t>(model.feature_count))
    throw FormatError(name + ": weight rows do not match feature_count");
  model.weights.resize(2, model.feature_count);
  for (int c = 0; c < model.feature_count; ++c) {
    model.weights(0, c) = fg_row[c];
    model.weights(1, c) = bg_row[c];
  }
  return model;
}

inline void write_fgbg_model(const FgBgModel& model, const std::filesystem::path& path) {
  write_file(path, encode_fgbg_model(model));
}

inline FgBgModel read_fgbg_model(const std::filesystem::path& path) {
  return decode_fgbg_model(read_file(path), path.filename().string());
}

// ---------------------------------------------------------------------------
// run configuration: plain-text key=value lines, '#' comments, unknown keys
// rejected. Defaults are the paper's constants; an empty file parses to them.

struct GenConfig {
  int stride = 1;               // triple extraction stride
  double label_fraction = 1.0;  // fraction of point labels kept per frame
  std::uint64_t label_seed = 0;
  double outlier_fraction = 0.0;
  double outlier_magnitude = 0.0;
  std::uint64_t outlier_seed = 0;

  void validate() const {
    if (stride < 1) throw ValidationError("gen.stride must be >= 1");
    if (label_fraction < 0.0 || label_fraction > 1.0)
      throw ValidationError("gen.label_fraction must be in [0, 1]");
    if (outlier_fraction < 0.0 || outlier_fraction > 1.0)
      throw ValidationError("gen.outlier_fraction must be in [0, 1]");
    if (outlier_magnitude < 0.0) throw ValidationError("gen.outlier_magnitude must be >= 0");
  }
};

struct RunConfig {
  GridConfig grid;
  RansacConfig ransac;
  FitConfig fit;  // fit.loss holds the loss configuration
  ScenarioSpec scene;
  GenConfig gen;
  TrainConfig seg;
  double eval_static_thresh = 0.2;

  const LossConfig& loss() const { return fit.loss; }
  LossConfig& loss() { return fit.loss; }

  void validate() const {
    grid.validate();
    ransac.validate();
    fit.validate();
    scene.validate();
    gen.validate();
    seg.validate();
    if (!(eval_static_thresh >= 0.0) || !(eval_static_thresh < 5.0))
      throw ValidationError("eval.static_thresh must be in [0, 5)");
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_char(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = s.find(sep, start);
    if (end == std::string_view::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

inline std::string format_mover(const MoverSpec& m) {
  std::string out;
  const double vals[9] = {m.size.x(), m.size.y(), m.size.z(), m.center.x(), m.center.y(),
                          m.center.z(), m.yaw,     m.velocity.x(), m.velocity.y()};
  for (int i = 0; i < 9; ++i) {
    if (i) out += ",";
    out += format_double(vals[i]);
  }
  return out;
}

inline MoverSpec parse_mover(std::string_view text) {
  const auto parts = split_char(text, ',');
  if (parts.size() != 9)
    throw FormatError("scene.mover expects 9 comma-separated values "
                      "(sx,sy,sz,cx,cy,cz,yaw,vx,vy), got " +
                      std::to_string(parts.size()));
  double v[9];
  for (int i = 0; i < 9; ++i) v[i] = parse_double(trim(parts[i]), "scene.mover");
  MoverSpec m;
  m.size = {v[0], v[1], v[2]};
  m.center = {v[3], v[4], v[5]};
  m.yaw = v[6];
  m.velocity = {v[7], v[8]};
  return m;
}

inline std::string penalty_name(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::L2: return "l2";
    case PenaltyKind::L1: return "l1";
    case PenaltyKind::WelschLeclerc: return "wl";
    case PenaltyKind::GemanMcClure: return "gm";
  }
  return "gm";
}

inline PenaltyKind parse_penalty(std::string_view s) {
  if (s == "l2") return PenaltyKind::L2;
  if (s == "l1") return PenaltyKind::L1;
  if (s == "wl") return PenaltyKind::WelschLeclerc;
  if (s == "gm") return PenaltyKind::GemanMcClure;
  throw FormatError("loss.penalty must be one of l2|l1|wl|gm, got '" + std::string(s) + "'");
}

inline std::string mode_name(SupervisionMode mode) {
  switch (mode) {
    case SupervisionMode::FB: return "fb";
    case SupervisionMode::NG: return "ng";
    case SupervisionMode::SELF: return "self";
  }
  return "self";
}

inline SupervisionMode parse_mode(std::string_view s) {
  if (s == "fb") return SupervisionMode::FB;
  if (s == "ng") return SupervisionMode::NG;
  if (s == "self") return SupervisionMode::SELF;
  throw FormatError("fit.mode must be one of fb|ng|self, got '" + std::string(s) + "'");
}

}  // namespace detail

inline RunConfig parse_config_text(std::string_view text, const std::string& origin) {
  RunConfig cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = detail::trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') {
      if (start > text.size()) break;
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw FormatError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view value = detail::trim(line.substr(eq + 1));

    if (key == "grid.x_min") cfg.grid.x_min = parse_double(value, key);
    else if (key == "grid.x_max") cfg.grid.x_max = parse_double(value, key);
    else if (key == "grid.y_min") cfg.grid.y_min = parse_double(value, key);
    else if (key == "grid.y_max") cfg.grid.y_max = parse_double(value, key);
    else if (key == "grid.z_min") cfg.grid.z_min = parse_double(value, key);
    else if (key == "grid.z_max") cfg.grid.z_max = parse_double(value, key);
    else if (key == "grid.dx") cfg.grid.dx = parse_double(value, key);
    else if (key == "grid.dy") cfg.grid.dy = parse_double(value, key);
    else if (key == "grid.dz") cfg.grid.dz = parse_double(value, key);
    else if (key == "ransac.iterations") cfg.ransac.iterations = static_cast<int>(parse_i64(value, key));
    else if (key == "ransac.d_thresh") cfg.ransac.d_thresh = parse_double(value, key);
    else if (key == "ransac.height_quantile") cfg.ransac.candidate_height_quantile = parse_double(value, key);
    else if (key == "ransac.max_tilt_deg") cfg.ransac.max_tilt_deg = parse_double(value, key);
    else if (key == "ransac.seed") cfg.ransac.rng_seed = parse_u64(value, key);
    else if (key == "ransac.refit") cfg.ransac.refit = parse_bool(value, key);
    else if (key == "loss.theta_sq") cfg.fit.loss.theta_sq = parse_double(value, key);
    else if (key == "loss.penalty") cfg.fit.loss.penalty = detail::parse_penalty(value);
    else if (key == "loss.beta1") cfg.fit.loss.beta1 = parse_double(value, key);
    else if (key == "loss.beta2") cfg.fit.loss.beta2 = parse_double(value, key);
    else if (key == "loss.phi_bg") cfg.fit.loss.phi_bg = parse_double(value, key);
    else if (key == "loss.phi_g") cfg.fit.loss.phi_g = parse_double(value, key);
    else if (key == "loss.smooth_radius") cfg.fit.loss.smooth_radius = parse_double(value, key);
    else if (key == "loss.smooth_k") cfg.fit.loss.smooth_k = static_cast<int>(parse_i64(value, key));
    else if (key == "loss.omega_gate") cfg.fit.loss.omega_gate = static_cast<int>(parse_i64(value, key));
    else if (key == "loss.use_past_frame") cfg.fit.loss.use_past_frame = parse_bool(value, key);
    else if (key == "loss.use_confidence") cfg.fit.loss.use_confidence = parse_bool(value, key);
    else if (key == "loss.use_smoothness") cfg.fit.loss.use_smoothness = parse_bool(value, key);
    else if (key == "fit.mode") cfg.fit.mode = detail::parse_mode(value);
    else if (key == "fit.steps") cfg.fit.steps = static_cast<int>(parse_i64(value, key));
    else if (key == "fit.step_size") cfg.fit.step_size = parse_double(value, key);
    else if (key == "fit.adam_beta1") cfg.fit.adam_beta1 = parse_double(value, key);
    else if (key == "fit.adam_beta2") cfg.fit.adam_beta2 = parse_double(value, key);
    else if (key == "fit.seed") cfg.fit.seed = parse_u64(value, key);
    else if (key == "scene.ground_height") cfg.scene.ground_height = parse_double(value, key);
    else if (key == "scene.ground_extent") cfg.scene.ground_extent = parse_double(value, key);
    else if (key == "scene.ground_density") cfg.scene.ground_density = parse_double(value, key);
    else if (key == "scene.box_density") cfg.scene.box_density = parse_double(value, key);
    else if (key == "scene.ego_velocity") cfg.scene.ego_velocity = parse_double(value, key);
    else if (key == "scene.noise_sigma") cfg.scene.noise_sigma = parse_double(value, key);
    else if (key == "scene.frame_count") cfg.scene.frame_count = static_cast<int>(parse_i64(value, key));
    else if (key == "scene.frame_dt") cfg.scene.frame_dt = parse_double(value, key);
    else if (key == "scene.occlusion_frame") cfg.scene.occlusion_frame = static_cast<int>(parse_i64(value, key));
    else if (key == "scene.occlusion_start_deg") cfg.scene.occlusion_start_deg = parse_double(value, key);
    else if (key == "scene.occlusion_width_deg") cfg.scene.occlusion_width_deg = parse_double(value, key);
    else if (key == "scene.seed") cfg.scene.seed = parse_u64(value, key);
    else if (key == "scene.mover") cfg.scene.movers.push_back(detail::parse_mover(value));
    else if (key == "gen.stride") cfg.gen.stride = static_cast<int>(parse_i64(value, key));
    else if (key == "gen.label_fraction") cfg.gen.label_fraction = parse_double(value, key);
    else if (key == "gen.label_seed") cfg.gen.label_seed = parse_u64(value, key);
    else if (key == "gen.outlier_fraction") cfg.gen.outlier_fraction = parse_double(value, key);
    else if (key == "gen.outlier_magnitude") cfg.gen.outlier_magnitude = parse_double(value, key);
    else if (key == "gen.outlier_seed") cfg.gen.outlier_seed = parse_u64(value, key);
    else if (key == "seg.alpha_bg") cfg.seg.alpha_bg = parse_double(value, key);
    else if (key == "seg.epochs") cfg.seg.epochs = static_cast<int>(parse_i64(value, key));
    else if (key == "seg.lr") cfg.seg.learning_rate = parse_double(value, key);
    else if (key == "seg.seed") cfg.seg.seed = parse_u64(value, key);
    else if (key == "eval.static_thresh") cfg.eval_static_thresh = parse_double(value, key);
    else throw FormatError(origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");

    if (start > text.size()) break;
  }
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  return cfg;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
  return parse_config_text(read_file(path), path.filename().string());
}

inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  auto kv = [&out](std::string_view key, const std::string& value) {
    out += std::string(key) + "=" + value + "\n";
  };
  kv("eval.static_thresh", format_double(cfg.eval_static_thresh));
  kv("fit.adam_beta1", format_double(cfg.fit.adam_beta1));
  kv("fit.adam_beta2", format_double(cfg.fit.adam_beta2));
  kv("fit.mode", detail::mode_name(cfg.fit.mode));
  kv("fit.seed", format_u64(cfg.fit.seed));
  kv("fit.step_size", format_double(cfg.fit.step_size));
  kv("fit.steps", format_i64(cfg.fit.steps));
  kv("gen.label_fraction", format_double(cfg.gen.label_fraction));
  kv("gen.label_seed", format_u64(cfg.gen.label_seed));
  kv("gen.outlier_fraction", format_double(cfg.gen.outlier_fraction));
  kv("gen.outlier_magnitude", format_double(cfg.gen.outlier_magnitude));
  kv("gen.outlier_seed", format_u64(cfg.gen.outlier_seed));
  kv("gen.stride", format_i64(cfg.gen.stride));
  kv("grid.dx", format_double(cfg.grid.dx));
  kv("grid.dy", format_double(cfg.grid.dy));
  kv("grid.dz", format_double(cfg.grid.dz));
  kv("grid.x_max", format_double(cfg.grid.x_max));
  kv("grid.x_min", format_double(cfg.grid.x_min));
  kv("grid.y_max", format_double(cfg.grid.y_max));
  kv("grid.y_min", format_double(cfg.grid.y_min));
  kv("grid.z_max", format_double(cfg.grid.z_max));
  kv("grid.z_min", format_double(cfg.grid.z_min));
  kv("loss.beta1", format_double(cfg.fit.loss.beta1));
  kv("loss.beta2", format_double(cfg.fit.loss.beta2));
  kv("loss.omega_gate", format_i64(cfg.fit.loss.omega_gate));
  kv("loss.penalty", detail::penalty_name(cfg.fit.loss.penalty));
  kv("loss.phi_bg", format_double(cfg.fit.loss.phi_bg));
  kv("loss.phi_g", format_double(cfg.fit.loss.phi_g));
  kv("loss.smooth_k", format_i64(cfg.fit.loss.smooth_k));
  kv("loss.smooth_radius", format_double(cfg.fit.loss.smooth_radius));
  kv("loss.theta_sq", format_double(cfg.fit.loss.theta_sq));
  kv("loss.use_confidence", cfg.fit.loss.use_confidence ? "true" : "false");
  kv("loss.use_past_frame", cfg.fit.loss.use_past_frame ? "true" : "false");
  kv("loss.use_smoothness", cfg.fit.loss.use_smoothness ? "true" : "false");
  kv("ransac.d_thresh", format_double(cfg.ransac.d_thresh));
  kv("ransac.height_quantile", format_double(cfg.ransac.candidate_height_quantile));
  kv("ransac.iterations", format_i64(cfg.ransac.iterations));
  kv("ransac.max_tilt_deg", format_double(cfg.ransac.max_tilt_deg));
  kv("ransac.refit", cfg.ransac.refit ? "true" : "false");
  kv("ransac.seed", format_u64(cfg.ransac.rng_seed));
  kv("scene.box_density", format_double(cfg.scene.box_density));
  kv("scene.ego_velocity", format_double(cfg.scene.ego_velocity));
  kv("scene.frame_count", format_i64(cfg.scene.frame_count));
  kv("scene.frame_dt", format_double(cfg.scene.frame_dt));
  kv("scene.ground_density", format_double(cfg.scene.ground_density));
  kv("scene.ground_extent", format_double(cfg.scene.ground_extent));
  kv("scene.ground_height", format_double(cfg.scene.ground_height));
  for (const MoverSpec& m : cfg.scene.movers) kv("scene.mover", detail::format_mover(m));
  kv("scene.occlusion_frame", format_i64(cfg.scene.occlusion_frame));
  kv("scene.occlusion_start_deg", format_double(cfg.scene.occlusion_start_deg));
  kv("scene.occlusion_width_deg", format_double(cfg.scene.occlusion_width_deg));
  kv("scene.seed", format_u64(cfg.scene.seed));
  kv("seg.alpha_bg", format_double(cfg.seg.alpha_bg));
  kv("seg.epochs", format_i64(cfg.seg.epochs));
  kv("seg.lr", format_double(cfg.seg.learning_rate));
  kv("seg.seed", format_u64(cfg.seg.seed));
  return out;
}

inline std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(serialize_config(cfg)); }

// ---------------------------------------------------------------------------
// metrics records: line-delimited, stable key order

inline std::string format_metrics(const MotionMetrics& motion,
                                  const std::optional<SegMetrics>& seg) {
  std::string out;
  auto group = [&out](std::string_view name, const GroupStats& g) {
    out += "motion group=" + std::string(name) + " count=" + format_u64(g.count) +
           " mean=" + format_double(g.mean) + " median=" + format_double(g.median) + "\n";
  };
  group("static", motion.group_static);
  group("slow", motion.group_slow);
  group("fast", motion.group_fast);
  if (seg) {
    out += "seg bg_acc=" + format_double(seg->bg_accuracy) +
           " fg_acc=" + format_double(seg->fg_accuracy) +
           " overall_acc=" + format_double(seg->overall_accuracy) +
           " bg_count=" + format_u64(seg->bg_total) + " fg_count=" + format_u64(seg->fg_total) +
           " total=" + format_u64(seg->total()) + "\n";
  }
  return out;
}

struct MetricsRecord {
  MotionMetrics motion;
  std::optional<SegMetrics> seg;
};

inline MetricsRecord parse_metrics_text(std::string_view text, const std::string& origin) {
  MetricsRecord rec;
  std::size_t start = 0, line_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = detail::trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto tokens = detail::split_ws(line);
    auto field = [&](std::string_view token, std::string_view key) -> std::string_view {
      if (token.substr(0, key.size()) != key || token.size() <= key.size() ||
          token[key.size()] != '=')
        throw FormatError(origin + ":" + std::to_string(line_no) + ": expected " +
                          std::string(key) + "=...");
      return token.substr(key.size() + 1);
    };
    if (tokens[0] == "motion") {
      if (tokens.size() != 5)
        throw FormatError(origin + ":" + std::to_string(line_no) + ": malformed motion record");
      GroupStats g;
      const std::string_view name = field(tokens[1], "group");
      g.count = parse_u64(field(tokens[2], "count"), "count");
      g.mean = parse_double(field(tokens[3], "mean"), "mean");
      g.median = parse_double(field(tokens[4], "median"), "median");
      if (name == "static") rec.motion.group_static = g;
      else if (name == "slow") rec.motion.group_slow = g;
      else if (name == "fast") rec.motion.group_fast = g;
      else throw FormatError(origin + ":" + std::to_string(line_no) + ": unknown group");
    } else if (tokens[0] == "seg") {
      if (tokens.size() != 7)
        throw FormatError(origin + ":" + std::to_string(line_no) + ": malformed seg record");
      SegMetrics s;
      s.bg_accuracy = parse_double(field(tokens[1], "bg_acc"), "bg_acc");
      s.fg_accuracy = parse_double(field(tokens[2], "fg_acc"), "fg_acc");
      s.overall_accuracy = parse_double(field(tokens[3], "overall_acc"), "overall_acc");
      s.bg_total = parse_u64(field(tokens[4], "bg_count"), "bg_count");
      s.fg_total = parse_u64(field(tokens[5], "fg_count"), "fg_count");
      rec.seg = s;
    } else {
      throw FormatError(origin + ":" + std::to_string(line_no) + ": unknown record '" +
                        std::string(tokens[0]) + "'");
    }
  }
  return rec;
}

inline void write_metrics(const MotionMetrics& motion, const std::optional<SegMetrics>& seg,
                          const std::filesystem::path& path) {
  write_file(path, format_metrics(motion, seg));
}

inline MetricsRecord read_metrics(const std::filesystem::path& path) {
  return parse_metrics_text(read_file(path), path.filename().string());
}

// ---------------------------------------------------------------------------
// fit trace: "<step> <loss>" per line (wall-clock stays out of files so runs
// with identical inputs are byte-identical)

inline std::string format_trace(const FitTrace& trace) {
  std::string out;
  for (std::size_t i = 0; i < trace.loss_values.size(); ++i)
    out += format_u64(i) + " " + format_double(trace.loss_values[i]) + "\n";
  return out;
}

inline void write_trace(const FitTrace& trace, const std::filesystem::path& path) {
  write_file(path, format_trace(trace));
}

inline std::vector<double> read_trace(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<double> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = detail::trim(std::string_view(text).substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    const auto tokens = detail::split_ws(line);
    if (tokens.size() != 2)
      throw FormatError(path.filename().string() + ": malformed trace line");
    out.push_back(parse_double(tokens[1], "loss"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// run manifest: JSON with the command, config hash, seeds, and input digests.
// Everything in it is deterministic for fixed inputs.

inline void write_manifest(const std::filesystem::path& path, const std::string& command,
                           const RunConfig& cfg,
                           const std::vector<std::filesystem::path>& inputs,
                           const std::vector<std::filesystem::path>& outputs) {
  nlohmann::json j;
  j["command"] = command;
  j["version"] = std::string(kVersion);
  j["config_hash"] = hex64(config_hash(cfg));
  j["seeds"] = {{"fit", cfg.fit.seed},
                {"ransac", cfg.ransac.rng_seed},
                {"scene", cfg.scene.seed},
                {"seg", cfg.seg.seed}};
  nlohmann::json ins = nlohmann::json::array();
  for (const auto& p : inputs) {
    const std::string bytes = read_file(p);
    ins.push_back({{"path", p.generic_string()},
                   {"bytes", bytes.size()},
                   {"fnv1a64", hex64(fnv1a64(bytes))}});
  }
  j["inputs"] = ins;
  nlohmann::json outs = nlohmann::json::array();
  for (const auto& p : outputs) outs.push_back(p.generic_string());
  j["outputs"] = outs;
  write_file(path, j.dump(2) + "\n");
}

}  // namespace bevmotion::io
