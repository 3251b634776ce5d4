#include "dynpose/io.h"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

#include "dynpose/error.h"

namespace dynpose {
namespace {

using nlohmann::json;

[[noreturn]] void SchemaError(const std::string& source, std::size_t line,
                              const std::string& what) {
  throw ParseError(source, ParseError::Unit::kLine, line, what);
}

std::vector<std::string_view> SplitLines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> SplitWhitespace(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::optional<double> ToDouble(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::int64_t> ToInt(std::string_view s) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string Printf9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// nlohmann counts bytes read, so the offending byte sits one earlier; an
// unexpected end of input maps to the input size.
std::size_t JsonErrorOffset(const json::parse_error& e, std::size_t size) {
  return std::min(e.byte == 0 ? 0 : e.byte - 1, size);
}

json ParseJsonLine(std::string_view line, const std::string& source, std::size_t line_no) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    SchemaError(source, line_no, std::string("invalid JSON: ") + e.what());
  }
}

// Typed field access for one JSON object, reporting errors at a fixed line.
class Fields {
 public:
  Fields(const json& obj, std::string source, std::size_t line, std::string path = "")
      : obj_(obj), source_(std::move(source)), line_(line), path_(std::move(path)) {
    if (!obj_.is_object()) Fail("expected a JSON object");
  }

  [[noreturn]] void Fail(const std::string& what) const {
    SchemaError(source_, line_, (path_.empty() ? "" : path_ + ": ") + what);
  }

  bool Has(const char* key) const {
    auto it = obj_.find(key);
    return it != obj_.end() && !it->is_null();
  }

  const json& Raw(const char* key) const {
    seen_.push_back(key);
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) Fail(std::string("missing field '") + key + "'");
    return *it;
  }

  double Number(const char* key) const {
    const json& v = Raw(key);
    if (!v.is_number()) Fail(std::string("field '") + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) Fail(std::string("field '") + key + "' must be finite");
    return d;
  }

  std::int64_t Integer(const char* key) const {
    const json& v = Raw(key);
    if (!v.is_number_integer()) Fail(std::string("field '") + key + "' must be an integer");
    return v.get<std::int64_t>();
  }

  bool Bool(const char* key) const {
    const json& v = Raw(key);
    if (!v.is_boolean()) Fail(std::string("field '") + key + "' must be true or false");
    return v.get<bool>();
  }

  std::string String(const char* key) const {
    const json& v = Raw(key);
    if (!v.is_string()) Fail(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
  }

  std::vector<double> Numbers(const char* key) const {
    const json& v = Raw(key);
    if (!v.is_array()) Fail(std::string("field '") + key + "' must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) {
      if (!e.is_number()) Fail(std::string("field '") + key + "' must hold numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  template <typename T>
  void Maybe(const char* key, T& out) const {
    if (!Has(key)) {
      seen_.push_back(key);
      return;
    }
    if constexpr (std::is_same_v<T, bool>) {
      out = Bool(key);
    } else if constexpr (std::is_integral_v<T>) {
      const std::int64_t v = Integer(key);
      out = static_cast<T>(v);
    } else {
      out = Number(key);
    }
  }

  Fields Object(const char* key) const {
    return Fields(Raw(key), source_, line_, path_.empty() ? key : path_ + "." + key);
  }

  void RejectUnknown() const {
    for (const auto& [key, value] : obj_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        Fail("unknown field '" + key + "'");
      }
    }
  }

 private:
  const json& obj_;
  std::string source_;
  std::size_t line_;
  std::string path_;
  mutable std::vector<std::string> seen_;
};

void Require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, "config: " + what);
}

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t GetU32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return v;
}

struct PgmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

PgmHeader ParsePgmHeader(const std::string& bytes, const std::string& source) {
  auto fail = [&](std::size_t offset, const std::string& what) -> void {
    throw ParseError(source, ParseError::Unit::kByteOffset, offset, what);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') fail(0, "not a binary PGM (P5)");
  std::size_t pos = 2;
  auto next_int = [&]() -> long {
    // Skip whitespace and comments.
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos == start) fail(start, "expected an integer in the PGM header");
    if (pos - start > 9) fail(start, "PGM header value too large");
    return std::stol(bytes.substr(start, pos - start));
  };
  PgmHeader h;
  h.width = static_cast<int>(next_int());
  h.height = static_cast<int>(next_int());
  h.maxval = static_cast<int>(next_int());
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    fail(pos, "expected whitespace after the PGM header");
  }
  h.data_offset = pos + 1;
  if (h.width < 1 || h.height < 1) fail(2, "PGM dimensions must be positive");
  if (h.maxval < 1 || h.maxval > 65535) fail(2, "PGM maxval out of range");
  return h;
}

json SignalsToJson(const FilterSignals& s) {
  json j;
  j["video"] = s.video;
  j["signal_fps"] = s.signal_fps;
  auto opt = [&](const char* key, const auto& v) {
    if (v) j[key] = *v;
  };
  opt("flow_seq", s.flow_seq);
  opt("focal_seq", s.focal_seq);
  opt("distortion_alpha", s.distortion_alpha);
  opt("classifier_acceptable", s.classifier_acceptable);
  opt("classifier_interaction", s.classifier_interaction);
  opt("mask_fraction_seq", s.mask_fraction_seq);
  opt("track_loss_seq", s.track_loss_seq);
  opt("track_median_move", s.track_median_move);
  opt("track_window_median_move", s.track_window_median_move);
  if (s.vlm_answers) {
    j["vlm_answers"] = std::vector<bool>(s.vlm_answers->begin(), s.vlm_answers->end());
  }
  opt("label", s.label);
  return j;
}

}  // namespace

// ---- Files ----------------------------------------------------------------

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorCode::kInvalidArgument, "failed writing " + path.string());
}

std::string FormatNumber(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

// ---- Configuration --------------------------------------------------------

void PipelineConfig::Validate() const {
  Require(fps > 0, "fps must be positive");
  Require(tracking.grid_rows > 0 && tracking.grid_cols > 0, "tracking grid must be positive");
  Require(tracking.stride_seconds > 0 && tracking.length_seconds > 0,
          "tracking stride/length must be positive");
  Require(masking.cadence.keyframe_stride > 0 && masking.cadence.propagation > 0,
          "mask cadence must be positive");
  Require(masking.motion.grid_step > 0, "motion grid step must be positive");
  Require(masking.motion.inlier_threshold_px > 0, "motion inlier threshold must be positive");
  Require(!masking.motion.threshold || *masking.motion.threshold > 0,
          "motion threshold must be positive");
  Require(masking.motion.ransac.max_iterations > 0, "RANSAC iterations must be positive");
  Require(masking.motion.ransac.confidence > 0 && masking.motion.ransac.confidence < 1,
          "RANSAC confidence must be in (0, 1)");
  Require(masking.motion.ransac.min_inlier_ratio > 0 &&
              masking.motion.ransac.min_inlier_ratio <= 1,
          "RANSAC inlier ratio must be in (0, 1]");
  const FilterThresholds& f = filter;
  for (double v : {f.classifier_acceptable_min, f.classifier_interaction_min,
                   f.distortion_alpha_max, f.focal_spread_max_ratio,
                   f.focal_window_change_max, f.focal_p80_max, f.mask_p90_max,
                   f.flow_mean_min, f.flow_spike_sigmas, f.flow_window_mean_max,
                   f.track_loss_max, f.track_move_min, f.window_seconds,
                   f.sigmoid_slope, f.final_threshold}) {
    Require(v > 0, "filter thresholds must be positive");
  }
  for (double v : f.stage_thresholds) Require(v >= 0, "stage thresholds must be >= 0");
  Require(sfm.min_matches >= 8, "sfm.min_matches must be >= 8");
  Require(sfm.ransac_threshold_px > 0 && sfm.ransac_max_iterations > 0,
          "sfm RANSAC settings must be positive");
  Require(sfm.ransac_confidence > 0 && sfm.ransac_confidence < 1,
          "sfm RANSAC confidence must be in (0, 1)");
  Require(sfm.pure_rotation_ratio > 0 && sfm.huber_delta_px > 0 &&
              sfm.max_triangulation_error_px > 0 && sfm.min_triangulation_angle_deg > 0,
          "sfm thresholds must be positive");
  Require(sfm.max_ba_iterations > 0 && sfm.max_attempts > 0,
          "sfm iteration counts must be positive");
  Require(sfm.min_registered_fraction > 0 && sfm.min_registered_fraction <= 1,
          "sfm.min_registered_fraction must be in (0, 1]");
  Require(!eval.sampson_thresholds.empty(), "eval.sampson_thresholds must not be empty");
  for (double v : eval.sampson_thresholds) Require(v > 0, "Sampson thresholds must be positive");
  Require(eval.reprojection_threshold > 0, "eval.reprojection_threshold must be positive");
}

std::string FormatPipelineConfig(const PipelineConfig& c) {
  json j;
  j["fps"] = c.fps;
  j["tracking"] = {{"grid_rows", c.tracking.grid_rows},
                   {"grid_cols", c.tracking.grid_cols},
                   {"stride_seconds", c.tracking.stride_seconds},
                   {"length_seconds", c.tracking.length_seconds}};
  json masking = {{"keyframe_stride", c.masking.cadence.keyframe_stride},
                  {"propagation", c.masking.cadence.propagation},
                  {"grid_step", c.masking.motion.grid_step},
                  {"inlier_threshold_px", c.masking.motion.inlier_threshold_px},
                  {"ransac_max_iterations", c.masking.motion.ransac.max_iterations},
                  {"ransac_confidence", c.masking.motion.ransac.confidence},
                  {"ransac_min_inlier_ratio", c.masking.motion.ransac.min_inlier_ratio}};
  if (c.masking.motion.threshold) masking["motion_threshold"] = *c.masking.motion.threshold;
  j["masking"] = masking;
  const FilterThresholds& f = c.filter;
  j["filter"] = {{"classifier_acceptable_min", f.classifier_acceptable_min},
                 {"classifier_interaction_min", f.classifier_interaction_min},
                 {"distortion_alpha_max", f.distortion_alpha_max},
                 {"focal_spread_max_ratio", f.focal_spread_max_ratio},
                 {"focal_window_change_max", f.focal_window_change_max},
                 {"focal_p80_max", f.focal_p80_max},
                 {"mask_p90_max", f.mask_p90_max},
                 {"flow_mean_min", f.flow_mean_min},
                 {"flow_spike_sigmas", f.flow_spike_sigmas},
                 {"flow_window_mean_max", f.flow_window_mean_max},
                 {"track_loss_max", f.track_loss_max},
                 {"track_move_min", f.track_move_min},
                 {"window_seconds", f.window_seconds},
                 {"sigmoid_slope", f.sigmoid_slope},
                 {"final_threshold", f.final_threshold},
                 {"stage_thresholds", f.stage_thresholds}};
  const SfmConfig& s = c.sfm;
  j["sfm"] = {{"min_matches", s.min_matches},
              {"ransac_threshold_px", s.ransac_threshold_px},
              {"ransac_max_iterations", s.ransac_max_iterations},
              {"ransac_confidence", s.ransac_confidence},
              {"pure_rotation_ratio", s.pure_rotation_ratio},
              {"huber_delta_px", s.huber_delta_px},
              {"max_triangulation_error_px", s.max_triangulation_error_px},
              {"min_triangulation_angle_deg", s.min_triangulation_angle_deg},
              {"refine_focal", s.refine_focal},
              {"max_ba_iterations", s.max_ba_iterations},
              {"min_registered_fraction", s.min_registered_fraction},
              {"max_attempts", s.max_attempts},
              {"deduplicate_correspondences", s.deduplicate_correspondences}};
  j["eval"] = {{"sampson_thresholds", c.eval.sampson_thresholds},
               {"reprojection_threshold", c.eval.reprojection_threshold},
               {"rpe_reuses_alignment", c.eval.rpe_reuses_alignment}};
  return j.dump(2) + "\n";
}

PipelineConfig ParsePipelineConfig(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source, ParseError::Unit::kByteOffset, JsonErrorOffset(e, text.size()),
                     std::string("invalid JSON: ") + e.what());
  }
  PipelineConfig c;
  // Single-document JSON: schema errors name the key path, reported at line 1.
  const Fields root(j, source, 1);
  root.Maybe("fps", c.fps);
  if (root.Has("tracking")) {
    const Fields t = root.Object("tracking");
    t.Maybe("grid_rows", c.tracking.grid_rows);
    t.Maybe("grid_cols", c.tracking.grid_cols);
    t.Maybe("stride_seconds", c.tracking.stride_seconds);
    t.Maybe("length_seconds", c.tracking.length_seconds);
    t.RejectUnknown();
  }
  if (root.Has("masking")) {
    const Fields m = root.Object("masking");
    m.Maybe("keyframe_stride", c.masking.cadence.keyframe_stride);
    m.Maybe("propagation", c.masking.cadence.propagation);
    m.Maybe("grid_step", c.masking.motion.grid_step);
    m.Maybe("inlier_threshold_px", c.masking.motion.inlier_threshold_px);
    m.Maybe("ransac_max_iterations", c.masking.motion.ransac.max_iterations);
    m.Maybe("ransac_confidence", c.masking.motion.ransac.confidence);
    m.Maybe("ransac_min_inlier_ratio", c.masking.motion.ransac.min_inlier_ratio);
    if (m.Has("motion_threshold")) c.masking.motion.threshold = m.Number("motion_threshold");
    m.RejectUnknown();
  }
  if (root.Has("filter")) {
    const Fields f = root.Object("filter");
    FilterThresholds& t = c.filter;
    f.Maybe("classifier_acceptable_min", t.classifier_acceptable_min);
    f.Maybe("classifier_interaction_min", t.classifier_interaction_min);
    f.Maybe("distortion_alpha_max", t.distortion_alpha_max);
    f.Maybe("focal_spread_max_ratio", t.focal_spread_max_ratio);
    f.Maybe("focal_window_change_max", t.focal_window_change_max);
    f.Maybe("focal_p80_max", t.focal_p80_max);
    f.Maybe("mask_p90_max", t.mask_p90_max);
    f.Maybe("flow_mean_min", t.flow_mean_min);
    f.Maybe("flow_spike_sigmas", t.flow_spike_sigmas);
    f.Maybe("flow_window_mean_max", t.flow_window_mean_max);
    f.Maybe("track_loss_max", t.track_loss_max);
    f.Maybe("track_move_min", t.track_move_min);
    f.Maybe("window_seconds", t.window_seconds);
    f.Maybe("sigmoid_slope", t.sigmoid_slope);
    f.Maybe("final_threshold", t.final_threshold);
    if (f.Has("stage_thresholds")) {
      const auto v = f.Numbers("stage_thresholds");
      if (v.size() != t.stage_thresholds.size()) {
        f.Fail("stage_thresholds needs " + std::to_string(t.stage_thresholds.size()) +
               " values");
      }
      std::copy(v.begin(), v.end(), t.stage_thresholds.begin());
    }
    f.RejectUnknown();
  }
  if (root.Has("sfm")) {
    const Fields s = root.Object("sfm");
    SfmConfig& t = c.sfm;
    s.Maybe("min_matches", t.min_matches);
    s.Maybe("ransac_threshold_px", t.ransac_threshold_px);
    s.Maybe("ransac_max_iterations", t.ransac_max_iterations);
    s.Maybe("ransac_confidence", t.ransac_confidence);
    s.Maybe("pure_rotation_ratio", t.pure_rotation_ratio);
    s.Maybe("huber_delta_px", t.huber_delta_px);
    s.Maybe("max_triangulation_error_px", t.max_triangulation_error_px);
    s.Maybe("min_triangulation_angle_deg", t.min_triangulation_angle_deg);
    s.Maybe("refine_focal", t.refine_focal);
    s.Maybe("max_ba_iterations", t.max_ba_iterations);
    s.Maybe("min_registered_fraction", t.min_registered_fraction);
    s.Maybe("max_attempts", t.max_attempts);
    s.Maybe("deduplicate_correspondences", t.deduplicate_correspondences);
    s.RejectUnknown();
  }
  if (root.Has("eval")) {
    const Fields e = root.Object("eval");
    if (e.Has("sampson_thresholds")) c.eval.sampson_thresholds = e.Numbers("sampson_thresholds");
    e.Maybe("reprojection_threshold", c.eval.reprojection_threshold);
    e.Maybe("rpe_reuses_alignment", c.eval.rpe_reuses_alignment);
    e.RejectUnknown();
  }
  root.RejectUnknown();
  c.sfm.fps = c.fps;
  c.Validate();
  return c;
}

PipelineConfig LoadPipelineConfig(const std::filesystem::path& path) {
  return ParsePipelineConfig(ReadFile(path), path.string());
}

// ---- Trajectory -----------------------------------------------------------

std::string FormatTrajectory(const TrajectoryFile& file) {
  const Trajectory& t = file.trajectory;
  std::string out = "# dynpose trajectory\n";
  out += "# fps: " + Printf9(t.fps()) + "\n";
  out += "# num_frames: " + std::to_string(t.size()) + "\n";
  if (!t.frames().empty()) {
    out += "# first_frame: " + std::to_string(t.frames().front().index) + "\n";
  }
  if (file.intrinsics) {
    const auto& k = *file.intrinsics;
    out += "# intrinsics: " + Printf9(k.fx) + " " + Printf9(k.fy) + " " + Printf9(k.cx) +
           " " + Printf9(k.cy) + " " + Printf9(k.width) + " " + Printf9(k.height) + "\n";
  }
  if (file.mean_reprojection_error) {
    out += "# mean_reprojection_error: " + Printf9(*file.mean_reprojection_error) + "\n";
  }
  out += "# registered_fraction: " +
         Printf9(t.size() == 0 ? 0.0 : t.RegisteredFraction()) + "\n";
  out += "# frame tx ty tz qx qy qz qw\n";
  for (const auto& f : t.frames()) {
    if (!f.pose) continue;
    const auto& q = f.pose->rotation();
    const auto& tr = f.pose->translation();
    out += std::to_string(f.index);
    for (double v : {tr.x(), tr.y(), tr.z(), q.x(), q.y(), q.z(), q.w()}) {
      out += ' ';
      out += Printf9(v);
    }
    out += '\n';
  }
  return out;
}

TrajectoryFile ParseTrajectory(const std::string& text, const std::string& source) {
  TrajectoryFile file;
  double fps = 12.0;
  std::optional<std::int64_t> num_frames;
  std::int64_t first_frame = 0;
  std::vector<std::pair<std::int64_t, Pose>> poses;
  const auto lines = SplitLines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    const std::string_view line = Trim(lines[n]);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string_view body = Trim(line.substr(1));
      const std::size_t colon = body.find(':');
      if (colon == std::string_view::npos) continue;
      const std::string_view key = Trim(body.substr(0, colon));
      const auto values = SplitWhitespace(body.substr(colon + 1));
      auto number = [&](std::string_view s) {
        auto v = ToDouble(s);
        if (!v || !std::isfinite(*v)) {
          SchemaError(source, line_no, "bad value for '" + std::string(key) + "'");
        }
        return *v;
      };
      auto integer = [&](std::string_view s) {
        auto v = ToInt(s);
        if (!v || *v < 0) SchemaError(source, line_no, "bad value for '" + std::string(key) + "'");
        return *v;
      };
      if (key == "fps" || key == "mean_reprojection_error" || key == "num_frames" ||
          key == "first_frame" || key == "registered_fraction") {
        if (values.size() != 1) SchemaError(source, line_no, "expected one value");
      }
      if (key == "fps") {
        fps = number(values[0]);
      } else if (key == "num_frames") {
        num_frames = integer(values[0]);
      } else if (key == "first_frame") {
        first_frame = integer(values[0]);
      } else if (key == "mean_reprojection_error") {
        file.mean_reprojection_error = number(values[0]);
      } else if (key == "intrinsics") {
        if (values.size() != 6) SchemaError(source, line_no, "intrinsics need 6 values");
        file.intrinsics = CameraIntrinsics{number(values[0]), number(values[1]),
                                           number(values[2]), number(values[3]),
                                           number(values[4]), number(values[5])};
      }
      continue;
    }
    const auto fields = SplitWhitespace(line);
    if (fields.size() != 8) {
      SchemaError(source, line_no,
                  "expected 8 fields, found " + std::to_string(fields.size()));
    }
    const auto index = ToInt(fields[0]);
    if (!index || *index < 0) SchemaError(source, line_no, "bad frame index");
    double v[7];
    for (int i = 0; i < 7; ++i) {
      auto d = ToDouble(fields[static_cast<std::size_t>(i + 1)]);
      if (!d || !std::isfinite(*d)) {
        SchemaError(source, line_no, "bad number in column " + std::to_string(i + 2));
      }
      v[i] = *d;
    }
    const Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
    if (std::abs(q.norm() - 1.0) > 1e-6) SchemaError(source, line_no, "quaternion is not unit");
    if (!poses.empty() && *index <= poses.back().first) {
      SchemaError(source, line_no, "frame indices must increase");
    }
    poses.emplace_back(*index, Pose(q, Vector3d(v[0], v[1], v[2])));
  }

  file.trajectory = Trajectory(fps);
  if (num_frames) {
    std::size_t next = 0;
    for (std::int64_t f = first_frame; f < first_frame + *num_frames; ++f) {
      if (next < poses.size() && poses[next].first == f) {
        file.trajectory.Append(f, poses[next++].second);
      } else {
        file.trajectory.Append(f, std::nullopt);
      }
    }
    if (next != poses.size()) {
      throw ParseError(source, ParseError::Unit::kLine, 1,
                       "frame " + std::to_string(poses[next].first) +
                           " lies outside the declared frame range");
    }
  } else {
    for (auto& [index, pose] : poses) file.trajectory.Append(index, pose);
  }
  return file;
}

void SaveTrajectory(const std::filesystem::path& path, const TrajectoryFile& file) {
  WriteFile(path, FormatTrajectory(file));
}

TrajectoryFile LoadTrajectory(const std::filesystem::path& path) {
  return ParseTrajectory(ReadFile(path), path.string());
}

// ---- Tracklets ------------------------------------------------------------

std::string FormatTracklets(const std::vector<Tracklet>& tracklets) {
  std::string out;
  for (const auto& t : tracklets) {
    json j;
    j["id"] = t.id;
    j["start_frame"] = t.start_frame;
    json points = json::array();
    for (const auto& p : t.points) points.push_back({p.x(), p.y()});
    j["points"] = std::move(points);
    json visible = json::array();
    for (bool v : t.visible) visible.push_back(v ? 1 : 0);
    j["visible"] = std::move(visible);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<Tracklet> ParseTracklets(const std::string& text, const std::string& source) {
  std::vector<Tracklet> out;
  const auto lines = SplitLines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (Trim(lines[n]).empty()) continue;
    const std::size_t line_no = n + 1;
    const json j = ParseJsonLine(lines[n], source, line_no);
    const Fields f(j, source, line_no);
    Tracklet t;
    t.id = f.Integer("id");
    t.start_frame = f.Integer("start_frame");
    if (t.start_frame < 0) f.Fail("start_frame must be >= 0");
    const json& points = f.Raw("points");
    const json& visible = f.Raw("visible");
    if (!points.is_array() || !visible.is_array()) f.Fail("points and visible must be arrays");
    if (points.empty()) f.Fail("a tracklet needs at least one point");
    if (points.size() != visible.size()) f.Fail("points and visible differ in length");
    for (const auto& p : points) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        f.Fail("each point must be [x, y]");
      }
      t.points.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    for (const auto& v : visible) {
      if (v.is_boolean()) {
        t.visible.push_back(v.get<bool>());
      } else if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) {
        t.visible.push_back(v.get<int>() == 1);
      } else {
        f.Fail("visible entries must be 0 or 1");
      }
    }
    f.RejectUnknown();
    out.push_back(std::move(t));
  }
  return out;
}

void SaveTracklets(const std::filesystem::path& path, const std::vector<Tracklet>& tracklets) {
  WriteFile(path, FormatTracklets(tracklets));
}

std::vector<Tracklet> LoadTracklets(const std::filesystem::path& path) {
  return ParseTracklets(ReadFile(path), path.string());
}

// ---- Masks ----------------------------------------------------------------

std::string EncodeMaskPgm(const DynamicMask& mask) {
  std::string out = "P5\n" + std::to_string(mask.width()) + " " +
                    std::to_string(mask.height()) + "\n255\n";
  out.reserve(out.size() + mask.bits().size());
  for (std::uint8_t b : mask.bits()) out.push_back(b ? static_cast<char>(255) : '\0');
  return out;
}

DynamicMask DecodeMaskPgm(const std::string& bytes, std::int64_t frame_index,
                          const std::string& source,
                          std::optional<std::pair<int, int>> expected_size) {
  const PgmHeader h = ParsePgmHeader(bytes, source);
  if (h.maxval > 255) {
    throw ParseError(source, ParseError::Unit::kByteOffset, 2, "mask PGM must be 8-bit");
  }
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() < h.data_offset + need) {
    throw ParseError(source, ParseError::Unit::kByteOffset, bytes.size(),
                     "truncated pixel data: expected " + std::to_string(need) + " bytes");
  }
  if (bytes.size() > h.data_offset + need) {
    throw ParseError(source, ParseError::Unit::kByteOffset, h.data_offset + need,
                     "unexpected trailing bytes");
  }
  if (expected_size && (expected_size->first != h.width || expected_size->second != h.height)) {
    throw Error(ErrorCode::kDimensionMismatch,
                source + ": mask is " + std::to_string(h.width) + "x" +
                    std::to_string(h.height) + ", expected " +
                    std::to_string(expected_size->first) + "x" +
                    std::to_string(expected_size->second));
  }
  DynamicMask mask(frame_index, h.width, h.height);
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      if (bytes[h.data_offset + static_cast<std::size_t>(y) * h.width + x] != 0) {
        mask.set(x, y, true);
      }
    }
  }
  return mask;
}

std::string MaskFileName(std::int64_t frame_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "mask_%06lld.pgm", static_cast<long long>(frame_index));
  return buf;
}

void SaveMask(const std::filesystem::path& path, const DynamicMask& mask) {
  WriteFile(path, EncodeMaskPgm(mask));
}

DynamicMask LoadMask(const std::filesystem::path& path, std::int64_t frame_index,
                     std::optional<std::pair<int, int>> expected_size) {
  return DecodeMaskPgm(ReadFile(path), frame_index, path.string(), expected_size);
}

std::map<std::int64_t, DynamicMask> LoadMaskDirectory(
    const std::filesystem::path& dir, std::optional<std::pair<int, int>> expected_size) {
  static const std::regex kName(R"(mask_(\d+)\.pgm)");
  std::map<std::int64_t, DynamicMask> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, kName)) continue;
    const std::int64_t frame = std::stoll(m[1].str());
    DynamicMask mask = LoadMask(entry.path(), frame, expected_size);
    if (!expected_size) expected_size = std::make_pair(mask.width(), mask.height());
    out.emplace(frame, std::move(mask));
  }
  return out;
}

std::string EncodeLabelPgm(const LabelMap& labels) {
  std::string out = "P5\n" + std::to_string(labels.width) + " " +
                    std::to_string(labels.height) + "\n65535\n";
  for (std::uint16_t v : labels.labels) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

LabelMap DecodeLabelPgm(const std::string& bytes, const std::string& source) {
  const PgmHeader h = ParsePgmHeader(bytes, source);
  const std::size_t bpp = h.maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() < h.data_offset + bpp * count) {
    throw ParseError(source, ParseError::Unit::kByteOffset, bytes.size(),
                     "truncated pixel data: expected " + std::to_string(bpp * count) + " bytes");
  }
  if (bytes.size() > h.data_offset + bpp * count) {
    throw ParseError(source, ParseError::Unit::kByteOffset, h.data_offset + bpp * count,
                     "unexpected trailing bytes");
  }
  LabelMap out;
  out.width = h.width;
  out.height = h.height;
  out.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset + bpp * i);
    out.labels[i] = bpp == 2 ? static_cast<std::uint16_t>((p[0] << 8) | p[1]) : p[0];
  }
  return out;
}

// ---- Flow -----------------------------------------------------------------

std::string EncodeFlow(const FlowField& flow) {
  if (flow.uv.size() != 2u * flow.width * flow.height) {
    throw Error(ErrorCode::kDimensionMismatch, "flow buffer does not match its dimensions");
  }
  std::string out = "DPFL";
  PutU32(out, static_cast<std::uint32_t>(flow.width));
  PutU32(out, static_cast<std::uint32_t>(flow.height));
  out.reserve(out.size() + 4 * flow.uv.size());
  for (float f : flow.uv) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    PutU32(out, bits);
  }
  return out;
}

FlowField DecodeFlow(const std::string& bytes, const std::string& source) {
  auto fail = [&](std::size_t offset, const std::string& what) {
    throw ParseError(source, ParseError::Unit::kByteOffset, offset, what);
  };
  if (bytes.size() < 4 || bytes.compare(0, 4, "DPFL") != 0) {
    fail(0, "missing DPFL magic");
  }
  if (bytes.size() < 12) fail(bytes.size(), "truncated header");
  const std::uint32_t w = GetU32(bytes, 4);
  const std::uint32_t h = GetU32(bytes, 8);
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) fail(4, "implausible flow dimensions");
  const std::size_t payload = 8ull * w * h;
  if (bytes.size() < 12 + payload) {
    fail(bytes.size(), "truncated flow data: expected " + std::to_string(12 + payload) +
                           " bytes, file ends");
  }
  if (bytes.size() > 12 + payload) fail(12 + payload, "unexpected trailing bytes");
  FlowField flow(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < flow.uv.size(); ++i) {
    const std::uint32_t bits = GetU32(bytes, 12 + 4 * i);
    std::memcpy(&flow.uv[i], &bits, 4);
  }
  return flow;
}

void SaveFlow(const std::filesystem::path& path, const FlowField& flow) {
  WriteFile(path, EncodeFlow(flow));
}

FlowField LoadFlow(const std::filesystem::path& path) {
  return DecodeFlow(ReadFile(path), path.string());
}

// ---- Filter signals -------------------------------------------------------

std::string FormatFilterSignals(const FilterSignals& signals) {
  return SignalsToJson(signals).dump(2) + "\n";
}

FilterSignals ParseFilterSignals(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source, ParseError::Unit::kByteOffset, JsonErrorOffset(e, text.size()),
                     std::string("invalid JSON: ") + e.what());
  }
  const Fields f(j, source, 1);
  FilterSignals s;
  s.video = f.String("video");
  f.Maybe("signal_fps", s.signal_fps);
  if (!(s.signal_fps > 0)) f.Fail("signal_fps must be positive");
  auto seq = [&](const char* key, std::optional<std::vector<double>>& out) {
    if (f.Has(key)) out = f.Numbers(key);
  };
  auto num = [&](const char* key, std::optional<double>& out) {
    if (f.Has(key)) out = f.Number(key);
  };
  seq("flow_seq", s.flow_seq);
  seq("focal_seq", s.focal_seq);
  num("distortion_alpha", s.distortion_alpha);
  num("classifier_acceptable", s.classifier_acceptable);
  num("classifier_interaction", s.classifier_interaction);
  seq("mask_fraction_seq", s.mask_fraction_seq);
  seq("track_loss_seq", s.track_loss_seq);
  num("track_median_move", s.track_median_move);
  num("track_window_median_move", s.track_window_median_move);
  if (f.Has("vlm_answers")) {
    const json& v = f.Raw("vlm_answers");
    if (!v.is_array() || v.size() != 8) f.Fail("vlm_answers must hold 8 booleans");
    std::array<bool, 8> answers{};
    for (std::size_t i = 0; i < 8; ++i) {
      if (!v[i].is_boolean()) f.Fail("vlm_answers must hold 8 booleans");
      answers[i] = v[i].get<bool>();
    }
    s.vlm_answers = answers;
  }
  if (f.Has("label")) s.label = f.Bool("label");
  f.RejectUnknown();
  return s;
}

// ---- Annotated pairs ------------------------------------------------------

std::string FormatAnnotatedPairs(const std::vector<AnnotatedPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    json j = {{"video", p.video},         {"frame_a", p.frame_a},
              {"frame_b", p.frame_b},     {"xa", p.point_a.x()},
              {"ya", p.point_a.y()},      {"xb", p.point_b.x()},
              {"yb", p.point_b.y()}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<AnnotatedPair> ParseAnnotatedPairs(const std::string& text,
                                               const std::string& source) {
  std::vector<AnnotatedPair> out;
  const auto lines = SplitLines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (Trim(lines[n]).empty()) continue;
    const std::size_t line_no = n + 1;
    const json j = ParseJsonLine(lines[n], source, line_no);
    const Fields f(j, source, line_no);
    AnnotatedPair p;
    p.video = f.String("video");
    p.frame_a = f.Integer("frame_a");
    p.frame_b = f.Integer("frame_b");
    p.point_a = Vector2d(f.Number("xa"), f.Number("ya"));
    p.point_b = Vector2d(f.Number("xb"), f.Number("yb"));
    f.RejectUnknown();
    out.push_back(std::move(p));
  }
  return out;
}

// ---- Correspondences ------------------------------------------------------

std::string FormatCorrespondences(const CorrespondenceSet& set) {
  std::string out;
  for (const auto& [key, matches] : set.pairs) {
    json m = json::array();
    for (const auto& c : matches) {
      m.push_back({c.a.x(), c.a.y(), c.b.x(), c.b.y(), c.tracklet_id});
    }
    json j = {{"i", key.first}, {"j", key.second}, {"matches", std::move(m)}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

CorrespondenceSet ParseCorrespondences(const std::string& text, const std::string& source) {
  CorrespondenceSet set;
  const auto lines = SplitLines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (Trim(lines[n]).empty()) continue;
    const std::size_t line_no = n + 1;
    const json j = ParseJsonLine(lines[n], source, line_no);
    const Fields f(j, source, line_no);
    const std::int64_t i = f.Integer("i");
    const std::int64_t k = f.Integer("j");
    if (!(i < k)) f.Fail("frame pair must satisfy i < j");
    const json& matches = f.Raw("matches");
    if (!matches.is_array()) f.Fail("matches must be an array");
    auto& bucket = set.pairs[{i, k}];
    if (!bucket.empty()) f.Fail("duplicate frame pair");
    for (const auto& m : matches) {
      if (!m.is_array() || m.size() != 5 || !m[4].is_number_integer()) {
        f.Fail("each match must be [ax, ay, bx, by, tracklet_id]");
      }
      for (int c = 0; c < 4; ++c) {
        if (!m[c].is_number()) f.Fail("match coordinates must be numbers");
      }
      bucket.push_back({Vector2d(m[0].get<double>(), m[1].get<double>()),
                        Vector2d(m[2].get<double>(), m[3].get<double>()),
                        m[4].get<std::int64_t>()});
    }
    f.RejectUnknown();
  }
  return set;
}

// ---- CSV ------------------------------------------------------------------

std::string FormatCsv(const CsvTable& table) {
  auto field = [](const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  auto row = [&](const std::vector<std::string>& r) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i > 0) line += ',';
      line += field(r[i]);
    }
    return line + "\n";
  };
  std::string out = row(table.header);
  for (const auto& r : table.rows) out += row(r);
  return out;
}

CsvTable ParseCsv(const std::string& text, const std::string& source) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> record_lines;
  std::vector<std::string> current;
  std::string cell;
  bool quoted = false;
  bool cell_started = false;
  std::size_t line = 1;
  std::size_t record_line = 1;
  auto end_record = [&]() {
    current.push_back(std::move(cell));
    cell.clear();
    records.push_back(std::move(current));
    record_lines.push_back(record_line);
    current.clear();
    cell_started = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
          if (i + 1 < text.size() && text[i + 1] != ',' && text[i + 1] != '\n' &&
              text[i + 1] != '\r') {
            SchemaError(source, line, "unexpected character after closing quote");
          }
        }
      } else {
        if (c == '\n') ++line;
        cell += c;
      }
      continue;
    }
    if (c == '"') {
      if (!cell.empty()) SchemaError(source, line, "quote inside an unquoted field");
      quoted = true;
      cell_started = true;
    } else if (c == ',') {
      current.push_back(std::move(cell));
      cell.clear();
      cell_started = true;
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      end_record();
      ++line;
      record_line = line;
    } else {
      cell += c;
      cell_started = true;
    }
  }
  if (quoted) SchemaError(source, line, "unterminated quoted field");
  if (cell_started || !cell.empty() || !current.empty()) end_record();
  if (records.empty()) SchemaError(source, 1, "missing header row");

  CsvTable table;
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      SchemaError(source, record_lines[r],
                  "expected " + std::to_string(table.header.size()) + " fields, found " +
                      std::to_string(records[r].size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

CsvTable TrajectoryReportTable(const std::vector<std::string>& videos,
                               const std::vector<TrajectoryReport>& reports) {
  if (videos.size() != reports.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one report per video required");
  }
  CsvTable t;
  t.header = {"video", "ate", "rpe_trans", "rpe_rot", "registered_fraction"};
  TrajectoryReport mean;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const auto& r = reports[i];
    t.rows.push_back({videos[i], FormatNumber(r.ate), FormatNumber(r.rpe_trans),
                      FormatNumber(r.rpe_rot), FormatNumber(r.registered_fraction)});
    mean.ate += r.ate;
    mean.rpe_trans += r.rpe_trans;
    mean.rpe_rot += r.rpe_rot;
    mean.registered_fraction += r.registered_fraction;
  }
  const double n = reports.empty() ? 1.0 : static_cast<double>(reports.size());
  t.rows.push_back({"mean", FormatNumber(mean.ate / n), FormatNumber(mean.rpe_trans / n),
                    FormatNumber(mean.rpe_rot / n),
                    FormatNumber(mean.registered_fraction / n)});
  return t;
}

CsvTable SampsonReportTable(const SampsonReport& report) {
  CsvTable t;
  t.header = {"video", "num_pairs", "mean_error"};
  for (double th : report.thresholds) t.header.push_back("below_" + FormatNumber(th));
  std::size_t total_pairs = 0;
  double sum = 0.0;
  for (const auto& v : report.videos) {
    std::vector<std::string> row = {v.video, std::to_string(v.num_pairs),
                                    FormatNumber(v.mean_error)};
    for (double th : report.thresholds) row.push_back(v.mean_error < th ? "1" : "0");
    t.rows.push_back(std::move(row));
    total_pairs += v.num_pairs;
    sum += v.mean_error;
  }
  std::vector<std::string> all = {
      "all", std::to_string(total_pairs),
      FormatNumber(report.videos.empty() ? 0.0 : sum / static_cast<double>(report.videos.size()))};
  for (double a : report.accuracies) all.push_back(FormatNumber(a));
  t.rows.push_back(std::move(all));
  return t;
}

CsvTable CascadeTable(const std::vector<FilterSignals>& signals,
                      const std::vector<CascadeResult>& results) {
  if (signals.size() != results.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one cascade result per video required");
  }
  CsvTable t;
  t.header = {"video"};
  for (auto c : kAllFilterComponents) t.header.emplace_back(ComponentName(c));
  for (const char* h : {"aggregate", "include", "last_stage", "label"}) t.header.emplace_back(h);
  for (std::size_t i = 0; i < signals.size(); ++i) {
    const auto& r = results[i];
    std::vector<std::string> row = {signals[i].video};
    for (auto c : kAllFilterComponents) {
      row.push_back(r.score[c] ? FormatNumber(*r.score[c]) : "");
    }
    row.push_back(FormatNumber(r.score.Aggregate()));
    row.push_back(r.include ? "1" : "0");
    row.push_back(std::to_string(r.last_stage));
    row.push_back(signals[i].label ? (*signals[i].label ? "1" : "0") : "");
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable PrCurveTable(const std::vector<PrPoint>& curve) {
  CsvTable t;
  t.header = {"threshold", "recall", "precision"};
  for (const auto& p : curve) {
    t.rows.push_back({FormatNumber(p.threshold), FormatNumber(p.recall),
                      FormatNumber(p.precision)});
  }
  return t;
}

}  // namespace dynpose
