#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynpose/geometry.h"

namespace dynpose {

// Per-frame binary map of dynamic pixels, row-major, one byte per pixel
// (0 = static, 1 = dynamic).
class DynamicMask {
 public:
  DynamicMask() = default;
  DynamicMask(std::int64_t frame_index, int width, int height);

  std::int64_t frame_index() const { return frame_index_; }
  void set_frame_index(std::int64_t index) { frame_index_ = index; }
  int width() const { return width_; }
  int height() const { return height_; }

  bool at(int x, int y) const {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int x, int y, bool dynamic) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = dynamic ? 1 : 0;
  }
  // True if the pixel nearest to `p` is dynamic. Points outside the frame
  // are never dynamic.
  bool Contains(const Vector2d& p) const;

  std::size_t Count() const;
  double Fraction() const;
  bool SameShape(const DynamicMask& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  friend bool operator==(const DynamicMask&, const DynamicMask&) = default;

 private:
  std::int64_t frame_index_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Dense displacement field from frame_from to frame_to, in pixels.
struct FlowField {
  std::int64_t frame_from = 0;
  std::int64_t frame_to = 1;
  int width = 0;
  int height = 0;
  // Interleaved (u, v), row-major.
  std::vector<float> uv;

  FlowField() = default;
  FlowField(int w, int h) : width(w), height(h), uv(2u * w * h, 0.0f) {}

  Vector2d At(int x, int y) const {
    const std::size_t i = 2 * (static_cast<std::size_t>(y) * width + x);
    return {uv[i], uv[i + 1]};
  }
  void Set(int x, int y, const Vector2d& d) {
    const std::size_t i = 2 * (static_cast<std::size_t>(y) * width + x);
    uv[i] = static_cast<float>(d.x());
    uv[i + 1] = static_cast<float>(d.y());
  }
};

// Per-pixel semantic class ids (16 bit).
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> labels;
};

struct PointMatch {
  Vector2d a;
  Vector2d b;
};

struct RansacOptions {
  int max_iterations = 2000;
  double confidence = 0.99;
  double min_inlier_ratio = 0.3;
};

struct FundamentalEstimate {
  FundamentalMatrix f;
  std::vector<bool> inliers;
  std::size_t num_inliers = 0;
};

// Normalized eight-point inside RANSAC, Sampson inlier test against
// threshold_px^2. Deterministic for a given seed.
FundamentalEstimate EstimateFundamentalRansac(std::span<const PointMatch> matches,
                                              double threshold_px,
                                              std::uint64_t seed,
                                              const RansacOptions& options = {});

struct MotionSegmentOptions {
  int grid_step = 8;
  double inlier_threshold_px = 1.0;
  // Squared-pixel threshold; defaults to width * height / 8100.
  std::optional<double> threshold;
  RansacOptions ransac;
};

struct MotionSegmentResult {
  DynamicMask mask;
  double threshold = 0.0;
  // Set when no fundamental matrix could be fit and the mask is left empty.
  std::optional<std::string> warning;
};

double MotionThreshold(int width, int height);

// Masks pixels whose max(forward, backward) Sampson error exceeds the
// threshold. `backward` maps frame_to back to frame_from.
MotionSegmentResult MotionSegment(const FlowField& forward,
                                  const FlowField& backward,
                                  std::uint64_t seed,
                                  const MotionSegmentOptions& options = {});

// Pixelwise OR. All parts must share dimensions.
DynamicMask UnionMasks(std::span<const DynamicMask> parts);

// Copies of `keyframe` for the next `horizon` frames.
std::vector<DynamicMask> HoldPropagate(const DynamicMask& keyframe,
                                       int horizon);

bool IsDynamicClass(std::uint16_t class_id);
DynamicMask SemanticClassFilter(const LabelMap& labels,
                                std::int64_t frame_index = 0);

struct TouchRegion {
  DynamicMask mask;
  int touch_class = 0;
};

bool IsHeldTouchClass(int touch_class);
DynamicMask InteractionTouchFilter(std::span<const TouchRegion> regions,
                                   int width, int height,
                                   std::int64_t frame_index = 0);

struct MaskSources {
  std::map<std::int64_t, LabelMap> semantic;
  std::map<std::int64_t, std::vector<TouchRegion>> interaction;
  std::map<std::int64_t, DynamicMask> motion;
};

struct MaskCadence {
  int keyframe_stride = 6;
  // Frames covered per keyframe, the keyframe included.
  int propagation = 6;
};

// Unions every source at each keyframe and holds the result forward.
// Frames not covered by any keyframe get empty masks.
std::vector<DynamicMask> ComposeMasks(const MaskSources& sources,
                                      std::int64_t num_frames, int width,
                                      int height, const MaskCadence& cadence);

}  // namespace dynpose
