#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dynpose/geometry.h"
#include "dynpose/masking.h"

namespace dynpose {

// One seeded point tracked over a window. points[k] and visible[k] refer to
// frame start_frame + k.
struct Tracklet {
  std::int64_t id = 0;
  std::int64_t start_frame = 0;
  std::vector<Vector2d> points;
  std::vector<bool> visible;

  std::int64_t end_frame() const {
    return start_frame + static_cast<std::int64_t>(points.size());
  }
  bool Covers(std::int64_t frame) const {
    return frame >= start_frame && frame < end_frame();
  }
  bool VisibleAt(std::int64_t frame) const {
    return Covers(frame) && visible[static_cast<std::size_t>(frame - start_frame)];
  }
  const Vector2d& At(std::int64_t frame) const {
    return points[static_cast<std::size_t>(frame - start_frame)];
  }
};

struct WindowSchedule {
  std::vector<std::int64_t> starts;
  int length = 0;
  int stride = 0;
  // Empty frames appended to each window to keep its length constant.
  std::vector<int> padding;
};

WindowSchedule MakeWindowSchedule(std::int64_t num_frames, double fps,
                                  double stride_seconds, double length_seconds);

// Cell centers of a rows x cols grid over the frame.
std::vector<Vector2d> SeedGrid(int rows, int cols, double frame_width,
                               double frame_height);

struct Correspondence {
  Vector2d a;
  Vector2d b;
  std::int64_t tracklet_id = 0;
};

using FramePair = std::pair<std::int64_t, std::int64_t>;

struct CorrespondenceSet {
  // Keys satisfy first < second; entries ordered by tracklet id.
  std::map<FramePair, std::vector<Correspondence>> pairs;
  std::vector<std::string> warnings;

  std::size_t TotalMatches() const;
};

// Emits every frame pair at which the tracklet is visible and outside the
// dynamic mask at both frames. Frames without a mask count as unmasked.
CorrespondenceSet ExtractCorrespondences(
    std::span<const Tracklet> tracklets,
    const std::map<std::int64_t, DynamicMask>& masks, bool deduplicate = false);

struct TrackStatistics {
  std::int64_t first_frame = 0;
  // Fraction of tracks visible at t-1 lost at t, per frame from first_frame.
  std::vector<double> loss_seq;
  double median_move = 0.0;
  // Median movement of the tracks seeded by each window start.
  std::map<std::int64_t, double> window_median_moves;
};

// Movement is the net displacement between a track's first and last visible
// positions, divided by the frame diagonal.
TrackStatistics ComputeTrackStatistics(std::span<const Tracklet> tracklets,
                                       double frame_diagonal_px);

}  // namespace dynpose
