#include "dynpose/tracking.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "dynpose/error.h"

namespace dynpose {
namespace {

double Median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid]
                                : 0.5 * (values[mid - 1] + values[mid]);
}

std::optional<double> NetMove(const Tracklet& t) {
  std::optional<Vector2d> first;
  std::optional<Vector2d> last;
  for (std::size_t k = 0; k < t.points.size(); ++k) {
    if (!t.visible[k]) continue;
    if (!first) first = t.points[k];
    last = t.points[k];
  }
  if (!first) return std::nullopt;
  return (*last - *first).norm();
}

}  // namespace

WindowSchedule MakeWindowSchedule(std::int64_t num_frames, double fps,
                                  double stride_seconds, double length_seconds) {
  WindowSchedule s;
  s.stride = static_cast<int>(std::lround(stride_seconds * fps));
  s.length = static_cast<int>(std::lround(length_seconds * fps));
  if (s.stride < 1 || s.length < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "window stride must be >= 1 frame and length >= 2 frames");
  }
  if (num_frames < 1) {
    throw Error(ErrorCode::kInvalidArgument, "no frames to schedule");
  }
  for (std::int64_t start = 0; start < num_frames; start += s.stride) {
    s.starts.push_back(start);
    s.padding.push_back(static_cast<int>(
        std::max<std::int64_t>(0, start + s.length - num_frames)));
  }
  return s;
}

std::vector<Vector2d> SeedGrid(int rows, int cols, double frame_width,
                               double frame_height) {
  if (rows < 1 || cols < 1) {
    throw Error(ErrorCode::kInvalidArgument, "grid needs at least one cell");
  }
  std::vector<Vector2d> points;
  points.reserve(static_cast<std::size_t>(rows) * cols);
  const double cell_w = frame_width / cols;
  const double cell_h = frame_height / rows;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      points.emplace_back((c + 0.5) * cell_w, (r + 0.5) * cell_h);
    }
  }
  return points;
}

std::size_t CorrespondenceSet::TotalMatches() const {
  std::size_t n = 0;
  for (const auto& [key, matches] : pairs) n += matches.size();
  return n;
}

CorrespondenceSet ExtractCorrespondences(
    std::span<const Tracklet> tracklets,
    const std::map<std::int64_t, DynamicMask>& masks, bool deduplicate) {
  CorrespondenceSet out;
  std::set<std::int64_t> warned;

  std::vector<const Tracklet*> ordered;
  ordered.reserve(tracklets.size());
  for (const auto& t : tracklets) ordered.push_back(&t);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Tracklet* a, const Tracklet* b) { return a->id < b->id; });

  std::vector<std::int64_t> usable;
  for (const Tracklet* t : ordered) {
    if (t->points.size() != t->visible.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "tracklet " + std::to_string(t->id) +
                      " has mismatched points/visible lengths");
    }
    usable.clear();
    for (std::int64_t f = t->start_frame; f < t->end_frame(); ++f) {
      if (!t->VisibleAt(f)) continue;
      auto it = masks.find(f);
      if (it == masks.end()) {
        if (!masks.empty() && warned.insert(f).second) {
          out.warnings.push_back("no mask for frame " + std::to_string(f) +
                                 "; treated as empty");
        }
      } else if (it->second.Contains(t->At(f))) {
        continue;
      }
      usable.push_back(f);
    }
    for (std::size_t i = 0; i < usable.size(); ++i) {
      for (std::size_t j = i + 1; j < usable.size(); ++j) {
        out.pairs[{usable[i], usable[j]}].push_back(
            {t->At(usable[i]), t->At(usable[j]), t->id});
      }
    }
  }

  if (deduplicate) {
    for (auto& [key, matches] : out.pairs) {
      std::set<std::tuple<double, double, double, double>> seen;
      std::erase_if(matches, [&](const Correspondence& c) {
        return !seen.insert({c.a.x(), c.a.y(), c.b.x(), c.b.y()}).second;
      });
    }
  }
  return out;
}

TrackStatistics ComputeTrackStatistics(std::span<const Tracklet> tracklets,
                                       double frame_diagonal_px) {
  TrackStatistics stats;
  if (tracklets.empty()) return stats;
  std::int64_t first = tracklets.front().start_frame;
  std::int64_t last = tracklets.front().end_frame();
  for (const auto& t : tracklets) {
    first = std::min(first, t.start_frame);
    last = std::max(last, t.end_frame());
  }
  stats.first_frame = first;

  // Only tracks that cover both t-1 and t can be lost at t; a window ending
  // is not a loss.
  const auto span = static_cast<std::size_t>(last - first);
  std::vector<double> alive(span, 0.0);
  std::vector<double> lost(span, 0.0);
  for (const auto& t : tracklets) {
    for (std::int64_t f = t.start_frame + 1; f < t.end_frame(); ++f) {
      if (!t.VisibleAt(f - 1)) continue;
      const auto k = static_cast<std::size_t>(f - first);
      alive[k] += 1.0;
      if (!t.VisibleAt(f)) lost[k] += 1.0;
    }
  }
  stats.loss_seq.resize(span, 0.0);
  for (std::size_t k = 0; k < span; ++k) {
    if (alive[k] > 0.0) stats.loss_seq[k] = lost[k] / alive[k];
  }

  std::vector<double> moves;
  std::map<std::int64_t, std::vector<double>> by_window;
  for (const auto& t : tracklets) {
    if (auto m = NetMove(t)) {
      moves.push_back(*m / frame_diagonal_px);
      by_window[t.start_frame].push_back(*m / frame_diagonal_px);
    }
  }
  stats.median_move = Median(moves);
  for (auto& [start, values] : by_window) {
    stats.window_median_moves[start] = Median(std::move(values));
  }
  return stats;
}

}  // namespace dynpose
