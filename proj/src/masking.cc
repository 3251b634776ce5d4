#include "dynpose/masking.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "dynpose/error.h"

namespace dynpose {
namespace {

constexpr int kMinimalSample = 8;

// Sampson error with vanishing-gradient points scored as exact when the
// algebraic residual is also zero and as outliers otherwise.
double RobustSampson(const Matrix3d& f, const Vector2d& a, const Vector2d& b) {
  if (auto e = TrySampsonError(f, a, b)) return *e;
  const double algebraic = b.homogeneous().dot(f * a.homogeneous());
  return algebraic * algebraic < 1e-18
             ? 0.0
             : std::numeric_limits<double>::infinity();
}

std::size_t CountInliers(const Matrix3d& f, std::span<const PointMatch> matches,
                         double threshold_sq, std::vector<bool>* mask,
                         double* total_error) {
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const double e = RobustSampson(f, matches[i].a, matches[i].b);
    const bool inlier = e <= threshold_sq;
    if (mask != nullptr) (*mask)[i] = inlier;
    if (inlier) {
      ++count;
      total += e;
    }
  }
  if (total_error != nullptr) *total_error = total;
  return count;
}

Matrix3d FitSubset(std::span<const PointMatch> matches,
                   const std::vector<bool>& use) {
  std::vector<Vector2d> a;
  std::vector<Vector2d> b;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (!use[i]) continue;
    a.push_back(matches[i].a);
    b.push_back(matches[i].b);
  }
  return EightPoint(a, b);
}

void CheckSameShape(const DynamicMask& a, const DynamicMask& b) {
  if (!a.SameShape(b)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "masks differ in size: " + std::to_string(a.width()) + "x" +
                    std::to_string(a.height()) + " vs " +
                    std::to_string(b.width()) + "x" +
                    std::to_string(b.height()));
  }
}

std::vector<PointMatch> SampleFlow(const FlowField& flow, int step) {
  std::vector<PointMatch> matches;
  for (int y = step / 2; y < flow.height; y += step) {
    for (int x = step / 2; x < flow.width; x += step) {
      const Vector2d d = flow.At(x, y);
      if (!d.allFinite()) continue;
      const Vector2d p(x, y);
      matches.push_back({p, p + d});
    }
  }
  return matches;
}

}  // namespace

DynamicMask::DynamicMask(std::int64_t frame_index, int width, int height)
    : frame_index_(frame_index),
      width_(width),
      height_(height),
      bits_(static_cast<std::size_t>(width) * height, 0) {}

bool DynamicMask::Contains(const Vector2d& p) const {
  const long x = std::lround(p.x());
  const long y = std::lround(p.y());
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return false;
  return at(static_cast<int>(x), static_cast<int>(y));
}

std::size_t DynamicMask::Count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

double DynamicMask::Fraction() const {
  return bits_.empty() ? 0.0
                       : static_cast<double>(Count()) /
                             static_cast<double>(bits_.size());
}

FundamentalEstimate EstimateFundamentalRansac(std::span<const PointMatch> matches,
                                              double threshold_px,
                                              std::uint64_t seed,
                                              const RansacOptions& options) {
  if (matches.size() < kMinimalSample) {
    throw Error(ErrorCode::kTooFewMatches,
                std::to_string(matches.size()) + " matches, need 8");
  }
  const double threshold_sq = threshold_px * threshold_px;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, matches.size() - 1);

  Matrix3d best_f = Matrix3d::Zero();
  std::size_t best_count = 0;
  double best_error = std::numeric_limits<double>::infinity();
  std::array<Vector2d, kMinimalSample> a;
  std::array<Vector2d, kMinimalSample> b;
  std::array<std::size_t, kMinimalSample> sample{};

  long needed = options.max_iterations;
  for (long iter = 0; iter < needed && iter < options.max_iterations; ++iter) {
    for (int k = 0; k < kMinimalSample; ++k) {
      std::size_t idx;
      do {
        idx = pick(rng);
      } while (std::find(sample.begin(), sample.begin() + k, idx) !=
               sample.begin() + k);
      sample[k] = idx;
      a[k] = matches[idx].a;
      b[k] = matches[idx].b;
    }
    const Matrix3d f = EightPoint(a, b);
    if (!f.allFinite()) continue;
    double error = 0.0;
    const std::size_t count =
        CountInliers(f, matches, threshold_sq, nullptr, &error);
    if (count > best_count || (count == best_count && error < best_error)) {
      best_count = count;
      best_error = error;
      best_f = f;
      const double ratio =
          static_cast<double>(count) / static_cast<double>(matches.size());
      const double p_good = std::pow(ratio, kMinimalSample);
      if (p_good >= 1.0) {
        needed = iter + 1;
      } else if (p_good > 0.0) {
        needed = static_cast<long>(std::ceil(std::log(1.0 - options.confidence) /
                                             std::log(1.0 - p_good)));
      }
    }
  }

  if (static_cast<double>(best_count) <
          options.min_inlier_ratio * static_cast<double>(matches.size()) ||
      best_count < kMinimalSample) {
    throw Error(ErrorCode::kNoConsensus,
                "best inlier ratio " +
                    std::to_string(static_cast<double>(best_count) /
                                   static_cast<double>(matches.size())));
  }

  // Refit on the consensus set until it stops growing.
  FundamentalEstimate out;
  out.inliers.assign(matches.size(), false);
  out.num_inliers =
      CountInliers(best_f, matches, threshold_sq, &out.inliers, nullptr);
  out.f.matrix = best_f;
  for (int round = 0; round < 5; ++round) {
    const Matrix3d refit = FitSubset(matches, out.inliers);
    std::vector<bool> mask(matches.size(), false);
    const std::size_t count =
        CountInliers(refit, matches, threshold_sq, &mask, nullptr);
    if (count < out.num_inliers || !refit.allFinite()) break;
    const bool unchanged = mask == out.inliers;
    out.f.matrix = refit;
    out.inliers = std::move(mask);
    out.num_inliers = count;
    if (unchanged) break;
  }
  return out;
}

double MotionThreshold(int width, int height) {
  return static_cast<double>(width) * static_cast<double>(height) / 8100.0;
}

MotionSegmentResult MotionSegment(const FlowField& forward,
                                  const FlowField& backward,
                                  std::uint64_t seed,
                                  const MotionSegmentOptions& options) {
  if (forward.width != backward.width || forward.height != backward.height) {
    throw Error(ErrorCode::kDimensionMismatch,
                "forward and backward flow differ in size");
  }
  MotionSegmentResult result;
  result.mask = DynamicMask(forward.frame_from, forward.width, forward.height);
  result.threshold =
      options.threshold.value_or(MotionThreshold(forward.width, forward.height));

  Matrix3d f_fwd;
  Matrix3d f_bwd;
  try {
    const auto fwd_matches = SampleFlow(forward, options.grid_step);
    const auto bwd_matches = SampleFlow(backward, options.grid_step);
    f_fwd = EstimateFundamentalRansac(fwd_matches, options.inlier_threshold_px,
                                      seed, options.ransac)
                .f.matrix;
    f_bwd = EstimateFundamentalRansac(bwd_matches, options.inlier_threshold_px,
                                      seed ^ 0x9e3779b97f4a7c15ULL,
                                      options.ransac)
                .f.matrix;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoConsensus &&
        e.code() != ErrorCode::kTooFewMatches) {
      throw;
    }
    result.warning = "frame " + std::to_string(forward.frame_from) +
                     ": motion segmentation skipped (" + e.what() + ")";
    return result;
  }

  for (int y = 0; y < forward.height; ++y) {
    for (int x = 0; x < forward.width; ++x) {
      const Vector2d p(x, y);
      const double e_fwd = RobustSampson(f_fwd, p, p + forward.At(x, y));
      const double e_bwd = RobustSampson(f_bwd, p, p + backward.At(x, y));
      if (std::max(e_fwd, e_bwd) > result.threshold) result.mask.set(x, y, true);
    }
  }
  return result;
}

DynamicMask UnionMasks(std::span<const DynamicMask> parts) {
  if (parts.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no masks to combine");
  }
  DynamicMask out(parts.front().frame_index(), parts.front().width(),
                  parts.front().height());
  for (const auto& part : parts) {
    CheckSameShape(out, part);
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        if (part.at(x, y)) out.set(x, y, true);
      }
    }
  }
  return out;
}

std::vector<DynamicMask> HoldPropagate(const DynamicMask& keyframe,
                                       int horizon) {
  std::vector<DynamicMask> out;
  for (int i = 1; i <= horizon; ++i) {
    DynamicMask copy = keyframe;
    copy.set_frame_index(keyframe.frame_index() + i);
    out.push_back(std::move(copy));
  }
  return out;
}

bool IsDynamicClass(std::uint16_t id) {
  // person, vehicle, animal, accessory, sports, teddy bear
  return id == 1 || (id >= 2 && id <= 9) || (id >= 16 && id <= 25) ||
         (id >= 26 && id <= 33) || (id >= 34 && id <= 43) || id == 88;
}

DynamicMask SemanticClassFilter(const LabelMap& labels,
                                std::int64_t frame_index) {
  DynamicMask out(frame_index, labels.width, labels.height);
  for (int y = 0; y < labels.height; ++y) {
    for (int x = 0; x < labels.width; ++x) {
      if (IsDynamicClass(labels.labels[static_cast<std::size_t>(y) * labels.width + x])) {
        out.set(x, y, true);
      }
    }
  }
  return out;
}

bool IsHeldTouchClass(int touch_class) {
  return touch_class == 1 || touch_class == 2 || touch_class == 4 ||
         touch_class == 6;
}

DynamicMask InteractionTouchFilter(std::span<const TouchRegion> regions,
                                   int width, int height,
                                   std::int64_t frame_index) {
  std::vector<DynamicMask> held = {DynamicMask(frame_index, width, height)};
  for (const auto& region : regions) {
    if (IsHeldTouchClass(region.touch_class)) held.push_back(region.mask);
  }
  DynamicMask out = UnionMasks(held);
  out.set_frame_index(frame_index);
  return out;
}

std::vector<DynamicMask> ComposeMasks(const MaskSources& sources,
                                      std::int64_t num_frames, int width,
                                      int height, const MaskCadence& cadence) {
  if (cadence.keyframe_stride < 1 || cadence.propagation < 1) {
    throw Error(ErrorCode::kInvalidArgument, "mask cadence must be positive");
  }
  std::vector<DynamicMask> out;
  out.reserve(static_cast<std::size_t>(num_frames));
  for (std::int64_t f = 0; f < num_frames; ++f) out.emplace_back(f, width, height);

  for (std::int64_t key = 0; key < num_frames; key += cadence.keyframe_stride) {
    std::vector<DynamicMask> parts = {DynamicMask(key, width, height)};
    if (auto it = sources.semantic.find(key); it != sources.semantic.end()) {
      parts.push_back(SemanticClassFilter(it->second, key));
    }
    if (auto it = sources.interaction.find(key);
        it != sources.interaction.end()) {
      parts.push_back(InteractionTouchFilter(it->second, width, height, key));
    }
    if (auto it = sources.motion.find(key); it != sources.motion.end()) {
      parts.push_back(it->second);
    }
    DynamicMask combined = UnionMasks(parts);
    combined.set_frame_index(key);
    out[static_cast<std::size_t>(key)] = combined;
    for (auto& held : HoldPropagate(combined, cadence.propagation - 1)) {
      if (held.frame_index() >= num_frames) break;
      out[static_cast<std::size_t>(held.frame_index())] = std::move(held);
    }
  }
  return out;
}

}  // namespace dynpose
