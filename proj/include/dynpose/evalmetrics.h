#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynpose/geometry.h"
#include "dynpose/masking.h"

namespace dynpose {

// Complete trajectory over frames 0..total_frames-1. Missing frames copy the
// nearest registered pose (ties go to the earlier frame); with nothing
// registered every pose is the identity.
Trajectory FillTrajectory(const Trajectory& pred, std::int64_t total_frames);

// Identity rotations with translations uniform in [-1, 1]^3.
Trajectory RandomFill(std::int64_t total_frames, std::uint64_t seed,
                      double fps = 12.0);

// Position RMSE after aligning pred onto gt with a similarity. Both must be
// complete over the same frame indices.
double Ate(const Trajectory& gt, const Trajectory& pred);

struct RpeResult {
  double trans = 0.0;
  double rot_deg = 0.0;
};

// Mean error of consecutive-frame relative poses. With `align`, pred is
// first mapped through the same similarity Ate uses.
RpeResult Rpe(const Trajectory& gt, const Trajectory& pred, bool align = true);

struct TrajectoryReport {
  double ate = 0.0;
  double rpe_trans = 0.0;
  double rpe_rot = 0.0;
  double registered_fraction = 0.0;
};

// Fills pred over gt's frames, then computes every metric. The registered
// fraction is measured before filling.
TrajectoryReport EvaluateTrajectory(const Trajectory& gt, const Trajectory& pred,
                                    bool align_rpe = true);

// Points are in 720p-normalized pixels (frame height scaled to 720).
struct AnnotatedPair {
  std::string video;
  std::int64_t frame_a = 0;
  std::int64_t frame_b = 0;
  Vector2d point_a = Vector2d::Zero();
  Vector2d point_b = Vector2d::Zero();
};

// Intrinsics rescaled so the frame height is 720.
CameraIntrinsics Normalize720(const CameraIntrinsics& k);

// sqrt of the Sampson error under the fundamental matrix of the predicted
// relative pose, or the point distance when that pose has no translation.
// `k720` must already be normalized. pred must contain both frames.
double PairReprojectionError(const Trajectory& pred, const CameraIntrinsics& k720,
                             const AnnotatedPair& pair);

// Mean over the pairs. Throws kNoPairs when empty.
double VideoReprojectionError(const Trajectory& pred, const CameraIntrinsics& k,
                              std::span<const AnnotatedPair> pairs);

struct VideoSampsonResult {
  std::string video;
  double mean_error = 0.0;
  std::size_t num_pairs = 0;
};

struct SampsonReport {
  std::vector<VideoSampsonResult> videos;
  std::vector<double> thresholds;
  // Fraction of videos whose mean error is below each threshold.
  std::vector<double> accuracies;
};

inline const std::vector<double>& DefaultSampsonThresholds() {
  static const std::vector<double> thresholds = {5.0, 10.0, 30.0};
  return thresholds;
}

// Fraction of values strictly below each threshold.
std::vector<double> ThresholdAccuracies(std::span<const double> values,
                                        std::span<const double> thresholds);

// Evaluates every video that has annotations. Trajectories are filled to
// cover the annotated frames first. Throws kInvalidArgument when a video has
// pairs but no trajectory or intrinsics.
SampsonReport SampsonEval(const std::map<std::string, Trajectory>& predictions,
                          const std::map<std::string, CameraIntrinsics>& intrinsics,
                          std::span<const AnnotatedPair> pairs,
                          std::span<const double> thresholds);

// Keeps the candidate whose endpoints both lie within `radius_px` of the
// human points, preferring the smallest summed distance. nullopt if none.
std::optional<AnnotatedPair> CorrespondenceGate(const AnnotatedPair& human,
                                                std::span<const PointMatch> candidates,
                                                double radius_px = 10.0);

}  // namespace dynpose
