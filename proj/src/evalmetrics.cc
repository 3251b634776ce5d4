#include "dynpose/evalmetrics.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "dynpose/error.h"

namespace dynpose {
namespace {

void CheckComparable(const Trajectory& gt, const Trajectory& pred) {
  if (gt.size() != pred.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "trajectories differ in length: " + std::to_string(gt.size()) +
                    " vs " + std::to_string(pred.size()));
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto& g = gt.frames()[i];
    const auto& p = pred.frames()[i];
    if (g.index != p.index) {
      throw Error(ErrorCode::kInvalidArgument,
                  "frame index mismatch at position " + std::to_string(i));
    }
    if (!g.pose || !p.pose) {
      throw Error(ErrorCode::kInvalidArgument,
                  "frame " + std::to_string(g.index) + " has no pose");
    }
  }
}

}  // namespace

Trajectory FillTrajectory(const Trajectory& pred, std::int64_t total_frames) {
  std::vector<const TrajectoryFrame*> registered;
  for (const auto& f : pred.frames()) {
    if (f.pose) registered.push_back(&f);
  }
  Trajectory out(pred.fps());
  for (std::int64_t i = 0; i < total_frames; ++i) {
    if (registered.empty()) {
      out.Append(i, Pose::Identity());
      continue;
    }
    auto it = std::lower_bound(
        registered.begin(), registered.end(), i,
        [](const TrajectoryFrame* f, std::int64_t idx) { return f->index < idx; });
    const TrajectoryFrame* best = nullptr;
    if (it != registered.end()) best = *it;
    if (it != registered.begin()) {
      const TrajectoryFrame* before = *(it - 1);
      if (best == nullptr || i - before->index <= best->index - i) best = before;
    }
    out.Append(i, best->pose);
  }
  return out;
}

Trajectory RandomFill(std::int64_t total_frames, std::uint64_t seed, double fps) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Trajectory out(fps);
  for (std::int64_t i = 0; i < total_frames; ++i) {
    const double x = u(rng);
    const double y = u(rng);
    const double z = u(rng);
    out.Append(i, Pose(Matrix3d::Identity(), Vector3d(x, y, z)));
  }
  return out;
}

double Ate(const Trajectory& gt, const Trajectory& pred) {
  CheckComparable(gt, pred);
  const Similarity s = UmeyamaAlign(pred, gt, true);
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const Vector3d aligned = s.Apply(pred.frames()[i].pose->Center());
    sum += (aligned - gt.frames()[i].pose->Center()).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(gt.size()));
}

RpeResult Rpe(const Trajectory& gt, const Trajectory& pred, bool align) {
  CheckComparable(gt, pred);
  const Trajectory aligned = align ? UmeyamaAlign(pred, gt, true).Apply(pred) : pred;
  RpeResult out;
  if (gt.size() < 2) return out;
  for (std::size_t i = 0; i + 1 < gt.size(); ++i) {
    const Pose rel_gt = RelativePose(*gt.frames()[i].pose, *gt.frames()[i + 1].pose);
    const Pose rel_pred =
        RelativePose(*aligned.frames()[i].pose, *aligned.frames()[i + 1].pose);
    out.trans += (rel_gt.translation() - rel_pred.translation()).norm();
    out.rot_deg += RotationAngleDeg(rel_gt.R(), rel_pred.R());
  }
  const double n = static_cast<double>(gt.size() - 1);
  out.trans /= n;
  out.rot_deg /= n;
  return out;
}

TrajectoryReport EvaluateTrajectory(const Trajectory& gt, const Trajectory& pred,
                                    bool align_rpe) {
  TrajectoryReport report;
  report.registered_fraction = pred.size() == 0 ? 0.0 : pred.RegisteredFraction();
  Trajectory filled(pred.fps());
  const Trajectory dense = FillTrajectory(pred, static_cast<std::int64_t>(
                                                    gt.frames().empty()
                                                        ? 0
                                                        : gt.frames().back().index + 1));
  for (const auto& f : gt.frames()) filled.Append(f.index, dense.Find(f.index)->pose);
  report.ate = Ate(gt, filled);
  const RpeResult rpe = Rpe(gt, filled, align_rpe);
  report.rpe_trans = rpe.trans;
  report.rpe_rot = rpe.rot_deg;
  return report;
}

CameraIntrinsics Normalize720(const CameraIntrinsics& k) {
  if (!(k.height > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "intrinsics need a positive frame height");
  }
  return k.Scaled(720.0 / k.height);
}

double PairReprojectionError(const Trajectory& pred, const CameraIntrinsics& k720,
                             const AnnotatedPair& pair) {
  const TrajectoryFrame* a = pred.Find(pair.frame_a);
  const TrajectoryFrame* b = pred.Find(pair.frame_b);
  if (a == nullptr || b == nullptr || !a->pose || !b->pose) {
    throw Error(ErrorCode::kInvalidArgument,
                "no pose for annotated frames " + std::to_string(pair.frame_a) +
                    "/" + std::to_string(pair.frame_b));
  }
  const auto f = TryFundamentalFromRelativePose(k720, k720, RelativePose(*a->pose, *b->pose));
  if (!f) return (pair.point_b - pair.point_a).norm();
  if (auto e = TrySampsonError(f->matrix, pair.point_a, pair.point_b)) {
    return std::sqrt(*e);
  }
  return (pair.point_b - pair.point_a).norm();
}

double VideoReprojectionError(const Trajectory& pred, const CameraIntrinsics& k,
                              std::span<const AnnotatedPair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::kNoPairs, "video has no annotated pairs");
  const CameraIntrinsics k720 = Normalize720(k);
  double sum = 0.0;
  for (const auto& p : pairs) sum += PairReprojectionError(pred, k720, p);
  return sum / static_cast<double>(pairs.size());
}

std::vector<double> ThresholdAccuracies(std::span<const double> values,
                                        std::span<const double> thresholds) {
  std::vector<double> out;
  for (double t : thresholds) {
    if (values.empty()) {
      out.push_back(0.0);
      continue;
    }
    const auto below = std::count_if(values.begin(), values.end(),
                                     [t](double v) { return v < t; });
    out.push_back(static_cast<double>(below) / static_cast<double>(values.size()));
  }
  return out;
}

SampsonReport SampsonEval(const std::map<std::string, Trajectory>& predictions,
                          const std::map<std::string, CameraIntrinsics>& intrinsics,
                          std::span<const AnnotatedPair> pairs,
                          std::span<const double> thresholds) {
  std::map<std::string, std::vector<AnnotatedPair>> by_video;
  for (const auto& p : pairs) by_video[p.video].push_back(p);

  SampsonReport report;
  report.thresholds.assign(thresholds.begin(), thresholds.end());
  std::vector<double> means;
  for (const auto& [video, video_pairs] : by_video) {
    auto traj = predictions.find(video);
    auto k = intrinsics.find(video);
    if (traj == predictions.end() || k == intrinsics.end()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "no trajectory or intrinsics for video '" + video + "'");
    }
    std::int64_t last = 0;
    for (const auto& f : traj->second.frames()) last = std::max(last, f.index);
    for (const auto& p : video_pairs) last = std::max({last, p.frame_a, p.frame_b});
    const Trajectory filled = FillTrajectory(traj->second, last + 1);
    VideoSampsonResult r;
    r.video = video;
    r.num_pairs = video_pairs.size();
    r.mean_error = VideoReprojectionError(filled, k->second, video_pairs);
    means.push_back(r.mean_error);
    report.videos.push_back(std::move(r));
  }
  report.accuracies = ThresholdAccuracies(means, thresholds);
  return report;
}

std::optional<AnnotatedPair> CorrespondenceGate(const AnnotatedPair& human,
                                                std::span<const PointMatch> candidates,
                                                double radius_px) {
  std::optional<AnnotatedPair> best;
  double best_sum = 0.0;
  for (const auto& c : candidates) {
    const double da = (c.a - human.point_a).norm();
    const double db = (c.b - human.point_b).norm();
    if (da > radius_px || db > radius_px) continue;
    if (!best || da + db < best_sum) {
      best = human;
      best->point_a = c.a;
      best->point_b = c.b;
      best_sum = da + db;
    }
  }
  return best;
}

}  // namespace dynpose
