// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Everything runs on synthbench data and hand-built inputs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dynpose/error.h"
#include "dynpose/evalmetrics.h"
#include "dynpose/filtering.h"
#include "dynpose/io.h"
#include "dynpose/sfm.h"
#include "dynpose/synthbench.h"
#include "dynpose/tracking.h"
#include "oracles.h"

namespace dynpose {
namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first few failure messages of a criterion.
class Check {
 public:
  void Expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) messages_ += (messages_.empty() ? "" : "; ") + what;
  }
  bool ok() const { return failures_ == 0; }
  Outcome Done(const std::string& summary) const {
    if (ok()) return {true, summary};
    return {false, summary + " | " + std::to_string(failures_) + " failure(s): " + messages_};
  }

 private:
  int failures_ = 0;
  std::string messages_;
};

std::string Fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, a, b, c);
  return buf;
}

// ---- synthetic end-to-end SfM and the masking ablation ---------------------

struct SfmRun {
  double extent = 0.0;
  double ate_clean = 0.0;
  double ate_clean_unmasked = 0.0;
  double ate_noisy = 0.0;
  double seconds_clean = 0.0;
  std::string failure;
};

double Extent(const Trajectory& t) {
  double best = 0.0;
  for (const auto& a : t.frames()) {
    for (const auto& b : t.frames()) {
      best = std::max(best, (a.pose->Center() - b.pose->Center()).norm());
    }
  }
  return best;
}

double AteOrInf(const SynthScene& scene, const SceneModel& model) {
  if (model.failed) return std::numeric_limits<double>::infinity();
  return EvaluateTrajectory(scene.gt_trajectory, model.trajectory, true).ate;
}

std::vector<SfmRun> RunSfmScenes() {
  constexpr TrajectoryKind kinds[] = {TrajectoryKind::kOrbit, TrajectoryKind::kForwardArc,
                                      TrajectoryKind::kPan};
  std::vector<SfmRun> runs;
  for (std::uint64_t s = 0; s < 20; ++s) {
    SceneConfig cfg;
    cfg.trajectory_kind = kinds[s % 3];
    const SynthScene scene = GenScene(s, cfg);
    SfmRun run;
    run.extent = Extent(scene.gt_trajectory);
    for (double noise : {0.0, 0.5}) {
      TrackOptions opts;
      opts.noise_px = noise;
      const SynthTracks tracks = ProjectTracks(scene, opts, s + 1000);
      std::map<std::int64_t, DynamicMask> masks;
      for (const auto& m : tracks.masks) masks.emplace(m.frame_index(), m);
      const auto t0 = std::chrono::steady_clock::now();
      const SceneModel model = RunPipeline(tracks.tracklets, masks, scene.intrinsics,
                                           cfg.num_frames, SfmConfig{}, s);
      const auto t1 = std::chrono::steady_clock::now();
      if (model.failed) run.failure = model.failure_reason;
      if (noise == 0.0) {
        run.seconds_clean = std::chrono::duration<double>(t1 - t0).count();
        run.ate_clean = AteOrInf(scene, model);
        const SceneModel unmasked = RunPipeline(tracks.tracklets, {}, scene.intrinsics,
                                                cfg.num_frames, SfmConfig{}, s);
        run.ate_clean_unmasked = AteOrInf(scene, unmasked);
      } else {
        run.ate_noisy = AteOrInf(scene, model);
      }
    }
    runs.push_back(run);
  }
  return runs;
}

Outcome SyntheticSfm(const std::vector<SfmRun>& runs) {
  Check check;
  double worst_clean = 0.0;
  double worst_noisy_pct = 0.0;
  double seconds = 0.0;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    const SfmRun& r = runs[s];
    worst_clean = std::max(worst_clean, r.ate_clean);
    worst_noisy_pct = std::max(worst_noisy_pct, 100.0 * r.ate_noisy / r.extent);
    seconds += r.seconds_clean;
    check.Expect(r.failure.empty(), "scene " + std::to_string(s) + ": " + r.failure);
    check.Expect(r.ate_clean < 1e-4, "scene " + std::to_string(s) + Fmt(" clean ATE %.3g", r.ate_clean));
    check.Expect(r.ate_noisy < 0.01 * r.extent,
                 "scene " + std::to_string(s) + Fmt(" noisy ATE %.3g of extent %.3g", r.ate_noisy, r.extent));
  }
  check.Expect(seconds < 60.0, Fmt("runtime %.1f s", seconds));
  return check.Done(Fmt("20 scenes: worst clean ATE %.2g, worst noisy ATE %.3f%% of extent, "
                        "clean runtime %.1f s",
                        worst_clean, worst_noisy_pct, seconds));
}

Outcome MaskingAblation(const std::vector<SfmRun>& runs) {
  int worse = 0;
  for (const auto& r : runs) worse += r.ate_clean_unmasked > r.ate_clean ? 1 : 0;
  return {worse >= 18, std::to_string(worse) + "/20 scenes worse without masks (need >= 18)"};
}

// ---- Sampson machinery ----------------------------------------------------

Outcome SampsonMachinery() {
  Check check;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> px(0.0, 1280.0);
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    Matrix3d f;
    if (i % 2 == 0) {
      CameraIntrinsics k{300 + 900 * (u(rng) + 1) / 2, 300 + 900 * (u(rng) + 1) / 2, 640, 360,
                         1280, 720};
      f = FundamentalFromRelativePose(k, k, oracle::RandomPose(rng)).matrix;
    } else {
      for (int e = 0; e < 9; ++e) f(e / 3, e % 3) = u(rng);
    }
    const Vector2d a(px(rng), px(rng) * 0.5625);
    const Vector2d b(px(rng), px(rng) * 0.5625);
    const auto got = TrySampsonError(f, a, b);
    const double want = oracle::NaiveSampson(f, a.x(), a.y(), b.x(), b.y());
    if (!got) {
      check.Expect(false, "unexpected degenerate gradient");
      continue;
    }
    const double err = std::abs(*got - want) / std::max(1.0, std::abs(want));
    worst = std::max(worst, err);
    check.Expect(err <= 1e-12, Fmt("input %.0f differs by %.3g", i, err));
  }

  CameraIntrinsics k{700, 700, 640, 360, 1280, 720};
  int exact = 0;
  for (int i = 0; i < 1000; ++i) {
    // Both frames share one pose: no translation between them.
    const Pose shared = i % 2 == 0 ? Pose::Identity() : oracle::RandomPose(rng);
    Trajectory pred;
    pred.Append(0, shared);
    pred.Append(1, shared);
    AnnotatedPair pair{"v", 0, 1, {px(rng), px(rng) * 0.5625}, {px(rng), px(rng) * 0.5625}};
    const double dx = pair.point_b.x() - pair.point_a.x();
    const double dy = pair.point_b.y() - pair.point_a.y();
    const double got = PairReprojectionError(pred, k, pair);
    exact += got == std::sqrt(dx * dx + dy * dy) ? 1 : 0;
  }
  check.Expect(exact == 1000, std::to_string(exact) + "/1000 identity pairs exact");
  return check.Done(Fmt("1e5 inputs, worst relative difference %.2g; identity rule exact on %.0f/1000",
                        worst, exact));
}

// ---- metric invariances ---------------------------------------------------

Trajectory RandomTrajectory(std::mt19937_64& rng, int n) {
  Trajectory t(12.0);
  for (int i = 0; i < n; ++i) t.Append(i, oracle::RandomPose(rng, 5.0));
  return t;
}

Pose JitterPose(const Pose& p, std::mt19937_64& rng, double rot, double trans) {
  std::normal_distribution<double> g(0.0, 1.0);
  const Matrix3d d =
      Eigen::AngleAxisd(rot, Vector3d(g(rng), g(rng), g(rng)).normalized()).toRotationMatrix();
  return Pose(d * p.R(), p.translation() + trans * Vector3d(g(rng), g(rng), g(rng)));
}

Trajectory Jitter(const Trajectory& t, std::mt19937_64& rng, double rot, double trans) {
  Trajectory out(t.fps());
  for (const auto& f : t.frames()) out.Append(f.index, JitterPose(*f.pose, rng, rot, trans));
  return out;
}

SceneModel NoisyGroundTruthModel(const SynthScene& scene, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, noise);
  SceneModel m;
  m.intrinsics = scene.intrinsics;
  m.trajectory = scene.gt_trajectory;
  for (std::size_t p = 0; p < scene.static_points.size(); ++p) {
    Landmark lm;
    lm.tracklet_id = static_cast<std::int64_t>(p);
    lm.point = scene.static_points[p];
    for (std::int64_t f = 0; f < scene.num_frames(); ++f) {
      if (!IsVisible(scene, f, lm.point)) continue;
      lm.observations.emplace_back(
          f, Project(scene.intrinsics, scene.PoseAt(f), lm.point) + Vector2d(g(rng), g(rng)));
    }
    if (lm.observations.size() >= 2) m.landmarks.push_back(std::move(lm));
  }
  return m;
}

Outcome MetricInvariances() {
  Check check;
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double ate_dev = 0.0;
  double rpe_dev = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Trajectory gt = RandomTrajectory(rng, 30);
    const Trajectory pred = Jitter(gt, rng, 0.02, 0.1);
    Similarity s;
    s.scale = 0.1 + 5.0 * (u(rng) + 1.0);
    s.rotation = oracle::RandomRotation(rng);
    s.translation = 10.0 * Vector3d(u(rng), u(rng), u(rng));
    ate_dev = std::max(ate_dev, std::abs(Ate(gt, s.Apply(pred)) - Ate(gt, pred)));
    Similarity r;
    r.rotation = oracle::RandomRotation(rng);
    rpe_dev = std::max(rpe_dev, std::abs(Rpe(gt, r.Apply(pred), false).rot_deg -
                                         Rpe(gt, pred, false).rot_deg));
  }
  check.Expect(ate_dev <= 1e-9, Fmt("ATE changed by %.3g", ate_dev));
  check.Expect(rpe_dev <= 1e-9, Fmt("RPE rotation changed by %.3g", rpe_dev));

  // Reprojection Jacobians against central differences.
  double jac_dev = 0.0;
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const CameraIntrinsics k{400 + 200 * (u(rng) + 1), 400 + 200 * (u(rng) + 1),
                             320 + 20 * u(rng), 180 + 20 * u(rng), 640, 360};
    const Pose pose(oracle::RandomRotation(rng), Vector3d(u(rng), u(rng), u(rng)));
    const Vector3d point = pose.Inverse().Transform(Vector3d(u(rng), u(rng), 3.0 + u(rng)));
    const Vector2d obs(320 + 100 * u(rng), 180 + 100 * u(rng));
    ReprojectionJacobians jac;
    ReprojectionResidual(k, pose, point, obs, &jac);
    Eigen::Matrix<double, 2, 10> analytic;
    analytic << jac.pose, jac.point, jac.focal;
    Eigen::Matrix<double, 2, 10> numeric;
    for (int d = 0; d < 10; ++d) {
      auto eval = [&](double sign) {
        const double e = sign * h;
        Pose p = pose;
        Vector3d x = point;
        CameraIntrinsics kk = k;
        if (d < 3) {
          p = Pose(Eigen::AngleAxisd(e, Vector3d::Unit(d)).toRotationMatrix() * pose.R(),
                   pose.translation());
        } else if (d < 6) {
          p = Pose(pose.R(), pose.translation() + e * Vector3d::Unit(d - 3));
        } else if (d < 9) {
          x += e * Vector3d::Unit(d - 6);
        } else {
          kk.fx *= 1.0 + e;
          kk.fy *= 1.0 + e;
        }
        return ReprojectionResidual(kk, p, x, obs);
      };
      numeric.col(d) = (eval(1.0) - eval(-1.0)) / (2.0 * h);
    }
    for (int d = 0; d < 10; ++d) {
      const double rel = (analytic.col(d) - numeric.col(d)).norm() /
                         std::max(1.0, numeric.col(d).norm());
      jac_dev = std::max(jac_dev, rel);
    }
  }
  check.Expect(jac_dev <= 1e-5, Fmt("Jacobian relative error %.3g", jac_dev));

  // Accepted-step cost sequences on seeded problems.
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SceneConfig cfg;
    cfg.num_frames = 12;
    cfg.n_dynamic = 0;
    cfg.trajectory_kind = static_cast<TrajectoryKind>(seed % 3);
    const SynthScene scene = GenScene(seed + 500, cfg);
    SceneModel model = NoisyGroundTruthModel(scene, 0.5, seed);
    std::mt19937_64 prng(seed);
    Trajectory start(scene.fps());
    for (const auto& f : model.trajectory.frames()) {
      start.Append(f.index, f.index == 0 ? *f.pose : JitterPose(*f.pose, prng, 0.005, 0.01));
    }
    model.trajectory = start;
    BundleAdjustOptions opts;
    opts.refine_focal = seed % 2 == 1;
    const BundleAdjustResult out = BundleAdjust(model, opts);
    bool ok = out.cost_history.size() >= 2;
    for (std::size_t i = 1; i < out.cost_history.size(); ++i) {
      ok = ok && out.cost_history[i] <= out.cost_history[i - 1];
    }
    monotone += ok ? 1 : 0;
  }
  check.Expect(monotone == 50, std::to_string(monotone) + "/50 BA problems monotone");
  std::ostringstream os;
  os << "ATE dev " << ate_dev << ", RPE rot dev " << rpe_dev << ", Jacobian rel err " << jac_dev
     << ", BA monotone " << monotone << "/50";
  return check.Done(os.str());
}

// ---- filter cascade -------------------------------------------------------

Outcome FilterCascade() {
  Check check;
  const FilterThresholds t;
  FilterThresholds open = t;
  open.stage_thresholds = {0.0, 0.0, 0.0, 0.0};
  double worst = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int staged_equal = 0;
  int total = 0;
  for (FixtureKind kind : kAllFixtureKinds) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const FilterSignals s = MakeFilterFixture(kind, seed);
      const FilterScore score = ScoreAvailable(s, t);
      const auto brute = oracle::BruteScores(s, t);
      for (std::size_t c = 0; c < kNumFilterComponents; ++c) {
        const auto& got = score.components[c];
        check.Expect(got.has_value() == brute[c].has_value(), "presence differs");
        if (got && brute[c]) worst = std::max(worst, std::abs(*got - *brute[c]));
      }
      const bool one_shot = Aggregate(score, t.final_threshold);
      check.Expect(one_shot == (oracle::BruteAggregate(brute) >= t.final_threshold),
                   "aggregate rule differs from oracle");
      const bool label = s.label.value_or(false);
      tp += one_shot && label;
      fp += one_shot && !label;
      fn += !one_shot && label;
      staged_equal += RunCascade(s, open).include == one_shot ? 1 : 0;
      ++total;
    }
  }
  check.Expect(worst <= 1e-12, Fmt("sub-score deviation %.3g", worst));
  const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
  const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
  check.Expect(precision == 1.0 && recall == 1.0, Fmt("precision %.3f recall %.3f", precision, recall));
  check.Expect(staged_equal == total, std::to_string(staged_equal) + " staged decisions agree");
  std::ostringstream os;
  os << total << " fixtures, max sub-score deviation " << worst << ", precision " << precision
     << ", recall " << recall << ", staged==one-shot " << staged_equal << "/" << total;
  return check.Done(os.str());
}

// ---- PR / AP --------------------------------------------------------------

double Ap(const std::vector<double>& scores, const std::vector<bool>& labels) {
  const std::unique_ptr<bool[]> buf(new bool[labels.size()]);
  for (std::size_t i = 0; i < labels.size(); ++i) buf[i] = labels[i];
  return AveragePrecision(PrCurve(scores, std::span<const bool>(buf.get(), labels.size())), true);
}

Outcome PrAp() {
  Check check;
  const double worked = Ap({0.9, 0.8, 0.7}, {true, false, true});
  check.Expect(std::abs(worked - (0.5 + 0.5 * 2.0 / 3.0)) <= 1e-12, Fmt("worked example %.15g", worked));
  std::mt19937_64 rng(61);
  std::uniform_int_distribution<int> size(1, 60);
  std::uniform_int_distribution<int> level(0, 20);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = size(rng);
    std::vector<double> scores;
    std::vector<bool> labels;
    for (int i = 0; i < n; ++i) {
      // Coarse levels so ties occur.
      scores.push_back(level(rng) / 20.0);
      labels.push_back(rng() % 2 == 0);
    }
    labels[0] = true;
    worst = std::max(worst, std::abs(Ap(scores, labels) - oracle::NaiveVocAp(scores, labels)));
  }
  check.Expect(worst <= 1e-12, Fmt("AP deviation %.3g", worst));
  return check.Done(Fmt("worked example AP %.10f, 100 random sets, max deviation %.2g", worked, worst));
}

// ---- correspondence extraction --------------------------------------------

Tracklet RandomTracklet(std::mt19937_64& rng, std::int64_t id, int w, int h) {
  std::uniform_int_distribution<int> start(0, 20);
  std::uniform_int_distribution<int> len(1, 12);
  std::uniform_real_distribution<double> px(-2.0, w + 2.0);
  std::uniform_real_distribution<double> py(-2.0, h + 2.0);
  std::bernoulli_distribution vis(0.8);
  Tracklet t;
  t.id = id;
  t.start_frame = start(rng);
  const int n = len(rng);
  for (int k = 0; k < n; ++k) {
    t.points.emplace_back(px(rng), py(rng));
    t.visible.push_back(vis(rng));
  }
  return t;
}

Outcome CorrespondenceExtraction() {
  Check check;
  Tracklet four;
  four.id = 1;
  four.start_frame = 10;
  for (int k = 0; k < 4; ++k) {
    four.points.emplace_back(5.0 + k, 5.0);
    four.visible.push_back(true);
  }
  const std::vector<Tracklet> single = {four};
  const std::size_t unmasked = ExtractCorrespondences(single, {}).TotalMatches();
  check.Expect(unmasked == 6, "four visible frames gave " + std::to_string(unmasked));
  std::map<std::int64_t, DynamicMask> masks;
  for (std::int64_t f = 10; f < 14; ++f) masks.emplace(f, DynamicMask(f, 20, 20));
  masks.at(12).set(7, 5, true);
  const std::size_t masked = ExtractCorrespondences(single, masks).TotalMatches();
  check.Expect(masked == 3, "masked third frame gave " + std::to_string(masked));

  std::mt19937_64 rng(71);
  std::bernoulli_distribution on(0.15);
  int agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Tracklet> tracklets;
    for (int i = 0; i < 5; ++i) tracklets.push_back(RandomTracklet(rng, i, 16, 12));
    std::map<std::int64_t, DynamicMask> random_masks;
    for (std::int64_t f = 0; f < 34; ++f) {
      if (f % 5 == 3) continue;
      DynamicMask m(f, 16, 12);
      for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 16; ++x) m.set(x, y, on(rng));
      }
      random_masks.emplace(f, m);
    }
    std::map<std::pair<FramePair, std::int64_t>, std::size_t> expected;
    for (const auto& t : tracklets) {
      for (const auto& p : oracle::EnumeratePairs(t, random_masks)) ++expected[{p, t.id}];
    }
    std::map<std::pair<FramePair, std::int64_t>, std::size_t> got;
    for (const auto& [key, matches] : ExtractCorrespondences(tracklets, random_masks).pairs) {
      for (const auto& m : matches) ++got[{key, m.tracklet_id}];
    }
    agree += got == expected ? 1 : 0;
  }
  check.Expect(agree == 1000, std::to_string(agree) + "/1000 configurations agree");
  return check.Done("C(4,2) case " + std::to_string(unmasked) + ", masked case " +
                    std::to_string(masked) + ", random configurations " + std::to_string(agree) +
                    "/1000");
}

// ---- registration rules ---------------------------------------------------

bool SamePose(const Pose& a, const Pose& b) {
  return a.rotation().coeffs() == b.rotation().coeffs() && a.translation() == b.translation();
}

Outcome RegistrationRules() {
  Check check;
  // 80% rule at the boundary: frames beyond `cut` never share a match with
  // the rest, so exactly `cut` of 60 frames can register.
  SceneConfig cfg;
  cfg.n_dynamic = 0;
  const SynthScene scene = GenScene(81, cfg);
  const SynthTracks tracks = ProjectTracks(scene, TrackOptions{}, 82);
  const CorrespondenceSet all = ExtractCorrespondences(tracks.tracklets, {});
  std::string boundary;
  for (std::int64_t cut : {48, 47}) {
    CorrespondenceSet corr = all;
    std::erase_if(corr.pairs, [&](const auto& kv) { return kv.first.second >= cut; });
    const SceneModel m = RunPipelineFromCorrespondences(corr, scene.intrinsics, 60, SfmConfig{}, 1);
    const bool should_fail = cut < 48;
    check.Expect(m.trajectory.NumRegistered() == static_cast<std::size_t>(cut),
                 std::to_string(m.trajectory.NumRegistered()) + " registered at cut " +
                     std::to_string(cut));
    check.Expect(m.failed == should_fail, "cut " + std::to_string(cut) + " failed=" +
                                              std::to_string(m.failed));
    check.Expect(m.trajectory.RegisteredFraction() == static_cast<double>(cut) / 60.0,
                 "registered fraction is not count/total");
    boundary += std::to_string(cut) + "/60 -> " + (m.failed ? "FAILED" : "ok") + " ";
  }

  std::mt19937_64 rng(83);
  // Nearest-neighbor fill with ties to the earlier frame.
  std::vector<Pose> poses;
  Trajectory pred;
  for (int f = 0; f < 10; ++f) {
    poses.push_back(oracle::RandomPose(rng));
    pred.Append(f, f == 2 || f == 6 ? std::optional<Pose>(poses[f]) : std::nullopt);
  }
  const Trajectory filled = FillTrajectory(pred, 10);
  const int nearest[] = {2, 2, 2, 2, 2, 6, 6, 6, 6, 6};
  for (int f = 0; f < 10; ++f) {
    check.Expect(SamePose(*filled.frames()[f].pose, poses[nearest[f]]),
                 "nearest fill wrong at frame " + std::to_string(f));
  }
  // Identity fill when nothing registered.
  Trajectory empty;
  for (int f = 0; f < 5; ++f) empty.Append(f, std::nullopt);
  for (const auto& f : FillTrajectory(empty, 5).frames()) {
    check.Expect(SamePose(*f.pose, Pose::Identity()), "identity fill wrong");
  }
  // Random fill: deterministic per seed, identity rotations, translations in
  // [-1, 1]^3.
  const Trajectory r1 = RandomFill(500, 7);
  const Trajectory r2 = RandomFill(500, 7);
  const Trajectory r3 = RandomFill(500, 8);
  bool same = true;
  bool differs = false;
  for (std::size_t i = 0; i < r1.size(); ++i) {
    const Pose& p = *r1.frames()[i].pose;
    same = same && SamePose(p, *r2.frames()[i].pose);
    differs = differs || !SamePose(p, *r3.frames()[i].pose);
    check.Expect(p.rotation().coeffs() == Eigen::Quaterniond::Identity().coeffs() &&
                     p.translation().cwiseAbs().maxCoeff() <= 1.0,
                 "random fill pose out of range");
  }
  check.Expect(same, "random fill not deterministic");
  check.Expect(differs, "random fill ignores the seed");
  return check.Done(boundary + "; nearest, identity and random fill checked");
}

// ---- format round-trips ---------------------------------------------------

template <typename Fn>
std::optional<ParseError> Catch(Fn&& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e;
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return std::nullopt;
}

// Replaces line `n` (0-based) of a text document.
std::string ReplaceLine(const std::string& text, std::size_t n, const std::string& with) {
  std::istringstream in(text);
  std::string line;
  std::string out;
  for (std::size_t i = 0; std::getline(in, line); ++i) out += (i == n ? with : line) + "\n";
  return out;
}

Outcome FormatRoundTrips() {
  Check check;
  std::mt19937_64 rng(91);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int instances = 0;
  int errors = 0;
  auto expect_line = [&](const std::optional<ParseError>& e, std::size_t line, const char* what) {
    ++errors;
    check.Expect(e && e->unit() == ParseError::Unit::kLine && e->position() == line,
                 std::string(what) + " error not at line " + std::to_string(line));
  };
  auto expect_offset = [&](const std::optional<ParseError>& e, std::size_t offset, const char* what) {
    ++errors;
    check.Expect(e && e->unit() == ParseError::Unit::kByteOffset && e->position() == offset,
                 std::string(what) + " error not at offset " + std::to_string(offset));
  };

  for (int trial = 0; trial < 25; ++trial) {
    // Trajectory: values exact to 9 significant digits.
    TrajectoryFile traj;
    traj.trajectory = Trajectory(12.0);
    const int n = 5 + static_cast<int>(rng() % 30);
    for (int f = 0; f < n; ++f) {
      traj.trajectory.Append(f, rng() % 5 == 0 ? std::nullopt
                                               : std::optional<Pose>(oracle::RandomPose(rng, 10.0)));
    }
    const std::string traj_text = FormatTrajectory(traj);
    const TrajectoryFile traj_back = ParseTrajectory(traj_text);
    // Parsing renormalizes quaternions, so the text may move in the ninth
    // digit; values must agree to the printed precision.
    bool traj_ok = traj_back.trajectory.size() == traj.trajectory.size();
    for (std::size_t i = 0; traj_ok && i < traj.trajectory.size(); ++i) {
      const auto& a = traj.trajectory.frames()[i].pose;
      const auto& b = traj_back.trajectory.frames()[i].pose;
      traj_ok = a.has_value() == b.has_value() &&
                (!a || ((a->translation() - b->translation()).norm() < 1e-7 * 20 &&
                        RotationAngleDeg(a->R(), b->R()) < 1e-6));
    }
    check.Expect(traj_ok, "trajectory round trip");
    std::size_t lines = 0;
    for (char c : traj_text) lines += c == '\n';
    const std::size_t bad = lines - 1 - rng() % std::max<std::size_t>(1, lines - 8);
    expect_line(Catch([&] { ParseTrajectory(ReplaceLine(traj_text, bad, "7 1 2")); }), bad + 1,
                "trajectory");

    // Tracklets: exact.
    std::vector<Tracklet> tracklets;
    for (int i = 0; i < 6; ++i) tracklets.push_back(RandomTracklet(rng, i, 640, 360));
    const std::string tr_text = FormatTracklets(tracklets);
    const auto tr_back = ParseTracklets(tr_text);
    bool tr_ok = tr_back.size() == tracklets.size();
    for (std::size_t i = 0; tr_ok && i < tracklets.size(); ++i) {
      tr_ok = tr_back[i].points == tracklets[i].points &&
              tr_back[i].visible == tracklets[i].visible && tr_back[i].id == tracklets[i].id;
    }
    check.Expect(tr_ok && FormatTracklets(tr_back) == tr_text, "tracklet round trip");
    const std::size_t tr_bad = rng() % tracklets.size();
    expect_line(Catch([&] { ParseTracklets(ReplaceLine(tr_text, tr_bad, R"({"id": 1})")); }),
                tr_bad + 1, "tracklet");

    // Masks: bitwise.
    DynamicMask mask(trial, 1 + static_cast<int>(rng() % 50), 1 + static_cast<int>(rng() % 50));
    for (int y = 0; y < mask.height(); ++y) {
      for (int x = 0; x < mask.width(); ++x) mask.set(x, y, rng() % 2 == 0);
    }
    const std::string pgm = EncodeMaskPgm(mask);
    check.Expect(EncodeMaskPgm(DecodeMaskPgm(pgm, trial)) == pgm, "mask round trip");
    const std::size_t pgm_cut = pgm.size() - 1 - rng() % (mask.bits().size());
    expect_offset(Catch([&] { DecodeMaskPgm(pgm.substr(0, pgm_cut), trial); }), pgm_cut, "mask");

    // Flow: bitwise.
    FlowField flow(1 + static_cast<int>(rng() % 40), 1 + static_cast<int>(rng() % 40));
    for (float& v : flow.uv) v = static_cast<float>(50.0 * u(rng));
    const std::string dpfl = EncodeFlow(flow);
    const FlowField flow_back = DecodeFlow(dpfl);
    check.Expect(flow_back.uv.size() == flow.uv.size() &&
                     std::memcmp(flow_back.uv.data(), flow.uv.data(), 4 * flow.uv.size()) == 0 &&
                     EncodeFlow(flow_back) == dpfl,
                 "flow round trip");
    const std::size_t dpfl_cut = 12 + rng() % (dpfl.size() - 12);
    expect_offset(Catch([&] { DecodeFlow(dpfl.substr(0, dpfl_cut)); }), dpfl_cut, "flow");

    // Filter signals: exact.
    const FilterSignals sig = MakeFilterFixture(kAllFixtureKinds[trial % 8], trial);
    const std::string sig_text = FormatFilterSignals(sig);
    check.Expect(FormatFilterSignals(ParseFilterSignals(sig_text)) == sig_text, "signals round trip");
    const std::size_t sig_cut = 1 + rng() % (sig_text.size() - 3);
    const auto sig_err = Catch([&] { ParseFilterSignals(sig_text.substr(0, sig_cut)); });
    ++errors;
    check.Expect(sig_err && sig_err->unit() == ParseError::Unit::kByteOffset &&
                     sig_err->position() <= sig_cut,
                 "truncated signals not positioned");

    // Annotated pairs: exact.
    std::vector<AnnotatedPair> pairs;
    for (int i = 0; i < 8; ++i) {
      pairs.push_back({"video" + std::to_string(i % 3), i, i + 1 + static_cast<int>(rng() % 9),
                       {1280 * u(rng), 720 * u(rng)}, {1280 * u(rng), 720 * u(rng)}});
    }
    const std::string pair_text = FormatAnnotatedPairs(pairs);
    const auto pairs_back = ParseAnnotatedPairs(pair_text);
    bool pairs_ok = pairs_back.size() == pairs.size();
    for (std::size_t i = 0; pairs_ok && i < pairs.size(); ++i) {
      pairs_ok = pairs_back[i].point_a == pairs[i].point_a &&
                 pairs_back[i].point_b == pairs[i].point_b &&
                 pairs_back[i].frame_b == pairs[i].frame_b && pairs_back[i].video == pairs[i].video;
    }
    check.Expect(pairs_ok, "pairs round trip");
    const std::size_t pair_bad = rng() % pairs.size();
    expect_line(Catch([&] { ParseAnnotatedPairs(ReplaceLine(pair_text, pair_bad, "[1, 2")); }),
                pair_bad + 1, "pairs");

    // Reports (CSV): exact, including quoting.
    CsvTable table;
    table.header = {"video", "value", "note"};
    for (int i = 0; i < 6; ++i) {
      table.rows.push_back({"v" + std::to_string(i), FormatNumber(1e3 * u(rng)),
                            i % 2 == 0 ? "a,\"b\"" : "plain"});
    }
    const std::string csv = FormatCsv(table);
    check.Expect(ParseCsv(csv) == table, "csv round trip");
    const std::size_t csv_bad = 1 + rng() % table.rows.size();
    expect_line(Catch([&] { ParseCsv(ReplaceLine(csv, csv_bad, "only,two")); }), csv_bad + 1, "csv");

    instances += 7;
  }
  return check.Done(std::to_string(instances) + " fuzzed instances over 7 formats, " +
                    std::to_string(errors) + " malformed inputs with positioned errors");
}

}  // namespace
}  // namespace dynpose

int main() {
  using namespace dynpose;
  int failed = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& run) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", name, out.detail.c_str(), s);
    std::fflush(stdout);
    failed += out.pass ? 0 : 1;
  };

  std::vector<SfmRun> runs;
  report("synthetic-sfm", [&] {
    runs = RunSfmScenes();
    return SyntheticSfm(runs);
  });
  report("masking-ablation", [&] {
    if (runs.size() != 20) return Outcome{false, "SfM runs unavailable"};
    return MaskingAblation(runs);
  });
  report("sampson-machinery", SampsonMachinery);
  report("metric-invariances", MetricInvariances);
  report("filter-cascade", FilterCascade);
  report("pr-ap", PrAp);
  report("correspondence-extraction", CorrespondenceExtraction);
  report("registration-rules", RegistrationRules);
  report("format-round-trips", FormatRoundTrips);
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
