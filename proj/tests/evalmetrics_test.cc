#include "dynpose/evalmetrics.h"

#include <gtest/gtest.h>

#include <random>

#include "dynpose/error.h"
#include "dynpose/synthbench.h"
#include "oracles.h"

namespace dynpose {
namespace {

using oracle::RandomPose;
using oracle::RandomRotation;

Trajectory RandomTrajectory(std::mt19937_64& rng, int n) {
  Trajectory t(12.0);
  for (int i = 0; i < n; ++i) t.Append(i, RandomPose(rng, 5.0));
  return t;
}

bool SamePose(const Pose& a, const Pose& b) {
  return a.rotation().coeffs() == b.rotation().coeffs() && a.translation() == b.translation();
}

TEST(FillTrajectoryTest, NearestNeighbor) {
  std::mt19937_64 rng(1);
  Trajectory pred;
  std::vector<Pose> poses;
  for (int i = 0; i < 8; ++i) {
    poses.push_back(RandomPose(rng));
    pred.Append(i, poses.back());
  }
  const Trajectory filled = FillTrajectory(pred, 10);
  ASSERT_EQ(filled.size(), 10u);
  EXPECT_TRUE(filled.Complete());
  for (int i = 0; i < 8; ++i) EXPECT_TRUE(SamePose(*filled.frames()[i].pose, poses[i]));
  EXPECT_TRUE(SamePose(*filled.frames()[8].pose, poses[7]));
  EXPECT_TRUE(SamePose(*filled.frames()[9].pose, poses[7]));
}

TEST(FillTrajectoryTest, TiesGoToEarlierFrame) {
  std::mt19937_64 rng(2);
  const Pose a = RandomPose(rng);
  const Pose b = RandomPose(rng);
  Trajectory pred;
  pred.Append(1, a);
  pred.Append(2, std::nullopt);
  pred.Append(3, b);
  const Trajectory filled = FillTrajectory(pred, 5);
  EXPECT_TRUE(SamePose(*filled.frames()[0].pose, a));
  EXPECT_TRUE(SamePose(*filled.frames()[2].pose, a));
  EXPECT_TRUE(SamePose(*filled.frames()[4].pose, b));
}

TEST(FillTrajectoryTest, NothingRegisteredGivesIdentity) {
  Trajectory pred;
  for (int i = 0; i < 10; ++i) pred.Append(i, std::nullopt);
  const Trajectory filled = FillTrajectory(pred, 10);
  ASSERT_EQ(filled.size(), 10u);
  for (const auto& f : filled.frames()) {
    EXPECT_TRUE(SamePose(*f.pose, Pose::Identity()));
  }
  EXPECT_EQ(FillTrajectory(Trajectory(), 3).size(), 3u);
}

TEST(FillTrajectoryTest, RegisteredPosesUntouched) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution keep(0.5);
  for (int trial = 0; trial < 50; ++trial) {
    Trajectory pred;
    for (int i = 0; i < 30; ++i) {
      pred.Append(i, keep(rng) ? std::optional<Pose>(RandomPose(rng)) : std::nullopt);
    }
    const Trajectory full = FillTrajectory(pred, 30);
    for (int i = 0; i < 30; ++i) {
      if (pred.frames()[i].pose) {
        EXPECT_TRUE(SamePose(*pred.frames()[i].pose, *full.frames()[i].pose));
      }
    }
  }
}

TEST(RandomFillTest, DeterministicIdentityRotationsUniformTranslations) {
  const Trajectory a = RandomFill(100000, 42);
  const Trajectory b = RandomFill(100000, 42);
  Vector3d mean = Vector3d::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Pose& p = *a.frames()[i].pose;
    ASSERT_TRUE(SamePose(p, *b.frames()[i].pose));
    ASSERT_EQ(p.rotation().coeffs(), Eigen::Quaterniond::Identity().coeffs());
    ASSERT_LE(p.translation().cwiseAbs().maxCoeff(), 1.0);
    mean += p.translation();
  }
  mean /= static_cast<double>(a.size());
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 0.02);
  EXPECT_FALSE(SamePose(*RandomFill(5, 43).frames()[0].pose, *a.frames()[0].pose));
}

TEST(AteTest, ZeroForIdenticalAndSimilarityTransformed) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Trajectory gt = RandomTrajectory(rng, 30);
    EXPECT_LT(Ate(gt, gt), 1e-12);
    Similarity s;
    s.scale = 0.2 + 3.0 * std::uniform_real_distribution<double>(0, 1)(rng);
    s.rotation = RandomRotation(rng);
    s.translation = Vector3d(3, -7, 11);
    EXPECT_LT(Ate(gt, s.Apply(gt)), 1e-9);
  }
}

TEST(AteTest, IsotropicNoiseMonteCarlo) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.05);
  Trajectory gt;
  Trajectory pred;
  for (int i = 0; i < 10000; ++i) {
    const Pose p = RandomPose(rng, 10.0);
    gt.Append(i, p);
    pred.Append(i, Pose::FromCenter(p.R().transpose(),
                                    p.Center() + Vector3d(n(rng), n(rng), n(rng))));
  }
  EXPECT_NEAR(Ate(gt, pred), 0.05 * std::sqrt(3.0), 0.1 * 0.05 * std::sqrt(3.0));
}

TEST(AteTest, RejectsMismatchedTrajectories) {
  std::mt19937_64 rng(6);
  const Trajectory a = RandomTrajectory(rng, 5);
  const Trajectory b = RandomTrajectory(rng, 6);
  EXPECT_THROW(Ate(a, b), Error);
  Trajectory c;
  for (int i = 0; i < 5; ++i) c.Append(i, i == 2 ? std::nullopt : a.frames()[i].pose);
  EXPECT_THROW(Ate(a, c), Error);
}

TEST(RpeTest, IdenticalIsZero) {
  std::mt19937_64 rng(7);
  const Trajectory gt = RandomTrajectory(rng, 20);
  const RpeResult r = Rpe(gt, gt);
  EXPECT_LT(r.trans, 1e-9);
  EXPECT_LT(r.rot_deg, 1e-6);
}

TEST(RpeTest, FixedTwistCancelsInRelativeRotations) {
  std::mt19937_64 rng(8);
  const Trajectory gt = RandomTrajectory(rng, 20);
  const Matrix3d twist = Eigen::AngleAxisd(M_PI / 180.0, Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  Trajectory pred;
  for (const auto& f : gt.frames()) pred.Append(f.index, Pose(f.pose->R() * twist, f.pose->translation()));
  EXPECT_LT(Rpe(gt, pred, false).rot_deg, 1e-6);

  // A world rotation is a similarity, so RPE rotation is unchanged with or
  // without alignment.
  Similarity s;
  s.rotation = RandomRotation(rng);
  const Trajectory noisy = [&] {
    Trajectory t;
    for (const auto& f : gt.frames()) {
      const Matrix3d jitter = Eigen::AngleAxisd(0.02, oracle::RandomRotation(rng).col(0)).toRotationMatrix();
      t.Append(f.index, Pose(jitter * f.pose->R(), f.pose->translation()));
    }
    return t;
  }();
  EXPECT_NEAR(Rpe(gt, noisy, false).rot_deg, Rpe(gt, s.Apply(noisy), false).rot_deg, 1e-9);
}

TEST(RpeTest, OneCorruptedPoseTouchesTwoPairs) {
  std::mt19937_64 rng(9);
  const Trajectory gt = RandomTrajectory(rng, 11);
  const double theta = 3.0;
  const Matrix3d q = Eigen::AngleAxisd(theta * M_PI / 180.0, Vector3d::UnitZ()).toRotationMatrix();
  Trajectory pred;
  for (const auto& f : gt.frames()) {
    pred.Append(f.index, f.index == 5 ? Pose(q * f.pose->R(), f.pose->translation()) : *f.pose);
  }
  // Pairs (4,5) and (5,6) each differ by exactly theta; the other eight by 0.
  EXPECT_NEAR(Rpe(gt, pred, false).rot_deg, 2.0 * theta / 10.0, 1e-9);
}

TEST(EvaluateTrajectoryTest, FillsAndReportsFraction) {
  std::mt19937_64 rng(10);
  const Trajectory gt = RandomTrajectory(rng, 10);
  Trajectory pred;
  for (const auto& f : gt.frames()) pred.Append(f.index, f.index < 8 ? f.pose : std::nullopt);
  const TrajectoryReport r = EvaluateTrajectory(gt, pred);
  EXPECT_DOUBLE_EQ(r.registered_fraction, 0.8);
  EXPECT_GT(r.ate, 0.0);
  const TrajectoryReport same = EvaluateTrajectory(gt, gt);
  EXPECT_LT(same.ate, 1e-9);
  EXPECT_DOUBLE_EQ(same.registered_fraction, 1.0);
}

TEST(SampsonEvalTest, IdentityPoseUsesPointDistance) {
  Trajectory pred;
  pred.Append(0, Pose::Identity());
  pred.Append(1, Pose::Identity());
  CameraIntrinsics k;
  k.fx = k.fy = 700.0;
  k.cx = 640.0;
  k.cy = 360.0;
  k.width = 1280.0;
  k.height = 720.0;
  AnnotatedPair pair;
  pair.video = "v";
  pair.frame_a = 0;
  pair.frame_b = 1;
  pair.point_a = {100, 100};
  pair.point_b = {110, 100};
  EXPECT_DOUBLE_EQ(PairReprojectionError(pred, Normalize720(k), pair), 10.0);
}

TEST(SampsonEvalTest, ExactPosesGiveZeroError) {
  SceneConfig config;
  const SynthScene scene = GenScene(3, config);
  const auto pairs = SampleAnnotatedPairs(scene, "synth", 200, 30, 1);
  ASSERT_EQ(pairs.size(), 200u);
  const double mean = VideoReprojectionError(scene.gt_trajectory, scene.intrinsics, pairs);
  EXPECT_LT(mean, 1e-6);
}

TEST(SampsonEvalTest, MatchesSqrtOfNaiveSampson) {
  std::mt19937_64 rng(11);
  CameraIntrinsics k;
  k.fx = k.fy = 300.0;
  k.cx = 320.0;
  k.cy = 180.0;
  k.width = 640.0;
  k.height = 360.0;
  Trajectory pred;
  pred.Append(0, RandomPose(rng));
  pred.Append(1, RandomPose(rng));
  std::uniform_real_distribution<double> px(0.0, 720.0);
  const CameraIntrinsics k720 = Normalize720(k);
  const Matrix3d f = FundamentalFromRelativePose(
      k720, k720, RelativePose(*pred.frames()[0].pose, *pred.frames()[1].pose)).matrix;
  for (int i = 0; i < 100; ++i) {
    AnnotatedPair p{"v", 0, 1, {px(rng), px(rng)}, {px(rng), px(rng)}};
    const double expected = std::sqrt(oracle::NaiveSampson(
        f, p.point_a.x(), p.point_a.y(), p.point_b.x(), p.point_b.y()));
    EXPECT_NEAR(PairReprojectionError(pred, k720, p), expected, 1e-9 * std::max(1.0, expected));
  }
}

TEST(SampsonEvalTest, ReportPerVideoAndThresholds) {
  SceneConfig config;
  const SynthScene scene = GenScene(5, config);
  std::vector<AnnotatedPair> pairs = SampleAnnotatedPairs(scene, "exact", 50, 30, 2);
  // A second video evaluated with identity poses everywhere.
  Trajectory identity;
  identity.Append(0, Pose::Identity());
  for (auto p : SampleAnnotatedPairs(scene, "lazy", 50, 30, 3)) pairs.push_back(p);

  const std::map<std::string, Trajectory> preds = {{"exact", scene.gt_trajectory},
                                                   {"lazy", identity}};
  const std::map<std::string, CameraIntrinsics> ks = {{"exact", scene.intrinsics},
                                                      {"lazy", scene.intrinsics}};
  for (const std::vector<double>& th :
       {std::vector<double>{5, 10, 30}, std::vector<double>{15, 30, 60},
        std::vector<double>{1e-3, 1.0, 1e6, 1e9}}) {
    const SampsonReport r = SampsonEval(preds, ks, pairs, th);
    ASSERT_EQ(r.videos.size(), 2u);
    EXPECT_EQ(r.accuracies.size(), th.size());
    EXPECT_EQ(r.videos[0].video, "exact");
    EXPECT_EQ(r.videos[0].num_pairs, 50u);
    EXPECT_LT(r.videos[0].mean_error, 1e-6);
    EXPECT_GT(r.videos[1].mean_error, 1.0);
    for (std::size_t i = 1; i < th.size(); ++i) EXPECT_GE(r.accuracies[i], r.accuracies[i - 1]);
  }
  EXPECT_EQ(ThresholdAccuracies(std::vector<double>{1.0, 4.0, 7.0},
                                std::vector<double>{4.0, 5.0}),
            (std::vector<double>{1.0 / 3.0, 2.0 / 3.0}));
}

TEST(SampsonEvalTest, ErrorCases) {
  CameraIntrinsics k;
  k.height = 720.0;
  Trajectory t;
  t.Append(0, Pose::Identity());
  try {
    VideoReprojectionError(t, k, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoPairs);
  }
  const std::vector<AnnotatedPair> pairs = {AnnotatedPair{"missing", 0, 0, {}, {}}};
  EXPECT_THROW(SampsonEval({}, {}, pairs, DefaultSampsonThresholds()), Error);
  EXPECT_EQ(DefaultSampsonThresholds(), (std::vector<double>{5, 10, 30}));
}

TEST(Normalize720Test, ScalesBothAxes) {
  CameraIntrinsics k;
  k.fx = 500;
  k.fy = 510;
  k.cx = 320;
  k.cy = 180;
  k.width = 640;
  k.height = 360;
  const CameraIntrinsics n = Normalize720(k);
  EXPECT_DOUBLE_EQ(n.height, 720.0);
  EXPECT_DOUBLE_EQ(n.width, 1280.0);
  EXPECT_DOUBLE_EQ(n.fx, 1000.0);
  EXPECT_DOUBLE_EQ(n.fy, 1020.0);
  EXPECT_DOUBLE_EQ(n.cx, 640.0);
}

TEST(CorrespondenceGateTest, TenPixelRule) {
  const AnnotatedPair human{"v", 0, 5, {100, 100}, {200, 200}};
  const std::vector<PointMatch> accepted = {{{103, 100}, {200, 207}}};
  const auto a = CorrespondenceGate(human, accepted);
  ASSERT_TRUE(a);
  EXPECT_EQ(a->point_a, Vector2d(103, 100));
  EXPECT_EQ(a->frame_b, 5);

  const std::vector<PointMatch> rejected = {{{103, 100}, {200, 212}}};
  EXPECT_FALSE(CorrespondenceGate(human, rejected));

  const std::vector<PointMatch> two = {{{106, 100}, {200, 206}},
                                       {{102, 100}, {200, 203}},
                                       {{150, 100}, {200, 200}}};
  EXPECT_EQ(CorrespondenceGate(human, two)->point_b, Vector2d(200, 203));
}

}  // namespace
}  // namespace dynpose
