#include "dynpose/synthbench.h"

#include <gtest/gtest.h>

#include <set>

#include "dynpose/error.h"
#include "oracles.h"

namespace dynpose {
namespace {

SceneConfig Config(TrajectoryKind kind) {
  SceneConfig c;
  c.trajectory_kind = kind;
  return c;
}

TEST(GenSceneTest, SameSeedIsBitwiseIdentical) {
  for (auto kind : {TrajectoryKind::kOrbit, TrajectoryKind::kForwardArc, TrajectoryKind::kPan,
                    TrajectoryKind::kStatic, TrajectoryKind::kLinear}) {
    const SynthScene a = GenScene(17, Config(kind));
    const SynthScene b = GenScene(17, Config(kind));
    ASSERT_EQ(a.static_points.size(), b.static_points.size());
    for (std::size_t i = 0; i < a.static_points.size(); ++i) {
      EXPECT_EQ(a.static_points[i], b.static_points[i]);
    }
    ASSERT_EQ(a.dynamic_points.size(), b.dynamic_points.size());
    for (std::size_t i = 0; i < a.dynamic_points.size(); ++i) {
      EXPECT_EQ(a.dynamic_points[i].base, b.dynamic_points[i].base);
      EXPECT_EQ(a.dynamic_points[i].velocity, b.dynamic_points[i].velocity);
    }
    for (int f = 0; f < a.num_frames(); ++f) {
      EXPECT_EQ(a.PoseAt(f).rotation().coeffs(), b.PoseAt(f).rotation().coeffs());
      EXPECT_EQ(a.PoseAt(f).translation(), b.PoseAt(f).translation());
    }
    const SynthScene c = GenScene(18, Config(kind));
    EXPECT_NE(a.static_points.front(), c.static_points.front());
  }
}

TEST(GenSceneTest, RequestedCountsAndVisibility) {
  const SynthScene s = GenScene(1, Config(TrajectoryKind::kOrbit));
  EXPECT_EQ(s.static_points.size(), 140u);
  EXPECT_EQ(s.dynamic_points.size(), 60u);
  for (const auto& x : s.static_points) {
    int visible = 0;
    for (int f = 0; f < s.num_frames(); ++f) visible += IsVisible(s, f, x) ? 1 : 0;
    EXPECT_GE(visible, 0.6 * s.num_frames());
  }
  for (std::size_t i = 0; i < s.dynamic_points.size(); ++i) {
    int visible = 0;
    for (int f = 0; f < s.num_frames(); ++f) {
      visible += IsVisible(s, f, s.DynamicPosition(i, f)) ? 1 : 0;
    }
    EXPECT_GE(visible, 0.6 * s.num_frames());
  }
}

TEST(GenSceneTest, StaticTrajectoryHasEqualPoses) {
  const SynthScene s = GenScene(2, Config(TrajectoryKind::kStatic));
  for (int f = 1; f < s.num_frames(); ++f) {
    EXPECT_EQ(s.PoseAt(f).rotation().coeffs(), s.PoseAt(0).rotation().coeffs());
    EXPECT_EQ(s.PoseAt(f).translation(), s.PoseAt(0).translation());
  }
}

TEST(GenSceneTest, OrbitCentersOnCircle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SynthScene s = GenScene(seed, Config(TrajectoryKind::kOrbit));
    ASSERT_GT(s.orbit_radius, 0.0);
    for (int f = 0; f < s.num_frames(); ++f) {
      EXPECT_NEAR((s.PoseAt(f).Center() - s.orbit_center).norm(), s.orbit_radius, 1e-12);
    }
  }
}

TEST(GenSceneTest, LinearCentersAreCollinear) {
  const SynthScene s = GenScene(3, Config(TrajectoryKind::kLinear));
  const Vector3d c0 = s.PoseAt(0).Center();
  const Vector3d dir = (s.PoseAt(s.num_frames() - 1).Center() - c0).normalized();
  for (int f = 0; f < s.num_frames(); ++f) {
    EXPECT_LT((s.PoseAt(f).Center() - c0).cross(dir).norm(), 1e-12);
  }
}

TEST(GenSceneTest, KindNamesRoundTrip) {
  for (auto kind : {TrajectoryKind::kOrbit, TrajectoryKind::kForwardArc, TrajectoryKind::kPan,
                    TrajectoryKind::kStatic, TrajectoryKind::kLinear}) {
    EXPECT_EQ(ParseTrajectoryKind(TrajectoryKindName(kind)), kind);
  }
  EXPECT_FALSE(ParseTrajectoryKind("helix"));
  for (auto kind : kAllFixtureKinds) EXPECT_EQ(ParseFixtureKind(FixtureKindName(kind)), kind);
  EXPECT_FALSE(ParseFixtureKind("blurry"));
}

TEST(GenSceneTest, RejectsInvalidConfig) {
  SceneConfig c;
  c.num_frames = 0;
  EXPECT_THROW(GenScene(0, c), Error);
}

TEST(VisibilityTest, PointBehindCameraIsInvisible) {
  const SynthScene s = GenScene(4, Config(TrajectoryKind::kForwardArc));
  const Pose& p = s.PoseAt(0);
  const Vector3d axis = p.R().row(2).transpose();
  EXPECT_TRUE(IsVisible(s, 0, p.Center() + 3.0 * axis));
  EXPECT_FALSE(IsVisible(s, 0, p.Center() - 3.0 * axis));
}

TEST(ProjectTracksTest, NoiselessTracksTriangulateExactly) {
  const SynthScene s = GenScene(5, Config(TrajectoryKind::kOrbit));
  const SynthTracks tr = ProjectTracks(s, TrackOptions{}, 9);
  ASSERT_EQ(tr.tracklets.size(), tr.dynamic.size());
  int checked = 0;
  for (std::size_t i = 0; i < tr.tracklets.size() && checked < 200; ++i) {
    if (tr.dynamic[i]) continue;
    const Tracklet& t = tr.tracklets[i];
    std::vector<std::int64_t> vis;
    for (std::int64_t f = t.start_frame; f < t.end_frame(); ++f) {
      if (t.VisibleAt(f)) vis.push_back(f);
    }
    if (vis.size() < 2) continue;
    const std::int64_t a = vis.front();
    const std::int64_t b = vis.back();
    if ((s.PoseAt(a).Center() - s.PoseAt(b).Center()).norm() < 0.2) continue;
    const Triangulation x = Triangulate(s.PoseAt(a), s.PoseAt(b), s.intrinsics, t.At(a), t.At(b));
    for (std::int64_t f : vis) {
      EXPECT_LT((Project(s.intrinsics, s.PoseAt(f), x.point) - t.At(f)).norm(), 1e-9);
    }
    ++checked;
  }
  EXPECT_GT(checked, 50);
}

TEST(ProjectTracksTest, WindowsAndLabels) {
  const SynthScene s = GenScene(6, Config(TrajectoryKind::kPan));
  TrackOptions o;
  o.window_stride = 10;
  o.window_length = 15;
  const SynthTracks tr = ProjectTracks(s, o, 1);
  std::set<std::int64_t> ids;
  std::size_t dynamic = 0;
  for (std::size_t i = 0; i < tr.tracklets.size(); ++i) {
    const Tracklet& t = tr.tracklets[i];
    EXPECT_EQ(t.start_frame % 10, 0);
    EXPECT_EQ(t.points.size(), std::min<std::size_t>(15, s.num_frames() - t.start_frame));
    EXPECT_TRUE(t.visible.front());
    EXPECT_TRUE(ids.insert(t.id).second);
    dynamic += tr.dynamic[i] ? 1 : 0;
  }
  EXPECT_GT(dynamic, 0u);
  EXPECT_EQ(tr.masks.size(), static_cast<std::size_t>(s.num_frames()));
}

TEST(ProjectTracksTest, MasksAreDisksAroundDynamicPoints) {
  const SynthScene s = GenScene(7, Config(TrajectoryKind::kForwardArc));
  TrackOptions o;
  o.mask_radius_px = 5.0;
  const SynthTracks tr = ProjectTracks(s, o, 2);
  for (int f : {0, 17, 59}) {
    const DynamicMask& m = tr.masks[f];
    std::vector<Vector2d> centers;
    for (std::size_t i = 0; i < s.dynamic_points.size(); ++i) {
      const Vector3d x = s.DynamicPosition(i, f);
      if (IsVisible(s, f, x)) centers.push_back(Project(s.intrinsics, s.PoseAt(f), x));
    }
    ASSERT_FALSE(centers.empty());
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        bool inside = false;
        for (const auto& c : centers) {
          inside |= (Vector2d(x, y) - c).squaredNorm() <= 25.0;
        }
        ASSERT_EQ(m.at(x, y), inside) << f << " " << x << "," << y;
      }
    }
  }
}

TEST(ProjectTracksTest, NoiseOnlyOnVisibleObservations) {
  const SynthScene s = GenScene(8, Config(TrajectoryKind::kOrbit));
  TrackOptions o;
  o.noise_px = 0.5;
  const SynthTracks noisy = ProjectTracks(s, o, 3);
  const SynthTracks exact = ProjectTracks(s, TrackOptions{}, 3);
  ASSERT_EQ(noisy.tracklets.size(), exact.tracklets.size());
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < exact.tracklets.size(); ++i) {
    const Tracklet& a = exact.tracklets[i];
    const Tracklet& b = noisy.tracklets[i];
    for (std::size_t k = 0; k < a.points.size(); ++k) {
      if (!a.visible[k]) continue;
      sum += (a.points[k] - b.points[k]).squaredNorm();
      ++n;
    }
  }
  // Per-axis sigma recovered within 5%.
  EXPECT_NEAR(std::sqrt(sum / (2.0 * n)), 0.5, 0.025);
}

TEST(RasterizeDiskTest, MatchesPixelLoop) {
  for (double r : {0.0, 1.0, 2.5, 6.0}) {
    DynamicMask m(0, 20, 20);
    const Vector2d c(3.3, 17.8);
    RasterizeDisk(m, c, r);
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 20; ++x) {
        EXPECT_EQ(m.at(x, y), (Vector2d(x, y) - c).squaredNorm() <= r * r);
      }
    }
  }
}

TEST(FlowTest, FlowIntegratesToTrackDisplacement) {
  const SynthScene s = GenScene(9, Config(TrajectoryKind::kOrbit));
  const SynthTracks tr = ProjectTracks(s, TrackOptions{}, 4);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < tr.tracklets.size(); i += 7) {
    const Tracklet& t = tr.tracklets[i];
    for (std::int64_t f = t.start_frame; f + 1 < t.end_frame(); ++f) {
      if (!t.VisibleAt(f) || !t.VisibleAt(f + 1)) continue;
      // Static tracks take the backdrop flow even next to a sprite.
      const double radius = tr.dynamic[i] ? 6.0 : 0.0;
      const Vector2d flow = FlowAt(s, f, f + 1, t.At(f), radius);
      EXPECT_LT((t.At(f) + flow - t.At(f + 1)).norm(), 1e-9);
      ++checked;
    }
  }
  EXPECT_GT(checked, 500u);
}

TEST(FlowTest, RenderMatchesPointwiseFlow) {
  SceneConfig c = Config(TrajectoryKind::kPan);
  c.width = 64;
  c.height = 48;
  c.focal = 60.0;
  const SynthScene s = GenScene(10, c);
  const FlowField flow = RenderFlow(s, 3, 4);
  EXPECT_EQ(flow.frame_from, 3);
  EXPECT_EQ(flow.frame_to, 4);
  for (int y = 0; y < 48; y += 5) {
    for (int x = 0; x < 64; x += 5) {
      const Vector2d expected = FlowAt(s, 3, 4, Vector2d(x, y));
      EXPECT_NEAR(flow.At(x, y).x(), expected.x(), 1e-4);
      EXPECT_NEAR(flow.At(x, y).y(), expected.y(), 1e-4);
    }
  }
}

TEST(AnnotatedPairsTest, WithinGapAnd720pScaled) {
  const SynthScene s = GenScene(11, Config(TrajectoryKind::kOrbit));
  const auto pairs = SampleAnnotatedPairs(s, "v", 100, 30, 5);
  ASSERT_EQ(pairs.size(), 100u);
  for (const auto& p : pairs) {
    EXPECT_LE(p.frame_b - p.frame_a, 30);
    EXPECT_GT(p.frame_b, p.frame_a);
    EXPECT_LE(p.point_a.y(), 720.0);
    EXPECT_LE(p.point_b.x(), 1280.0);
  }
}

// Components each fixture kind is built to fail.
std::set<FilterComponent> Tripped(FixtureKind kind) {
  switch (kind) {
    case FixtureKind::kGood: return {};
    case FixtureKind::kStaticCamera: return {FilterComponent::kFlow, FilterComponent::kTracking};
    case FixtureKind::kStaticScene: return {FilterComponent::kClassifier, FilterComponent::kVlm};
    case FixtureKind::kShotChange: return {FilterComponent::kFlow, FilterComponent::kTracking};
    case FixtureKind::kZoomIn: return {FilterComponent::kFocal};
    case FixtureKind::kLongFocal: return {FilterComponent::kFocal, FilterComponent::kVlm};
    case FixtureKind::kHugeMask: return {FilterComponent::kMasking};
    case FixtureKind::kDistorted: return {FilterComponent::kDistortion};
  }
  return {};
}

TEST(FilterFixtureTest, EachKindTripsItsComponents) {
  for (auto kind : kAllFixtureKinds) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const FilterSignals s = MakeFilterFixture(kind, seed);
      ASSERT_TRUE(s.label.has_value());
      EXPECT_EQ(*s.label, kind == FixtureKind::kGood);
      const FilterScore score = ScoreAvailable(s);
      EXPECT_EQ(score.NumPresent(), 7u);
      const auto tripped = Tripped(kind);
      for (auto c : kAllFilterComponents) {
        if (tripped.count(c)) {
          EXPECT_LT(*score[c], 0.9) << FixtureKindName(kind) << " " << ComponentName(c);
        } else {
          EXPECT_GT(*score[c], 1.0 - 1e-6) << FixtureKindName(kind) << " " << ComponentName(c);
        }
      }
      EXPECT_EQ(RunCascade(s).include, *s.label);
    }
  }
}

TEST(FilterFixtureTest, ShotChangeAndLongFocalSignals) {
  const FilterSignals shot = MakeFilterFixture(FixtureKind::kShotChange, 3);
  const auto& f = *shot.flow_seq;
  const double mean = oracle::SeriesMean(f);
  double ss = 0.0;
  for (double x : f) ss += (x - mean) * (x - mean);
  const double sigma = std::sqrt(ss / f.size());
  EXPECT_GT(*std::max_element(f.begin(), f.end()), mean + 4.0 * sigma);
  EXPECT_GT(*std::max_element(shot.track_loss_seq->begin(), shot.track_loss_seq->end()), 0.5);

  const FilterSignals longf = MakeFilterFixture(FixtureKind::kLongFocal, 3);
  EXPECT_EQ(Percentile(*longf.focal_seq, 80), 1600.0);
  EXPECT_FALSE(*longf.label);
}

}  // namespace
}  // namespace dynpose
