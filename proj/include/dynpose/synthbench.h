#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dynpose/evalmetrics.h"
#include "dynpose/filtering.h"
#include "dynpose/geometry.h"
#include "dynpose/masking.h"
#include "dynpose/tracking.h"

namespace dynpose {

enum class TrajectoryKind { kOrbit, kForwardArc, kPan, kStatic, kLinear };

std::string_view TrajectoryKindName(TrajectoryKind kind);
// Accepts the names above ("orbit", "forward-arc", ...).
std::optional<TrajectoryKind> ParseTrajectoryKind(std::string_view name);

enum class MotionModel { kLinear, kSinusoidal };

struct DynamicPoint {
  Vector3d base = Vector3d::Zero();
  // Initial velocity in scene units per second.
  Vector3d velocity = Vector3d::Zero();
  MotionModel model = MotionModel::kLinear;
  // Angular frequency of the sinusoidal model, rad/s.
  double omega = 1.0;

  Vector3d PositionAt(double seconds) const;
};

struct SceneConfig {
  int n_static = 140;
  int n_dynamic = 60;
  TrajectoryKind trajectory_kind = TrajectoryKind::kOrbit;
  int num_frames = 60;
  double fps = 12.0;
  int width = 640;
  int height = 360;
  double focal = 500.0;
  // Points must be visible in at least this fraction of frames.
  double min_visible_fraction = 0.6;
};

// The static backdrop is the boundary of the ball |X| <= kBackdropRadius cut
// by the ground plane Y = kGroundHeight (image y points along +Y, so the
// ground is below the cameras). The region is convex and cameras stay inside
// it, so every viewing ray hits the backdrop exactly once.
inline constexpr double kBackdropRadius = 10.0;
inline constexpr double kGroundHeight = 1.5;

struct SynthScene {
  std::uint64_t seed = 0;
  SceneConfig config;
  std::vector<Vector3d> static_points;
  std::vector<DynamicPoint> dynamic_points;
  Trajectory gt_trajectory;
  CameraIntrinsics intrinsics;
  // Orbit center and radius for kOrbit; zero otherwise.
  Vector3d orbit_center = Vector3d::Zero();
  double orbit_radius = 0.0;

  int num_frames() const { return config.num_frames; }
  double fps() const { return config.fps; }
  const Pose& PoseAt(std::int64_t frame) const;
  Vector3d DynamicPosition(std::size_t point, std::int64_t frame) const;
};

SynthScene GenScene(std::uint64_t seed, const SceneConfig& config);

// True if the point is in front of the camera and projects inside the frame.
bool IsVisible(const SynthScene& scene, std::int64_t frame, const Vector3d& world);

struct TrackOptions {
  int window_stride = 5;
  int window_length = 30;
  double noise_px = 0.0;
  double mask_radius_px = 6.0;
};

struct SynthTracks {
  std::vector<Tracklet> tracklets;
  // Parallel to tracklets: true when the tracked point moves.
  std::vector<bool> dynamic;
  // One per frame: disks of mask_radius_px around every visible dynamic
  // point.
  std::vector<DynamicMask> masks;
};

// Tracklets are seeded from the points visible at each window start. A
// point that leaves the view keeps its last position and is flagged
// invisible. Noise is added to visible observations only.
SynthTracks ProjectTracks(const SynthScene& scene, const TrackOptions& options,
                          std::uint64_t seed);

// Disk of `radius` around `center`: pixels with squared distance <= radius^2.
void RasterizeDisk(DynamicMask& mask, const Vector2d& center, double radius);

// Exact displacement of pixel p from frame `from` to `to`. Pixels within
// mask_radius_px of a visible dynamic point move with the nearest such
// point; everything else follows the backdrop.
Vector2d FlowAt(const SynthScene& scene, std::int64_t from, std::int64_t to,
                const Vector2d& p, double mask_radius_px = 6.0);

// Dense flow evaluated at integer pixel positions.
FlowField RenderFlow(const SynthScene& scene, std::int64_t from, std::int64_t to,
                     double mask_radius_px = 6.0);

// Exact static-point correspondences between frames at most max_gap apart,
// in 720p-normalized pixels.
std::vector<AnnotatedPair> SampleAnnotatedPairs(const SynthScene& scene,
                                                const std::string& video,
                                                std::size_t count, int max_gap,
                                                std::uint64_t seed);

enum class FixtureKind {
  kGood,
  kStaticCamera,
  kStaticScene,
  kShotChange,
  kZoomIn,
  kLongFocal,
  kHugeMask,
  kDistorted,
};

inline constexpr std::array<FixtureKind, 8> kAllFixtureKinds = {
    FixtureKind::kGood,     FixtureKind::kStaticCamera, FixtureKind::kStaticScene,
    FixtureKind::kShotChange, FixtureKind::kZoomIn,     FixtureKind::kLongFocal,
    FixtureKind::kHugeMask, FixtureKind::kDistorted};

std::string_view FixtureKindName(FixtureKind kind);
std::optional<FixtureKind> ParseFixtureKind(std::string_view name);

// Indices into FilterSignals::vlm_answers used by the fixtures.
inline constexpr std::size_t kVlmStaticScene = 0;
inline constexpr std::size_t kVlmLongFocal = 5;

// Signals for one synthetic video; label is set (true = suitable).
FilterSignals MakeFilterFixture(FixtureKind kind, std::uint64_t seed);

}  // namespace dynpose
