#include "dynpose/synthbench.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "dynpose/error.h"

namespace dynpose {
namespace {

using Rng = std::mt19937_64;

double Uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Matrix3d YawRotation(double yaw) {
  return Eigen::AngleAxisd(yaw, Vector3d::UnitY()).toRotationMatrix();
}

// Camera looking along `forward` with image y pointing towards -Y.
Pose LookAlong(const Vector3d& center, const Vector3d& forward) {
  const Vector3d z = forward.normalized();
  const Vector3d x = Vector3d(0, -1, 0).cross(z).normalized();
  const Vector3d y = z.cross(x);
  Matrix3d c2w;
  c2w.col(0) = x;
  c2w.col(1) = y;
  c2w.col(2) = z;
  return Pose::FromCenter(c2w, center);
}

Trajectory MakeTrajectory(const SceneConfig& config, Rng& rng, SynthScene& scene) {
  Trajectory traj(config.fps);
  const int n = config.num_frames;
  const double heading = Uniform(rng, -std::numbers::pi, std::numbers::pi);
  const Matrix3d yaw = YawRotation(heading);
  const double sign = Uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
  // Downward tilt so the ground fills the lower part of the view.
  const Vector3d tilt(0.0, std::tan(Uniform(rng, 0.15, 0.3)), 0.0);

  switch (config.trajectory_kind) {
    case TrajectoryKind::kOrbit: {
      scene.orbit_radius = 4.0;
      scene.orbit_center = Vector3d(0.0, Uniform(rng, -0.5, 0.5), 0.0);
      const double sweep = sign * Uniform(rng, 0.8, 1.4);
      for (int f = 0; f < n; ++f) {
        const double t = n > 1 ? static_cast<double>(f) / (n - 1) : 0.0;
        const double theta = heading + sweep * t;
        const Vector3d c = scene.orbit_center +
                           scene.orbit_radius *
                               Vector3d(std::cos(theta), 0.0, std::sin(theta));
        traj.Append(f, LookAlong(c, Vector3d(-c.x(), 0.0, -c.z()).normalized() + tilt));
      }
      break;
    }
    case TrajectoryKind::kForwardArc: {
      const double radius = Uniform(rng, 2.5, 4.0);
      const double length = Uniform(rng, 1.5, 2.5);
      const double bob = Uniform(rng, 0.05, 0.15);
      for (int f = 0; f < n; ++f) {
        const double t = n > 1 ? static_cast<double>(f) / (n - 1) : 0.0;
        const double phi = sign * (length / radius) * (t - 0.5);
        const Vector3d c(radius * std::cos(phi) - radius,
                         bob * std::sin(2.0 * std::numbers::pi * t),
                         radius * std::sin(phi));
        const Vector3d tangent(-sign * std::sin(phi), 0.0, sign * std::cos(phi));
        traj.Append(f, LookAlong(yaw * c, yaw * tangent + tilt));
      }
      break;
    }
    case TrajectoryKind::kPan: {
      const double length = Uniform(rng, 1.5, 2.5);
      const double turn = Uniform(rng, 0.3, 0.6);
      // A slight forward bow keeps the centers off a single line.
      const double bow = Uniform(rng, 0.2, 0.4);
      for (int f = 0; f < n; ++f) {
        const double t = n > 1 ? static_cast<double>(f) / (n - 1) : 0.0;
        const Vector3d c(sign * length * (t - 0.5), 0.0, bow * 4.0 * t * (1.0 - t));
        const double psi = sign * turn * (t - 0.5);
        const Vector3d forward(std::sin(psi), 0.0, std::cos(psi));
        traj.Append(f, LookAlong(yaw * c, yaw * forward + tilt));
      }
      break;
    }
    case TrajectoryKind::kStatic: {
      const Pose pose = LookAlong(Vector3d::Zero(), yaw * Vector3d::UnitZ() + tilt);
      for (int f = 0; f < n; ++f) traj.Append(f, pose);
      break;
    }
    case TrajectoryKind::kLinear: {
      const double length = Uniform(rng, 1.5, 2.5);
      const Vector3d dir = Vector3d(1.0, Uniform(rng, -0.1, 0.1), Uniform(rng, -0.3, 0.3)).normalized();
      const Pose base = LookAlong(Vector3d::Zero(), yaw * Vector3d::UnitZ() + tilt);
      for (int f = 0; f < n; ++f) {
        const double t = n > 1 ? static_cast<double>(f) / (n - 1) : 0.0;
        const Vector3d c = yaw * (sign * length * (t - 0.5) * dir);
        traj.Append(f, Pose::FromCenter(base.R().transpose(), c));
      }
      break;
    }
  }
  return traj;
}

Vector3d RayThrough(const SynthScene& scene, std::int64_t frame, const Vector2d& p) {
  const Pose& pose = scene.PoseAt(frame);
  return pose.R().transpose() * (scene.intrinsics.KInverse() * p.homogeneous());
}

// Point where the viewing ray through p leaves the backdrop region.
Vector3d BackdropHit(const SynthScene& scene, std::int64_t frame, const Vector2d& p) {
  const Vector3d c = scene.PoseAt(frame).Center();
  const Vector3d d = RayThrough(scene, frame, p).normalized();
  const double b = c.dot(d);
  double s = -b + std::sqrt(b * b - (c.squaredNorm() - kBackdropRadius * kBackdropRadius));
  if (d.y() > 0.0) s = std::min(s, (kGroundHeight - c.y()) / d.y());
  return c + s * d;
}

double VisibleFraction(const SynthScene& scene, const Vector3d& x) {
  int visible = 0;
  for (int f = 0; f < scene.num_frames(); ++f) {
    if (IsVisible(scene, f, x)) ++visible;
  }
  return static_cast<double>(visible) / scene.num_frames();
}

double DynamicVisibleFraction(const SynthScene& scene, std::size_t i) {
  int visible = 0;
  for (int f = 0; f < scene.num_frames(); ++f) {
    if (IsVisible(scene, f, scene.DynamicPosition(i, f))) ++visible;
  }
  return static_cast<double>(visible) / scene.num_frames();
}

}  // namespace

std::string_view TrajectoryKindName(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::kOrbit: return "orbit";
    case TrajectoryKind::kForwardArc: return "forward-arc";
    case TrajectoryKind::kPan: return "pan";
    case TrajectoryKind::kStatic: return "static";
    case TrajectoryKind::kLinear: return "linear";
  }
  return "unknown";
}

std::optional<TrajectoryKind> ParseTrajectoryKind(std::string_view name) {
  for (auto kind : {TrajectoryKind::kOrbit, TrajectoryKind::kForwardArc,
                    TrajectoryKind::kPan, TrajectoryKind::kStatic,
                    TrajectoryKind::kLinear}) {
    if (TrajectoryKindName(kind) == name) return kind;
  }
  return std::nullopt;
}

Vector3d DynamicPoint::PositionAt(double seconds) const {
  if (model == MotionModel::kLinear) return base + velocity * seconds;
  return base + velocity * (std::sin(omega * seconds) / omega);
}

const Pose& SynthScene::PoseAt(std::int64_t frame) const {
  return *gt_trajectory.frames()[static_cast<std::size_t>(frame)].pose;
}

Vector3d SynthScene::DynamicPosition(std::size_t point, std::int64_t frame) const {
  return dynamic_points[point].PositionAt(static_cast<double>(frame) / config.fps);
}

bool IsVisible(const SynthScene& scene, std::int64_t frame, const Vector3d& world) {
  const Pose& pose = scene.PoseAt(frame);
  const Vector3d pc = pose.Transform(world);
  if (!(pc.z() > 1e-6)) return false;
  const Vector2d p = Project(scene.intrinsics, pose, world);
  return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= scene.config.width - 1.0 &&
         p.y() <= scene.config.height - 1.0;
}

SynthScene GenScene(std::uint64_t seed, const SceneConfig& config) {
  if (config.num_frames < 1 || config.width < 2 || config.height < 2 ||
      !(config.focal > 0.0) || !(config.fps > 0.0) || config.n_static < 0 ||
      config.n_dynamic < 0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid synthetic scene configuration");
  }
  SynthScene scene;
  scene.seed = seed;
  scene.config = config;
  scene.intrinsics = {config.focal, config.focal, config.width / 2.0,
                      config.height / 2.0, static_cast<double>(config.width),
                      static_cast<double>(config.height)};
  Rng rng(seed);
  scene.gt_trajectory = MakeTrajectory(config, rng, scene);

  std::uniform_int_distribution<int> pick_frame(0, config.num_frames - 1);
  const long max_attempts = 400L * (config.n_static + config.n_dynamic) + 1000;
  long attempts = 0;
  while (static_cast<int>(scene.static_points.size()) < config.n_static &&
         attempts++ < max_attempts) {
    const int f = pick_frame(rng);
    const Vector2d p(Uniform(rng, 0.0, config.width - 1.0),
                     Uniform(rng, 0.0, config.height - 1.0));
    const Vector3d x = BackdropHit(scene, f, p);
    if (VisibleFraction(scene, x) >= config.min_visible_fraction) {
      scene.static_points.push_back(x);
    }
  }

  attempts = 0;
  while (static_cast<int>(scene.dynamic_points.size()) < config.n_dynamic &&
         attempts++ < max_attempts) {
    const int f = pick_frame(rng);
    const Vector2d p(Uniform(rng, 0.1, 0.9) * config.width,
                     Uniform(rng, 0.1, 0.9) * config.height);
    const double depth = Uniform(rng, 2.5, 5.0);
    const Pose& pose = scene.PoseAt(f);
    DynamicPoint d;
    const Vector3d at_f =
        pose.Center() + depth * (pose.R().transpose() *
                                 (scene.intrinsics.KInverse() * p.homogeneous()));
    if (at_f.y() > kGroundHeight - 0.2) continue;
    // Alternate slow and fast movers; slow ones stay close to the epipolar
    // geometry and are only caught by the masks.
    const bool slow = scene.dynamic_points.size() % 2 == 0;
    const double speed = slow ? Uniform(rng, 0.03, 0.08) : Uniform(rng, 0.4, 0.8);
    Vector3d dir(Uniform(rng, -1, 1), Uniform(rng, -1, 1), Uniform(rng, -1, 1));
    if (dir.norm() < 1e-3) dir = Vector3d::UnitX();
    d.velocity = speed * dir.normalized();
    d.model = (scene.dynamic_points.size() / 2) % 2 == 0 ? MotionModel::kSinusoidal
                                                         : MotionModel::kLinear;
    d.omega = Uniform(rng, 1.5, 3.0);
    d.base = Vector3d::Zero();
    d.base = at_f - d.PositionAt(f / config.fps);
    scene.dynamic_points.push_back(d);
    if (DynamicVisibleFraction(scene, scene.dynamic_points.size() - 1) <
        config.min_visible_fraction) {
      scene.dynamic_points.pop_back();
    }
  }
  return scene;
}

void RasterizeDisk(DynamicMask& mask, const Vector2d& center, double radius) {
  const double r2 = radius * radius;
  const int x0 = std::max(0, static_cast<int>(std::floor(center.x() - radius)));
  const int x1 = std::min(mask.width() - 1, static_cast<int>(std::ceil(center.x() + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(center.y() - radius)));
  const int y1 = std::min(mask.height() - 1, static_cast<int>(std::ceil(center.y() + radius)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - center.x();
      const double dy = y - center.y();
      if (dx * dx + dy * dy <= r2) mask.set(x, y, true);
    }
  }
}

SynthTracks ProjectTracks(const SynthScene& scene, const TrackOptions& options,
                          std::uint64_t seed) {
  if (options.window_stride < 1 || options.window_length < 1) {
    throw Error(ErrorCode::kInvalidArgument, "window stride and length must be positive");
  }
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int n = scene.num_frames();
  SynthTracks out;
  std::int64_t next_id = 0;

  auto track = [&](auto position_at, std::int64_t start, bool dynamic) {
    const std::int64_t end = std::min<std::int64_t>(start + options.window_length, n);
    Tracklet t;
    t.id = next_id++;
    t.start_frame = start;
    Vector2d last = Vector2d::Zero();
    for (std::int64_t f = start; f < end; ++f) {
      const Vector3d x = position_at(f);
      const bool visible = IsVisible(scene, f, x);
      if (visible) {
        last = Project(scene.intrinsics, scene.PoseAt(f), x);
        if (options.noise_px > 0.0) {
          const double nx = noise(rng);
          const double ny = noise(rng);
          last += options.noise_px * Vector2d(nx, ny);
        }
      }
      t.points.push_back(last);
      t.visible.push_back(visible);
    }
    out.tracklets.push_back(std::move(t));
    out.dynamic.push_back(dynamic);
  };

  for (std::int64_t start = 0; start < n; start += options.window_stride) {
    for (const auto& x : scene.static_points) {
      if (!IsVisible(scene, start, x)) continue;
      track([&](std::int64_t) { return x; }, start, false);
    }
    for (std::size_t i = 0; i < scene.dynamic_points.size(); ++i) {
      if (!IsVisible(scene, start, scene.DynamicPosition(i, start))) continue;
      track([&](std::int64_t f) { return scene.DynamicPosition(i, f); }, start, true);
    }
  }

  for (int f = 0; f < n; ++f) {
    DynamicMask mask(f, scene.config.width, scene.config.height);
    for (std::size_t i = 0; i < scene.dynamic_points.size(); ++i) {
      const Vector3d x = scene.DynamicPosition(i, f);
      if (!IsVisible(scene, f, x)) continue;
      RasterizeDisk(mask, Project(scene.intrinsics, scene.PoseAt(f), x),
                    options.mask_radius_px);
    }
    out.masks.push_back(std::move(mask));
  }
  return out;
}

namespace {

struct SpriteMotion {
  Vector2d from;
  Vector2d to;
};

std::vector<SpriteMotion> Sprites(const SynthScene& scene, std::int64_t from,
                                  std::int64_t to) {
  std::vector<SpriteMotion> out;
  for (std::size_t i = 0; i < scene.dynamic_points.size(); ++i) {
    const Vector3d a = scene.DynamicPosition(i, from);
    const Vector3d b = scene.DynamicPosition(i, to);
    if (!IsVisible(scene, from, a)) continue;
    if (!(scene.PoseAt(to).Transform(b).z() > 1e-6)) continue;
    out.push_back({Project(scene.intrinsics, scene.PoseAt(from), a),
                   Project(scene.intrinsics, scene.PoseAt(to), b)});
  }
  return out;
}

Vector2d FlowWithSprites(const SynthScene& scene, std::int64_t from, std::int64_t to,
                         const Vector2d& p, double radius,
                         const std::vector<SpriteMotion>& sprites) {
  const SpriteMotion* nearest = nullptr;
  double best = radius * radius;
  for (const auto& s : sprites) {
    const double d2 = (p - s.from).squaredNorm();
    if (d2 <= best) {
      if (nearest == nullptr || d2 < best) {
        best = d2;
        nearest = &s;
      }
    }
  }
  if (nearest != nullptr) return nearest->to - nearest->from;
  const Vector3d x = BackdropHit(scene, from, p);
  return Project(scene.intrinsics, scene.PoseAt(to), x) - p;
}

}  // namespace

Vector2d FlowAt(const SynthScene& scene, std::int64_t from, std::int64_t to,
                const Vector2d& p, double mask_radius_px) {
  return FlowWithSprites(scene, from, to, p, mask_radius_px, Sprites(scene, from, to));
}

FlowField RenderFlow(const SynthScene& scene, std::int64_t from, std::int64_t to,
                     double mask_radius_px) {
  FlowField flow(scene.config.width, scene.config.height);
  flow.frame_from = from;
  flow.frame_to = to;
  const auto sprites = Sprites(scene, from, to);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      flow.Set(x, y, FlowWithSprites(scene, from, to, Vector2d(x, y), mask_radius_px,
                                     sprites));
    }
  }
  return flow;
}

std::vector<AnnotatedPair> SampleAnnotatedPairs(const SynthScene& scene,
                                                const std::string& video,
                                                std::size_t count, int max_gap,
                                                std::uint64_t seed) {
  std::vector<AnnotatedPair> out;
  const int n = scene.num_frames();
  if (n < 2 || scene.static_points.empty() || max_gap < 1) return out;
  Rng rng(seed);
  std::uniform_int_distribution<int> pick_frame(0, n - 2);
  std::uniform_int_distribution<int> pick_gap(1, max_gap);
  std::uniform_int_distribution<std::size_t> pick_point(0, scene.static_points.size() - 1);
  const double scale = 720.0 / scene.config.height;
  std::size_t attempts = 0;
  while (out.size() < count && attempts++ < 100 * count + 100) {
    const int a = pick_frame(rng);
    const int b = std::min(n - 1, a + pick_gap(rng));
    const Vector3d& x = scene.static_points[pick_point(rng)];
    if (!IsVisible(scene, a, x) || !IsVisible(scene, b, x)) continue;
    AnnotatedPair pair;
    pair.video = video;
    pair.frame_a = a;
    pair.frame_b = b;
    pair.point_a = scale * Project(scene.intrinsics, scene.PoseAt(a), x);
    pair.point_b = scale * Project(scene.intrinsics, scene.PoseAt(b), x);
    out.push_back(pair);
  }
  return out;
}

std::string_view FixtureKindName(FixtureKind kind) {
  switch (kind) {
    case FixtureKind::kGood: return "good";
    case FixtureKind::kStaticCamera: return "static_camera";
    case FixtureKind::kStaticScene: return "static_scene";
    case FixtureKind::kShotChange: return "shot_change";
    case FixtureKind::kZoomIn: return "zoom_in";
    case FixtureKind::kLongFocal: return "long_focal";
    case FixtureKind::kHugeMask: return "huge_mask";
    case FixtureKind::kDistorted: return "distorted";
  }
  return "unknown";
}

std::optional<FixtureKind> ParseFixtureKind(std::string_view name) {
  for (auto kind : kAllFixtureKinds) {
    if (FixtureKindName(kind) == name) return kind;
  }
  return std::nullopt;
}

FilterSignals MakeFilterFixture(FixtureKind kind, std::uint64_t seed) {
  Rng rng(seed);
  constexpr int kSamples = 60;       // 10 s at the 6 fps signal rate
  constexpr int kTrackFrames = 120;  // 10 s at 12 fps

  FilterSignals s;
  s.video = std::string(FixtureKindName(kind)) + "_" + std::to_string(seed);
  s.signal_fps = 6.0;
  s.flow_seq = std::vector<double>(kSamples, Uniform(rng, 0.036, 0.040));
  s.focal_seq = std::vector<double>(kSamples, Uniform(rng, 320.0, 340.0));
  s.distortion_alpha = Uniform(rng, 0.05, 0.2);
  s.classifier_acceptable = Uniform(rng, 0.95, 0.99);
  s.classifier_interaction = Uniform(rng, 0.8, 0.95);
  std::vector<double> mask(kSamples);
  for (auto& m : mask) m = Uniform(rng, 0.02, 0.08);
  s.mask_fraction_seq = mask;
  std::vector<double> loss(kTrackFrames);
  for (auto& l : loss) l = Uniform(rng, 0.0, 0.03);
  s.track_loss_seq = loss;
  s.track_median_move = Uniform(rng, 0.15, 0.3);
  s.track_window_median_move = Uniform(rng, 0.1, 0.15);
  s.vlm_answers = std::array<bool, 8>{};
  s.label = kind == FixtureKind::kGood;

  switch (kind) {
    case FixtureKind::kGood:
      break;
    case FixtureKind::kStaticCamera:
      s.flow_seq = std::vector<double>(kSamples, Uniform(rng, 0.003, 0.006));
      s.track_median_move = Uniform(rng, 0.005, 0.01);
      s.track_window_median_move = Uniform(rng, 0.002, 0.005);
      break;
    case FixtureKind::kStaticScene:
      s.classifier_interaction = Uniform(rng, 0.02, 0.04);
      (*s.vlm_answers)[kVlmStaticScene] = true;
      break;
    case FixtureKind::kShotChange: {
      const int cut = std::uniform_int_distribution<int>(20, 40)(rng);
      (*s.flow_seq)[static_cast<std::size_t>(cut)] = Uniform(rng, 0.9, 1.1);
      (*s.track_loss_seq)[static_cast<std::size_t>(2 * cut)] = Uniform(rng, 0.7, 0.9);
      break;
    }
    case FixtureKind::kZoomIn: {
      const double f0 = Uniform(rng, 300.0, 320.0);
      const double f1 = f0 * Uniform(rng, 3.8, 4.0);
      for (int i = 0; i < kSamples; ++i) {
        (*s.focal_seq)[static_cast<std::size_t>(i)] =
            f0 + (f1 - f0) * i / (kSamples - 1.0);
      }
      break;
    }
    case FixtureKind::kLongFocal:
      s.focal_seq = std::vector<double>(kSamples, 1600.0);
      (*s.vlm_answers)[kVlmLongFocal] = true;
      break;
    case FixtureKind::kHugeMask:
      s.mask_fraction_seq = std::vector<double>(kSamples, 0.9);
      break;
    case FixtureKind::kDistorted:
      s.distortion_alpha = 1.5;
      break;
  }
  return s;
}

}  // namespace dynpose
