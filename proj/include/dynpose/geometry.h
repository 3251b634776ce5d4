#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dynpose {

using Vector2d = Eigen::Vector2d;
using Vector3d = Eigen::Vector3d;
using Matrix3d = Eigen::Matrix3d;

// Pinhole camera, no distortion. All values in pixels.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double width = 0.0;
  double height = 0.0;

  Matrix3d K() const;
  Matrix3d KInverse() const;

  // Rescales every pixel quantity by `factor`.
  CameraIntrinsics Scaled(double factor) const;

  // Throws kInvalidArgument when the invariants do not hold.
  void Validate() const;
};

// World-to-camera rigid transform: x_cam = R * x_world + t.
class Pose {
 public:
  Pose() = default;
  Pose(const Eigen::Quaterniond& rotation, const Vector3d& translation);
  Pose(const Matrix3d& rotation, const Vector3d& translation);

  static Pose Identity() { return Pose(); }
  // Builds the pose of a camera centered at `center` with camera-to-world
  // rotation `rotation_c2w`.
  static Pose FromCenter(const Matrix3d& rotation_c2w, const Vector3d& center);

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Vector3d& translation() const { return translation_; }
  Matrix3d R() const { return rotation_.toRotationMatrix(); }
  Vector3d Center() const { return -(rotation_.conjugate() * translation_); }

  Vector3d Transform(const Vector3d& world) const {
    return rotation_ * world + translation_;
  }
  Pose Inverse() const;

 private:
  // Kept normalized with w >= 0.
  Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
  Vector3d translation_ = Vector3d::Zero();
};

// Applies `first`, then `second`.
Pose Compose(const Pose& second, const Pose& first);

// Maps camera-a coordinates into camera-b coordinates, so that
// Compose(RelativePose(a, b), a) == b.
Pose RelativePose(const Pose& a, const Pose& b);

// Geodesic angle between two rotations, in degrees.
double RotationAngleDeg(const Matrix3d& a, const Matrix3d& b);

struct TrajectoryFrame {
  std::int64_t index = 0;
  std::optional<Pose> pose;
};

class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(double fps) : fps_(fps) {}

  // Indices must be strictly increasing.
  void Append(std::int64_t index, std::optional<Pose> pose);

  const std::vector<TrajectoryFrame>& frames() const { return frames_; }
  std::size_t size() const { return frames_.size(); }
  double fps() const { return fps_; }
  void set_fps(double fps) { fps_ = fps; }

  const TrajectoryFrame* Find(std::int64_t index) const;
  std::size_t NumRegistered() const;
  double RegisteredFraction() const;
  bool Complete() const { return NumRegistered() == frames_.size(); }

 private:
  std::vector<TrajectoryFrame> frames_;
  double fps_ = 12.0;
};

// Defined up to scale; stored with max |entry| == 1.
struct FundamentalMatrix {
  Matrix3d matrix = Matrix3d::Zero();
};

Matrix3d Skew(const Vector3d& v);

// F = K2^-T [t]x R K1^-1, normalized by its largest absolute entry.
// Throws kDegenerate when |t| < 1e-12.
FundamentalMatrix FundamentalFromRelativePose(const CameraIntrinsics& k1,
                                              const CameraIntrinsics& k2,
                                              const Pose& relative);
// Non-throwing variant; nullopt for the degenerate case.
std::optional<FundamentalMatrix> TryFundamentalFromRelativePose(
    const CameraIntrinsics& k1, const CameraIntrinsics& k2,
    const Pose& relative);

// Squared-pixel first-order distance to the epipolar constraint.
// Throws kDivisionDegenerate if the gradient norm is below 1e-18.
double SampsonError(const Matrix3d& f, const Vector2d& p1, const Vector2d& p2);
inline double SampsonError(const FundamentalMatrix& f, const Vector2d& p1,
                           const Vector2d& p2) {
  return SampsonError(f.matrix, p1, p2);
}
// Non-throwing form for dense loops: nullopt where the gradient vanishes.
std::optional<double> TrySampsonError(const Matrix3d& f, const Vector2d& p1,
                                      const Vector2d& p2);

// dst ~= scale * rotation * src + translation
struct Similarity {
  double scale = 1.0;
  Matrix3d rotation = Matrix3d::Identity();
  Vector3d translation = Vector3d::Zero();

  Vector3d Apply(const Vector3d& p) const {
    return scale * (rotation * p) + translation;
  }
  // Re-expresses a camera pose in the transformed world frame.
  Pose Apply(const Pose& pose) const;
  Trajectory Apply(const Trajectory& trajectory) const;
};

// Closed-form least-squares similarity (or rigid, without scale) between
// matched point sets. Needs >= 3 non-collinear pairs.
Similarity UmeyamaAlign(std::span<const Vector3d> src,
                        std::span<const Vector3d> dst, bool with_scale);
// Aligns camera centers on frames registered in both trajectories.
Similarity UmeyamaAlign(const Trajectory& src, const Trajectory& dst,
                        bool with_scale);

struct Triangulation {
  Vector3d point = Vector3d::Zero();
  // False if the point lies behind any of the cameras.
  bool in_front = true;
};

// Two-view homogeneous DLT. Throws kZeroBaseline for coincident centers.
Triangulation Triangulate(const Pose& pose1, const Pose& pose2,
                          const CameraIntrinsics& k, const Vector2d& p1,
                          const Vector2d& p2);

struct Observation {
  const Pose* pose = nullptr;
  Vector2d point;
};
// N-view DLT on the same intrinsics.
Triangulation TriangulateMultiView(std::span<const Observation> observations,
                                   const CameraIntrinsics& k);

Vector2d Project(const CameraIntrinsics& k, const Pose& pose,
                 const Vector3d& world);

// Normalized (Hartley) linear eight-point fit on homogeneous points, rank 2
// enforced, max |entry| == 1. Needs >= 8 correspondences.
Matrix3d EightPoint(std::span<const Vector2d> points1,
                    std::span<const Vector2d> points2);

}  // namespace dynpose
