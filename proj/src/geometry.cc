#include "dynpose/geometry.h"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dynpose/error.h"

namespace dynpose {
namespace {

Eigen::Quaterniond Canonical(Eigen::Quaterniond q) {
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

Matrix3d NormalizeMaxAbs(const Matrix3d& m) {
  const double max_abs = m.cwiseAbs().maxCoeff();
  return max_abs > 0.0 ? Matrix3d(m / max_abs) : m;
}

// Similarity transform sending the points to zero centroid and mean distance
// sqrt(2), as a homogeneous 3x3 matrix.
Matrix3d HartleyNormalization(std::span<const Vector2d> points) {
  Vector2d centroid = Vector2d::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  double mean_dist = 0.0;
  for (const auto& p : points) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(points.size());
  const double s = mean_dist > 0.0 ? std::numbers::sqrt2 / mean_dist : 1.0;
  Matrix3d t;
  t << s, 0, -s * centroid.x(),
       0, s, -s * centroid.y(),
       0, 0, 1;
  return t;
}

}  // namespace

Matrix3d CameraIntrinsics::K() const {
  Matrix3d k;
  k << fx, 0, cx,
       0, fy, cy,
       0, 0, 1;
  return k;
}

Matrix3d CameraIntrinsics::KInverse() const {
  Matrix3d k;
  k << 1.0 / fx, 0, -cx / fx,
       0, 1.0 / fy, -cy / fy,
       0, 0, 1;
  return k;
}

CameraIntrinsics CameraIntrinsics::Scaled(double factor) const {
  return {fx * factor, fy * factor, cx * factor,
          cy * factor, width * factor, height * factor};
}

void CameraIntrinsics::Validate() const {
  if (!(fx > 0.0 && fy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  }
  if (!(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height)) {
    throw Error(ErrorCode::kInvalidArgument,
                "principal point outside the frame");
  }
}

Pose::Pose(const Eigen::Quaterniond& rotation, const Vector3d& translation)
    : rotation_(Canonical(rotation)), translation_(translation) {}

Pose::Pose(const Matrix3d& rotation, const Vector3d& translation)
    : rotation_(Canonical(Eigen::Quaterniond(rotation))),
      translation_(translation) {}

Pose Pose::FromCenter(const Matrix3d& rotation_c2w, const Vector3d& center) {
  const Matrix3d r = rotation_c2w.transpose();
  return Pose(r, -r * center);
}

Pose Pose::Inverse() const {
  const Eigen::Quaterniond inv = rotation_.conjugate();
  return Pose(inv, -(inv * translation_));
}

Pose Compose(const Pose& second, const Pose& first) {
  return Pose(second.rotation() * first.rotation(),
              second.rotation() * first.translation() + second.translation());
}

Pose RelativePose(const Pose& a, const Pose& b) {
  return Compose(b, a.Inverse());
}

double RotationAngleDeg(const Matrix3d& a, const Matrix3d& b) {
  const Eigen::AngleAxisd delta(a.transpose() * b);
  return std::abs(delta.angle()) * 180.0 / std::numbers::pi;
}

void Trajectory::Append(std::int64_t index, std::optional<Pose> pose) {
  if (!frames_.empty() && index <= frames_.back().index) {
    throw Error(ErrorCode::kInvalidArgument,
                "trajectory frame indices must be strictly increasing");
  }
  frames_.push_back({index, std::move(pose)});
}

const TrajectoryFrame* Trajectory::Find(std::int64_t index) const {
  auto it = std::lower_bound(
      frames_.begin(), frames_.end(), index,
      [](const TrajectoryFrame& f, std::int64_t i) { return f.index < i; });
  if (it == frames_.end() || it->index != index) return nullptr;
  return &*it;
}

std::size_t Trajectory::NumRegistered() const {
  return static_cast<std::size_t>(
      std::count_if(frames_.begin(), frames_.end(),
                    [](const TrajectoryFrame& f) { return f.pose.has_value(); }));
}

double Trajectory::RegisteredFraction() const {
  if (frames_.empty()) return 0.0;
  return static_cast<double>(NumRegistered()) /
         static_cast<double>(frames_.size());
}

Matrix3d Skew(const Vector3d& v) {
  Matrix3d s;
  s << 0, -v.z(), v.y(),
       v.z(), 0, -v.x(),
       -v.y(), v.x(), 0;
  return s;
}

std::optional<FundamentalMatrix> TryFundamentalFromRelativePose(
    const CameraIntrinsics& k1, const CameraIntrinsics& k2,
    const Pose& relative) {
  if (relative.translation().norm() < 1e-12) return std::nullopt;
  const Matrix3d f = k2.KInverse().transpose() * Skew(relative.translation()) *
                     relative.R() * k1.KInverse();
  return FundamentalMatrix{NormalizeMaxAbs(f)};
}

FundamentalMatrix FundamentalFromRelativePose(const CameraIntrinsics& k1,
                                              const CameraIntrinsics& k2,
                                              const Pose& relative) {
  auto f = TryFundamentalFromRelativePose(k1, k2, relative);
  if (!f) {
    throw Error(ErrorCode::kDegenerate,
                "relative translation is zero; fundamental matrix undefined");
  }
  return *f;
}

std::optional<double> TrySampsonError(const Matrix3d& f, const Vector2d& p1,
                                      const Vector2d& p2) {
  const Vector3d x1 = p1.homogeneous();
  const Vector3d x2 = p2.homogeneous();
  const Vector3d fx1 = f * x1;
  const Vector3d ftx2 = f.transpose() * x2;
  const double numerator = x2.dot(fx1);
  const double denominator = fx1.x() * fx1.x() + fx1.y() * fx1.y() +
                             ftx2.x() * ftx2.x() + ftx2.y() * ftx2.y();
  if (denominator < 1e-18) return std::nullopt;
  return numerator * numerator / denominator;
}

double SampsonError(const Matrix3d& f, const Vector2d& p1, const Vector2d& p2) {
  const auto error = TrySampsonError(f, p1, p2);
  if (!error) {
    throw Error(ErrorCode::kDivisionDegenerate,
                "point pair lies at the epipoles");
  }
  return *error;
}

Pose Similarity::Apply(const Pose& pose) const {
  const Vector3d center = Apply(pose.Center());
  const Matrix3d r = pose.R() * rotation.transpose();
  return Pose(r, -r * center);
}

Trajectory Similarity::Apply(const Trajectory& trajectory) const {
  Trajectory out(trajectory.fps());
  for (const auto& frame : trajectory.frames()) {
    out.Append(frame.index, frame.pose ? std::optional<Pose>(Apply(*frame.pose))
                                       : std::nullopt);
  }
  return out;
}

Similarity UmeyamaAlign(std::span<const Vector3d> src,
                        std::span<const Vector3d> dst, bool with_scale) {
  if (src.size() != dst.size()) {
    throw Error(ErrorCode::kInvalidArgument, "point sets differ in size");
  }
  if (src.size() < 3) {
    throw Error(ErrorCode::kInsufficientPoints,
                "alignment needs at least 3 point pairs");
  }
  const double n = static_cast<double>(src.size());
  Vector3d mean_src = Vector3d::Zero();
  Vector3d mean_dst = Vector3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    mean_src += src[i];
    mean_dst += dst[i];
  }
  mean_src /= n;
  mean_dst /= n;

  Matrix3d cov = Matrix3d::Zero();
  Matrix3d scatter_src = Matrix3d::Zero();
  double var_src = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vector3d s = src[i] - mean_src;
    cov += (dst[i] - mean_dst) * s.transpose();
    scatter_src += s * s.transpose();
    var_src += s.squaredNorm();
  }
  cov /= n;
  var_src /= n;

  const Eigen::JacobiSVD<Matrix3d> scatter_svd(scatter_src);
  const Vector3d sv = scatter_svd.singularValues();
  if (sv(0) <= 0.0 || sv(1) < 1e-12 * sv(0)) {
    throw Error(ErrorCode::kDegenerateGeometry,
                "source positions are collinear or coincident");
  }

  const Eigen::JacobiSVD<Matrix3d> svd(cov,
                                       Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector3d signs = Vector3d::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
    signs(2) = -1.0;
  }
  Similarity out;
  out.rotation =
      svd.matrixU() * signs.asDiagonal() * svd.matrixV().transpose();
  out.scale =
      with_scale ? svd.singularValues().dot(signs) / var_src : 1.0;
  out.translation = mean_dst - out.scale * out.rotation * mean_src;
  return out;
}

Similarity UmeyamaAlign(const Trajectory& src, const Trajectory& dst,
                        bool with_scale) {
  std::vector<Vector3d> a;
  std::vector<Vector3d> b;
  for (const auto& frame : src.frames()) {
    if (!frame.pose) continue;
    const TrajectoryFrame* other = dst.Find(frame.index);
    if (other == nullptr || !other->pose) continue;
    a.push_back(frame.pose->Center());
    b.push_back(other->pose->Center());
  }
  return UmeyamaAlign(a, b, with_scale);
}

Vector2d Project(const CameraIntrinsics& k, const Pose& pose,
                 const Vector3d& world) {
  const Vector3d c = pose.Transform(world);
  return {k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy};
}

Triangulation TriangulateMultiView(std::span<const Observation> observations,
                                   const CameraIntrinsics& k) {
  if (observations.size() < 2) {
    throw Error(ErrorCode::kInsufficientPoints,
                "triangulation needs at least two views");
  }
  const Matrix3d k_inv = k.KInverse();
  Eigen::MatrixXd a(2 * observations.size(), 4);
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const Pose& pose = *observations[i].pose;
    Eigen::Matrix<double, 3, 4> p;
    p.leftCols<3>() = pose.R();
    p.col(3) = pose.translation();
    const Vector3d x = k_inv * observations[i].point.homogeneous();
    a.row(2 * i) = x.x() * p.row(2) - p.row(0);
    a.row(2 * i + 1) = x.y() * p.row(2) - p.row(1);
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  Triangulation out;
  out.point = h.head<3>() / h(3);
  for (const auto& obs : observations) {
    if (obs.pose->Transform(out.point).z() <= 0.0) out.in_front = false;
  }
  return out;
}

Triangulation Triangulate(const Pose& pose1, const Pose& pose2,
                          const CameraIntrinsics& k, const Vector2d& p1,
                          const Vector2d& p2) {
  if ((pose1.Center() - pose2.Center()).norm() < 1e-12) {
    throw Error(ErrorCode::kZeroBaseline, "camera centers coincide");
  }
  const Observation obs[2] = {{&pose1, p1}, {&pose2, p2}};
  return TriangulateMultiView(obs, k);
}

Matrix3d EightPoint(std::span<const Vector2d> points1,
                    std::span<const Vector2d> points2) {
  if (points1.size() != points2.size() || points1.size() < 8) {
    throw Error(ErrorCode::kTooFewMatches,
                "eight-point fit needs at least 8 correspondences");
  }
  const Matrix3d t1 = HartleyNormalization(points1);
  const Matrix3d t2 = HartleyNormalization(points2);
  Eigen::Matrix<double, Eigen::Dynamic, 9> a(points1.size(), 9);
  for (std::size_t i = 0; i < points1.size(); ++i) {
    const Vector3d x1 = t1 * points1[i].homogeneous();
    const Vector3d x2 = t2 * points2[i].homogeneous();
    a.row(i) << x2.x() * x1.x(), x2.x() * x1.y(), x2.x(),
                x2.y() * x1.x(), x2.y() * x1.y(), x2.y(),
                x1.x(), x1.y(), 1.0;
  }
  Eigen::Matrix<double, 9, 1> f_vec;
  if (points1.size() > 9) {
    // Reduce to the 9x9 triangular factor first; cheaper than a full SVD on
    // tall systems and numerically equivalent.
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    const Eigen::Matrix<double, 9, 9> r =
        qr.matrixQR().topRows<9>().triangularView<Eigen::Upper>();
    const Eigen::JacobiSVD<Eigen::Matrix<double, 9, 9>> svd(r,
                                                            Eigen::ComputeFullV);
    f_vec = svd.matrixV().col(8);
  } else {
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    f_vec = svd.matrixV().col(8);
  }
  Matrix3d f;
  f << f_vec(0), f_vec(1), f_vec(2),
       f_vec(3), f_vec(4), f_vec(5),
       f_vec(6), f_vec(7), f_vec(8);
  Eigen::JacobiSVD<Matrix3d> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector3d sv = svd.singularValues();
  sv(2) = 0.0;
  f = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
  return NormalizeMaxAbs(t2.transpose() * f * t1);
}

}  // namespace dynpose
