#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynpose/geometry.h"
#include "dynpose/masking.h"
#include "dynpose/tracking.h"

namespace dynpose {

struct SfmConfig {
  std::size_t min_matches = 30;
  // Essential-matrix RANSAC; the threshold is a Sampson distance in pixels.
  double ransac_threshold_px = 1.0;
  int ransac_max_iterations = 5000;
  double ransac_confidence = 0.999;
  // A pair is treated as a pure rotation when the rotation-only model fits
  // nearly as well as the essential matrix.
  double pure_rotation_ratio = 1.5;
  double huber_delta_px = 2.0;
  double max_triangulation_error_px = 4.0;
  double min_triangulation_angle_deg = 1.0;
  bool refine_focal = false;
  int max_ba_iterations = 100;
  double min_registered_fraction = 0.80;
  int max_attempts = 3;
  bool deduplicate_correspondences = false;
  // Frame rate stamped on the output trajectory.
  double fps = 12.0;
};

struct ViewGraphEdge {
  std::int64_t i = 0;
  std::int64_t j = 0;
  // Maps camera-i coordinates to camera-j coordinates (up to translation
  // scale).
  Matrix3d rotation = Matrix3d::Identity();
  // Unit translation of the same map; meaningless when
  // degenerate_translation is set.
  Vector3d direction = Vector3d::UnitX();
  bool degenerate_translation = false;
  // Median angle between matched rays once the rotation is removed.
  double parallax_deg = 0.0;
  std::vector<Correspondence> inliers;
  std::size_t match_count = 0;
};

struct ViewGraph {
  CameraIntrinsics intrinsics;
  std::vector<std::int64_t> nodes;
  std::vector<ViewGraphEdge> edges;
};

// Throws kEmptyGraph if no pair yields an edge.
ViewGraph BuildViewGraph(const CorrespondenceSet& correspondences,
                         const CameraIntrinsics& k, const SfmConfig& config,
                         std::uint64_t seed);

// Nodes of the largest connected component, ascending.
std::vector<std::int64_t> LargestComponent(const ViewGraph& graph,
                                           bool skip_degenerate_translation);

// World-to-camera rotations for the largest component; the smallest frame
// index is fixed to identity.
std::map<std::int64_t, Matrix3d> RotationAveraging(const ViewGraph& graph,
                                                   int max_iterations = 20);

struct PositionEstimate {
  std::map<std::int64_t, Vector3d> centers;
  // Set when the direction constraints alone leave the solution
  // underdetermined (collinear motion); scales then come from shared tracks.
  bool collinear = false;
};

// Camera centers from edge directions. The smallest frame index sits at the
// origin and the mean edge baseline is one.
PositionEstimate PositionAveraging(const ViewGraph& graph,
                                   const std::map<std::int64_t, Matrix3d>& rotations);

struct Landmark {
  std::int64_t tracklet_id = 0;
  Vector3d point = Vector3d::Zero();
  std::vector<std::pair<std::int64_t, Vector2d>> observations;
};

struct SceneModel {
  Trajectory trajectory;
  std::vector<Landmark> landmarks;
  double mean_reprojection_error = 0.0;
  CameraIntrinsics intrinsics;
  bool failed = false;
  std::string failure_reason;
  int attempts = 1;
};

struct ReprojectionJacobians {
  Eigen::Matrix<double, 2, 6> pose;   // [rotation increment, translation]
  Eigen::Matrix<double, 2, 3> point;
  Eigen::Matrix<double, 2, 1> focal;  // multiplicative focal scale
};

// Residual projection(k, pose, point) - observed. Pose increments are
// applied as R <- exp(w) R, t <- t + dt; the focal increment scales fx, fy.
Vector2d ReprojectionResidual(const CameraIntrinsics& k, const Pose& pose,
                              const Vector3d& point, const Vector2d& observed,
                              ReprojectionJacobians* jacobians = nullptr);

struct BundleAdjustOptions {
  double huber_delta_px = 2.0;
  bool refine_focal = false;
  int max_iterations = 100;
  int max_damping_retries = 12;
  double function_tolerance = 1e-12;
};

struct BundleAdjustResult {
  SceneModel model;
  // Robust cost after every accepted step, starting with the initial cost.
  std::vector<double> cost_history;
  int iterations = 0;
};

// Levenberg-Marquardt with a Schur complement on the landmarks. The pose of
// the first registered frame is held fixed. Throws kDiverged if the initial
// cost is not finite or no damping level gives a finite cost on the first
// step.
BundleAdjustResult BundleAdjust(const SceneModel& model,
                                const BundleAdjustOptions& options = {});

double MeanReprojectionError(const SceneModel& model);

// Full pose pipeline. Never throws for reconstruction failures: the returned
// model is marked failed with a reason instead. Unregistered frames keep
// empty poses.
SceneModel RunPipeline(std::span<const Tracklet> tracklets,
                       const std::map<std::int64_t, DynamicMask>& masks,
                       const CameraIntrinsics& k, std::int64_t num_frames,
                       const SfmConfig& config, std::uint64_t seed);

// Same, starting from correspondences.
SceneModel RunPipelineFromCorrespondences(const CorrespondenceSet& correspondences,
                                          const CameraIntrinsics& k,
                                          std::int64_t num_frames,
                                          const SfmConfig& config,
                                          std::uint64_t seed);

struct QualityFilterOptions {
  double max_reprojection_error = 1.37;
  bool require_full_registration = false;
};

// Indices of the models that pass.
std::vector<std::size_t> QualityFilter(std::span<const SceneModel> models,
                                       const QualityFilterOptions& options);

}  // namespace dynpose
