"""Camera pose estimation and evaluation for dynamic videos."""

from ._core import (
    CameraIntrinsics,
    DynposeError,
    Pose,
    Trajectory,
    average_precision,
    evaluate_trajectory,
    filter_fixture,
    fundamental_from_relative_pose,
    load_trajectory,
    pr_curve,
    reconstruct_synthetic,
    relative_pose,
    run_cascade,
    sampson_error,
    save_trajectory,
)

__all__ = [
    "CameraIntrinsics",
    "DynposeError",
    "Pose",
    "Trajectory",
    "average_precision",
    "evaluate_trajectory",
    "filter_fixture",
    "fundamental_from_relative_pose",
    "load_trajectory",
    "pr_curve",
    "reconstruct_synthetic",
    "relative_pose",
    "run_cascade",
    "sampson_error",
    "save_trajectory",
]
