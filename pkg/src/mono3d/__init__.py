"""Geometric core for monocular mapping and pseudo-lidar 3D detection.

Differentiable view synthesis, skip-step pose consistency, pseudo-lidar
generation, trajectory (ATE) and detection (AP) evaluation, and KITTI file
I/O, verifiable at desk scale without trained networks.
"""

from .geometry import (
    BehindCameraError,
    Intrinsics,
    LogDomainError,
    Point3,
    PointCloud,
    Se3Pose,
    backproject,
    compose,
    depth_to_pointcloud,
    inverse,
    pose_consistency_residual,
    project_to_source,
    se3_exp,
    se3_log,
)
from .imagery import DepthMap, Image, ValidityMask
from .photometric import (
    bilinear_sample,
    depth_l1_loss,
    inverse_warp,
    joint_loss,
    photometric_loss,
)
from .deteval import Box3D, Difficulty, average_precision, bev_iou, iou3d
from .mapeval import AteReport, Trajectory, accumulate, ate
from .optimize import (
    OptimizeConfig,
    SyntheticScene,
    make_scene,
    optimize_pose,
    optimize_snippet,
    render_scene,
    run_snippet_experiment,
)

__all__ = [
    "AteReport",
    "Box3D",
    "Difficulty",
    "OptimizeConfig",
    "SyntheticScene",
    "Trajectory",
    "accumulate",
    "ate",
    "average_precision",
    "bev_iou",
    "iou3d",
    "make_scene",
    "optimize_pose",
    "optimize_snippet",
    "render_scene",
    "run_snippet_experiment",
    "BehindCameraError",
    "DepthMap",
    "Image",
    "Intrinsics",
    "LogDomainError",
    "Point3",
    "PointCloud",
    "Se3Pose",
    "ValidityMask",
    "backproject",
    "bilinear_sample",
    "compose",
    "depth_l1_loss",
    "depth_to_pointcloud",
    "inverse",
    "inverse_warp",
    "joint_loss",
    "photometric_loss",
    "pose_consistency_residual",
    "project_to_source",
    "se3_exp",
    "se3_log",
]
