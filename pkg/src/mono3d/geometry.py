"""SE(3) pose algebra, pinhole projection and pseudo-lidar back-projection.

Camera convention throughout: x right, y down, z forward (KITTI camera
frame). Poses are stored as rotation matrix + translation; the 6-vector
twist form (v, omega) only appears at the optimizer boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .imagery import DepthMap

_ORTHO_TOL = 1e-9
_DRIFT_REPAIR = 1e-12
_Z_EPS = 1e-9
_LOG_ANGLE_LIMIT = math.pi - 1e-6


class BehindCameraError(ValueError):
    """Transformed point has z <= 1e-9; no valid projection exists."""


class LogDomainError(ValueError):
    """Rotation angle at or beyond pi - 1e-6; log map is out of chart."""


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera parameters, all in pixels."""

    f_u: float
    f_v: float
    c_u: float
    c_v: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.f_u > 0 and self.f_v > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.f_u, 0.0, self.c_u], [0.0, self.f_v, self.c_v], [0.0, 0.0, 1.0]]
        )

    def scaled(self, sx: float, sy: float, width: int, height: int) -> "Intrinsics":
        """Rescale for a resized image: (f, c) scale proportionally per axis."""
        return Intrinsics(self.f_u * sx, self.f_v * sy, self.c_u * sx, self.c_v * sy,
                          width, height)


def _orthonormality_drift(r: np.ndarray) -> float:
    return float(np.abs(r.T @ r - np.eye(3)).max())


def _reorthonormalize(r: np.ndarray) -> np.ndarray:
    # Polar-decomposition style projection onto SO(3).
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0:
        out = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return out


@dataclass(frozen=True)
class Se3Pose:
    """Rigid transform: p_out = rotation @ p_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        drift = _orthonormality_drift(r)
        if drift > _ORTHO_TOL:
            raise ValueError(f"rotation not orthonormal (drift {drift:.3e})")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must have determinant +1")
        if drift > _DRIFT_REPAIR:
            r = _reorthonormalize(r)
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Se3Pose":
        return Se3Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def translate(x: float, y: float, z: float) -> "Se3Pose":
        return Se3Pose(np.eye(3), np.array([x, y, z], dtype=float))

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Se3Pose":
        m = np.asarray(m, dtype=float)
        return Se3Pose(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (3,) or (n, 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation


def compose(a: Se3Pose, b: Se3Pose) -> Se3Pose:
    """Rigid transform applying b first, then a."""
    r = a.rotation @ b.rotation
    t = a.rotation @ b.translation + a.translation
    return Se3Pose(r, t)


def inverse(t: Se3Pose) -> Se3Pose:
    rt = t.rotation.T
    return Se3Pose(rt, -rt @ t.translation)


def _skew(w: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )


def se3_exp(xi: np.ndarray) -> Se3Pose:
    """Exponential map from a twist (v, omega) to a rigid transform."""
    xi = np.asarray(xi, dtype=float).reshape(6)
    v, w = xi[:3], xi[3:]
    theta = float(np.linalg.norm(w))
    wx = _skew(w)
    if theta < 1e-10:
        # Second-order series keeps exp(log(T)) round trips below 1e-9.
        r = np.eye(3) + wx + 0.5 * (wx @ wx)
        vmat = np.eye(3) + 0.5 * wx + (wx @ wx) / 6.0
        return Se3Pose(_reorthonormalize(r), vmat @ v)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    c = (theta - math.sin(theta)) / (theta ** 3)
    r = np.eye(3) + a * wx + b * (wx @ wx)
    vmat = np.eye(3) + b * wx + c * (wx @ wx)
    return Se3Pose(r, vmat @ v)


def se3_log(t: Se3Pose) -> np.ndarray:
    """Log map to twist coordinates; rejects rotations at angle >= pi - 1e-6."""
    r = t.rotation
    cos_theta = (np.trace(r) - 1.0) / 2.0
    cos_theta = min(1.0, max(-1.0, cos_theta))
    theta = math.acos(cos_theta)
    if theta >= _LOG_ANGLE_LIMIT:
        raise LogDomainError(f"rotation angle {theta:.6f} out of log chart")
    if theta < 1e-10:
        w = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]) / 2.0
        wx = _skew(w)
        vinv = np.eye(3) - 0.5 * wx + (wx @ wx) / 12.0
        return np.concatenate([vinv @ t.translation, w])
    w = (
        theta
        / (2.0 * math.sin(theta))
        * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    )
    wx = _skew(w)
    half = theta / 2.0
    coeff = (1.0 - half / math.tan(half)) / (theta * theta)
    vinv = np.eye(3) - 0.5 * wx + coeff * (wx @ wx)
    return np.concatenate([vinv @ t.translation, w])


class Point3(NamedTuple):
    """3D point in camera coordinates, meters."""

    x: float
    y: float
    z: float


@dataclass(frozen=True)
class PointCloud:
    """Ordered 3D points (n, 3) with optional per-point reflectance in [0, 1]."""

    points: np.ndarray
    reflectance: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.isfinite(pts).all():
            raise ValueError("point cloud contains non-finite points")
        object.__setattr__(self, "points", pts)
        if self.reflectance is not None:
            refl = np.asarray(self.reflectance, dtype=float).reshape(-1)
            if refl.shape[0] != pts.shape[0]:
                raise ValueError("reflectance length mismatch")
            if not np.isfinite(refl).all() or (refl < 0).any() or (refl > 1).any():
                raise ValueError("reflectance must be finite and in [0, 1]")
            object.__setattr__(self, "reflectance", refl)

    def __len__(self) -> int:
        return self.points.shape[0]


def backproject(u: float, v: float, z: float, k: Intrinsics) -> Point3:
    """Lift pixel (u, v) with depth z to camera coordinates.

    x = (u - c_u) * z / f_u, y = (v - c_v) * z / f_v.
    """
    if not (math.isfinite(z) and z > 0):
        raise ValueError(f"depth must be positive and finite, got {z}")
    x = (u - k.c_u) * z / k.f_u
    y = (v - k.c_v) * z / k.f_v
    return Point3(x, y, z)


def backproject_depth_partials(u: float, v: float, k: Intrinsics) -> tuple[float, float]:
    """(dx/dz, dy/dz) of the back-projection, constant in z."""
    return (u - k.c_u) / k.f_u, (v - k.c_v) / k.f_v


def project_to_source(
    p_t: tuple[float, float], depth: float, pose_t_to_s: Se3Pose, k: Intrinsics
) -> tuple[float, float]:
    """Project target pixel p_t with its depth into the source view.

    Back-projects with the pinhole model, applies the target-to-source
    transform, then reprojects. The result is a continuous pixel coordinate
    and may lie outside image bounds; the caller masks.
    """
    u, v = p_t
    p = backproject(u, v, depth, k)
    q = pose_t_to_s.rotation @ np.array([p.x, p.y, p.z]) + pose_t_to_s.translation
    if q[2] <= _Z_EPS:
        raise BehindCameraError(f"transformed point z={q[2]:.3e} is behind the camera")
    return (k.f_u * q[0] / q[2] + k.c_u, k.f_v * q[1] / q[2] + k.c_v)


def project_pixels(
    us: np.ndarray,
    vs: np.ndarray,
    zs: np.ndarray,
    pose_t_to_s: Se3Pose,
    k: Intrinsics,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized project_to_source over pixel arrays.

    Returns (u_s, v_s, in_front); coordinates are NaN where the transformed
    point lies behind the camera (z <= 1e-9) or the depth is invalid.
    """
    x = (us - k.c_u) * zs / k.f_u
    y = (vs - k.c_v) * zs / k.f_v
    r, t = pose_t_to_s.rotation, pose_t_to_s.translation
    qx = r[0, 0] * x + r[0, 1] * y + r[0, 2] * zs + t[0]
    qy = r[1, 0] * x + r[1, 1] * y + r[1, 2] * zs + t[1]
    qz = r[2, 0] * x + r[2, 1] * y + r[2, 2] * zs + t[2]
    in_front = np.isfinite(qz) & (qz > _Z_EPS)
    with np.errstate(invalid="ignore", divide="ignore"):
        u_s = np.where(in_front, k.f_u * qx / qz + k.c_u, np.nan)
        v_s = np.where(in_front, k.f_v * qy / qz + k.c_v, np.nan)
    return u_s, v_s, in_front


def depth_to_pointcloud(
    d: DepthMap, k: Intrinsics, max_depth: float = 80.0
) -> tuple[PointCloud, int]:
    """Back-project a depth map into a pseudo-lidar point cloud.

    One point per pixel with valid depth (finite, 0 < z <= max_depth), in
    row-major pixel order. Returns the cloud and the count of skipped pixels.
    """
    if d.width != k.width or d.height != k.height:
        raise ValueError(
            f"depth map {d.width}x{d.height} does not match intrinsics "
            f"{k.width}x{k.height}"
        )
    z = d.data.reshape(-1)
    vs, us = np.divmod(np.arange(z.shape[0], dtype=float), float(d.width))
    valid = np.isfinite(z) & (z > 0) & (z <= max_depth)
    zv = z[valid]
    x = (us[valid] - k.c_u) * zv / k.f_u
    y = (vs[valid] - k.c_v) * zv / k.f_v
    cloud = PointCloud(np.column_stack([x, y, zv]))
    return cloud, int(z.shape[0] - zv.shape[0])


def pose_consistency_residual(
    t1: Se3Pose, t2: Se3Pose, t_skip: Se3Pose, rot_weight: float = 1.0
) -> tuple[np.ndarray, float]:
    """Twist residual of the skip-step consistency constraint t1 . t2 = t_skip.

    residual = log(inverse(t_skip) . t1 . t2); magnitude is the Euclidean
    norm of the 6-vector with the rotational part scaled by rot_weight
    (meters and radians share one norm, so the weight is configurable).
    """
    discrepancy = compose(inverse(t_skip), compose(t1, t2))
    residual = se3_log(discrepancy)
    weighted = residual.copy()
    weighted[3:] *= rot_weight
    return residual, float(np.linalg.norm(weighted))
