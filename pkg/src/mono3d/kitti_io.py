"""Readers and writers for the KITTI-format artifacts the pipeline touches.

Covers calibration files, odometry pose files, object labels, 16-bit depth
PNGs (meters = raw / 256, raw 0 = invalid) and lidar-style .bin point
clouds. Parsers reject malformed input instead of repairing it, with one
documented exception: sub-1e-3 rotation drift in pose files is
re-orthonormalized and logged.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from PIL import Image as PilImage

from .geometry import Intrinsics, PointCloud, Se3Pose, _reorthonormalize
from .imagery import DepthMap
from .deteval import Box3D
from .mapeval import Trajectory

log = logging.getLogger(__name__)

DEPTH_SCALE = 256.0
_POSE_DRIFT_LIMIT = 1e-3


class ParseError(ValueError):
    """Malformed input file; message carries the offending line."""


@dataclass(frozen=True)
class CalibFile:
    """Calibration matrices by key; P-matrices are 3x4 row-major."""

    matrices: dict[str, np.ndarray]

    def projection(self, key: str = "P2") -> np.ndarray:
        if key not in self.matrices:
            raise KeyError(f"calibration has no {key!r} entry")
        return self.matrices[key].reshape(3, 4)

    def intrinsics(self, width: int, height: int, key: str = "P2") -> Intrinsics:
        p = self.projection(key)
        return Intrinsics(p[0, 0], p[1, 1], p[0, 2], p[1, 2], width, height)


def parse_calib(text: str) -> CalibFile:
    """Parse 'KEY: v0 v1 ...' lines; projection keys (P*) need 12 values."""
    matrices: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if ":" not in line:
            raise ParseError(f"line {lineno}: expected 'KEY: values'")
        key, _, rest = line.partition(":")
        key = key.strip()
        try:
            values = np.array([float(tok) for tok in rest.split()])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: non-numeric token ({exc})") from None
        if key.startswith("P"):
            if values.shape[0] != 12:
                raise ParseError(
                    f"line {lineno}: projection matrix {key} has "
                    f"{values.shape[0]} values, expected 12"
                )
            if not np.isfinite(values).all():
                raise ParseError(f"line {lineno}: non-finite matrix entry")
        matrices[key] = values
    if not any(k.startswith("P") for k in matrices):
        raise ParseError("no projection matrix in calibration file")
    return CalibFile(matrices)


def write_calib(calib: CalibFile) -> str:
    lines = [
        f"{key}: " + " ".join(repr(float(v)) for v in values)
        for key, values in calib.matrices.items()
    ]
    return "\n".join(lines) + "\n"


def parse_odometry_poses(text: str) -> Trajectory:
    """Parse a KITTI odometry pose file: 12 floats per line, row-major 3x4
    world-from-camera."""
    poses = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            values = [float(tok) for tok in line.split()]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: non-numeric token ({exc})") from None
        if len(values) != 12:
            raise ParseError(
                f"line {lineno}: expected 12 values, got {len(values)}"
            )
        m = np.array(values).reshape(3, 4)
        r = m[:, :3]
        drift = float(np.abs(r.T @ r - np.eye(3)).max())
        if drift > _POSE_DRIFT_LIMIT:
            raise ParseError(
                f"line {lineno}: rotation drift {drift:.2e} exceeds "
                f"{_POSE_DRIFT_LIMIT:.0e} (corrupt file)"
            )
        if drift > 1e-12:
            log.warning("pose line %d: repairing rotation drift %.2e", lineno, drift)
            r = _reorthonormalize(r)
        poses.append(Se3Pose(r, m[:, 3]))
    if not poses:
        raise ParseError("empty pose file")
    return Trajectory(tuple(poses))


def write_odometry_poses(traj: Trajectory) -> str:
    lines = []
    for pose in traj.poses:
        m = np.hstack([pose.rotation, pose.translation[:, None]])
        lines.append(" ".join(repr(float(v)) for v in m.reshape(-1)))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LabelRecord:
    """One KITTI object label line (15 fields, 16 with a score)."""

    label: str
    truncation: float
    occlusion: int
    alpha: float
    bbox: tuple[float, float, float, float]  # left, top, right, bottom px
    dimensions: tuple[float, float, float]  # h, w, l meters
    location: tuple[float, float, float]  # x, y, z meters
    rotation_y: float
    score: Optional[float] = None

    @property
    def is_dont_care(self) -> bool:
        return self.label == "DontCare"

    def to_box3d(self) -> Box3D:
        if self.is_dont_care:
            raise ValueError("DontCare records carry no usable 3D box")
        return Box3D(
            center=self.location,
            size=self.dimensions,
            yaw=self.rotation_y,
            score=self.score,
            label=self.label,
            occlusion=self.occlusion,
            truncation=self.truncation,
            bbox_height=self.bbox[3] - self.bbox[1],
        )


def parse_labels(text: str) -> list[LabelRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (15, 16):
            raise ParseError(
                f"line {lineno}: expected 15 or 16 fields, got {len(fields)}"
            )
        try:
            nums = [float(tok) for tok in fields[1:]]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: non-numeric token ({exc})") from None
        records.append(
            LabelRecord(
                label=fields[0],
                truncation=nums[0],
                occlusion=int(nums[1]),
                alpha=nums[2],
                bbox=tuple(nums[3:7]),
                dimensions=tuple(nums[7:10]),
                location=tuple(nums[10:13]),
                rotation_y=nums[13],
                score=nums[14] if len(nums) == 15 else None,
            )
        )
    return records


def write_labels(records: Sequence[LabelRecord]) -> str:
    lines = []
    for rec in records:
        fields = [
            rec.label,
            f"{rec.truncation:.6f}",
            str(rec.occlusion),
            f"{rec.alpha:.6f}",
            *(f"{v:.6f}" for v in rec.bbox),
            *(f"{v:.6f}" for v in rec.dimensions),
            *(f"{v:.6f}" for v in rec.location),
            f"{rec.rotation_y:.6f}",
        ]
        if rec.score is not None:
            fields.append(f"{rec.score:.6f}")
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def read_depth_png(data: bytes) -> DepthMap:
    """Decode a 16-bit single-channel PNG into meters (raw / 256, 0 = NaN)."""
    img = PilImage.open(io.BytesIO(data))
    if img.mode not in ("I", "I;16", "I;16B"):
        raise ValueError(f"expected 16-bit single-channel PNG, got mode {img.mode!r}")
    raw = np.array(img)
    if raw.ndim != 2:
        raise ValueError("expected single-channel depth image")
    if raw.min() < 0 or raw.max() > 65535:
        raise ValueError("depth values overflow 16-bit range")
    depth = raw.astype(float) / DEPTH_SCALE
    depth[raw == 0] = np.nan
    return DepthMap(depth)


def write_depth_png(d: DepthMap) -> bytes:
    """Encode meters as 16-bit PNG: raw = round-half-up(m * 256), clamped at
    65535 (255.996 m ceiling); invalid pixels become raw 0."""
    if d.width > 2 ** 24 or d.height > 2 ** 24:
        raise ValueError("depth map dimensions overflow PNG limits")
    scaled = d.data * DEPTH_SCALE
    raw = np.floor(scaled + 0.5)
    raw = np.where(np.isfinite(d.data), np.clip(raw, 0, 65535), 0.0)
    img = PilImage.fromarray(raw.astype(np.uint16))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def write_pointcloud_bin(pc: PointCloud, velodyne_frame: bool = False) -> bytes:
    """Serialize as little-endian float32 (x, y, z, reflectance) quadruples.

    With velodyne_frame the camera-frame axes are remapped to the lidar
    convention (x' = z, y' = -x, z' = -y); default keeps the camera frame.
    """
    pts = pc.points
    if velodyne_frame:
        pts = np.column_stack([pts[:, 2], -pts[:, 0], -pts[:, 1]])
    refl = pc.reflectance if pc.reflectance is not None else np.ones(len(pc))
    out = np.column_stack([pts, refl]).astype("<f4")
    return out.tobytes()


def read_pointcloud_bin(data: bytes, velodyne_frame: bool = False) -> PointCloud:
    if len(data) % 16 != 0:
        raise ValueError("point cloud byte length must be a multiple of 16")
    arr = np.frombuffer(data, dtype="<f4").reshape(-1, 4).astype(float)
    pts = arr[:, :3]
    if velodyne_frame:
        pts = np.column_stack([-pts[:, 1], -pts[:, 2], pts[:, 0]])
    return PointCloud(pts, arr[:, 3])
