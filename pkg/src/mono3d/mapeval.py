"""Trajectory recovery from relative poses and snippet-wise ATE."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import Se3Pose, compose, inverse


@dataclass(frozen=True)
class Trajectory:
    """Ordered absolute poses (world-from-camera) with frame indices."""

    poses: tuple[Se3Pose, ...]
    frame_indices: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.poses) == 0:
            raise ValueError("trajectory must be non-empty")
        if not self.frame_indices:
            object.__setattr__(
                self, "frame_indices", tuple(range(len(self.poses)))
            )
        elif len(self.frame_indices) != len(self.poses):
            raise ValueError("frame index count mismatch")

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def positions(self) -> np.ndarray:
        """Camera centers in world coordinates, shape (n, 3)."""
        return np.stack([p.translation for p in self.poses])


@dataclass(frozen=True)
class AteReport:
    mean: float
    std: float
    per_snippet: tuple[float, ...]
    snippet_len: int

    def __post_init__(self):
        if not self.per_snippet:
            raise ValueError("per-snippet error list must be non-empty")
        if self.std < 0:
            raise ValueError("std must be non-negative")

    def format(self) -> str:
        """Four-decimal 'mean +- std' summary string."""
        return f"{self.mean:.4f} ± {self.std:.4f}"


def accumulate(relatives: Sequence[Se3Pose]) -> Trajectory:
    """Chain frame-to-frame relative poses into an absolute trajectory.

    relatives[i] maps camera(i) coordinates to camera(i+1) coordinates (the
    estimated step from frame i to frame i+1); the recovered trajectory
    starts at the identity and has length len(relatives) + 1.
    """
    if len(relatives) == 0:
        raise ValueError("need at least one relative pose")
    poses = [Se3Pose.identity()]
    for rel in relatives:
        poses.append(compose(poses[-1], inverse(rel)))
    return Trajectory(tuple(poses))


def derive_relatives(traj: Trajectory) -> list[Se3Pose]:
    """Inverse of accumulate: camera(i) -> camera(i+1) steps of a trajectory."""
    return [
        compose(inverse(traj.poses[i + 1]), traj.poses[i])
        for i in range(len(traj) - 1)
    ]


def _snippet_error(pred: np.ndarray, gt: np.ndarray) -> float:
    """Scale-aligned RMS translation error of one window of positions."""
    pred = pred - pred[0]
    gt = gt - gt[0]
    denom = float((pred * pred).sum())
    scale = float((gt * pred).sum()) / denom if denom > 0 else 0.0
    err = gt - scale * pred
    return float(np.sqrt((err * err).sum(axis=1).mean()))


def ate(pred: Trajectory, gt: Trajectory, snippet_len: int = 3) -> AteReport:
    """Absolute trajectory error averaged over all consecutive windows.

    Each window of snippet_len frames is re-origined at its first frame, a
    single least-squares scale is fit to the predicted translations, and the
    RMS of the remaining translation error is recorded.
    """
    if len(pred) != len(gt):
        raise ValueError("trajectory length mismatch")
    if snippet_len < 2:
        raise ValueError("snippet_len must be >= 2")
    if snippet_len > len(pred):
        raise ValueError("snippet_len exceeds trajectory length")
    pred_pos = pred.positions
    gt_pos = gt.positions
    errors = [
        _snippet_error(pred_pos[i : i + snippet_len], gt_pos[i : i + snippet_len])
        for i in range(len(pred) - snippet_len + 1)
    ]
    arr = np.array(errors)
    return AteReport(float(arr.mean()), float(arr.std()), tuple(errors), snippet_len)
