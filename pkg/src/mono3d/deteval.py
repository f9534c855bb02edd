"""Oriented 3D boxes, rotated BEV/3D IoU and KITTI-style average precision."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

_DEGENERATE_AREA = 1e-12


class Difficulty(Enum):
    EASY = "easy"
    MODERATE = "moderate"
    HARD = "hard"


# (min 2D bbox height px, max occlusion level, max truncation)
_DIFFICULTY_LIMITS = {
    Difficulty.EASY: (40.0, 0, 0.15),
    Difficulty.MODERATE: (25.0, 1, 0.30),
    Difficulty.HARD: (25.0, 2, 0.50),
}


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box in camera coordinates.

    center is (x, y, z) with y at the box bottom (KITTI label convention,
    y points down); the box spans [y - h, y] vertically. yaw rotates the
    (l, w) footprint about the vertical axis in the x-z plane.
    """

    center: tuple[float, float, float]
    size: tuple[float, float, float]  # (h, w, l) meters
    yaw: float
    score: Optional[float] = None
    label: str = "Car"
    occlusion: int = 0
    truncation: float = 0.0
    bbox_height: float = 0.0  # 2D box height in pixels (ground truth only)

    def __post_init__(self):
        h, w, l = self.size
        if h <= 0 or w <= 0 or l <= 0:
            raise ValueError("box dimensions must be positive")
        if not -math.pi < self.yaw <= math.pi:
            raise ValueError("yaw must lie in (-pi, pi]")
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise ValueError("score must lie in [0, 1]")

    @property
    def volume(self) -> float:
        h, w, l = self.size
        return h * w * l

    def footprint(self) -> np.ndarray:
        """Corners of the yaw-rotated (x, z) footprint, shape (4, 2)."""
        _, w, l = self.size
        cx, _, cz = self.center
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        corners = np.array(
            [[l / 2, w / 2], [l / 2, -w / 2], [-l / 2, -w / 2], [-l / 2, w / 2]]
        )
        rot = np.array([[c, s], [-s, c]])
        return corners @ rot.T + np.array([cx, cz])

    def vertical_extent(self) -> tuple[float, float]:
        _, y, _ = self.center
        return y - self.size[0], y


@dataclass(frozen=True)
class ApResult:
    ap: float  # percentage
    precision: np.ndarray
    recall: np.ndarray
    true_positives: int
    false_positives: int
    num_ground_truth: int

    def __post_init__(self):
        if not 0.0 <= self.ap <= 100.0:
            raise ValueError("ap must lie in [0, 100]")


def _polygon_area(poly: np.ndarray) -> float:
    """Shoelace area of a polygon given as (n, 2) vertices."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _clip_halfplane(poly: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Keep the part of poly on the left of directed edge a -> b."""
    if len(poly) == 0:
        return poly
    edge = b - a
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        side_p = edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0])
        side_q = edge[0] * (q[1] - a[1]) - edge[1] * (q[0] - a[0])
        if side_p >= 0:
            out.append(p)
        if (side_p > 0) != (side_q > 0) and side_p != side_q:
            t = side_p / (side_p - side_q)
            out.append(p + t * (q - p))
    return np.array(out) if out else np.empty((0, 2))


def convex_intersection_area(pa: np.ndarray, pb: np.ndarray) -> float:
    """Area of intersection of two convex polygons with CCW or CW winding."""
    # Clipping needs counter-clockwise winding; footprint() yields CW or CCW
    # depending on axis conventions, so normalize via the signed area.
    def ccw(poly: np.ndarray) -> np.ndarray:
        x, y = poly[:, 0], poly[:, 1]
        signed = 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
        return poly if signed >= 0 else poly[::-1]

    clipped = ccw(pa)
    pb = ccw(pb)
    for i in range(len(pb)):
        clipped = _clip_halfplane(clipped, pb[i], pb[(i + 1) % len(pb)])
        if len(clipped) == 0:
            return 0.0
    area = _polygon_area(clipped)
    return area if area > _DEGENERATE_AREA else 0.0


def bev_iou(a: Box3D, b: Box3D) -> float:
    """Rotated-rectangle IoU of the two footprints in the ground (x-z) plane."""
    pa, pb = a.footprint(), b.footprint()
    inter = convex_intersection_area(pa, pb)
    union = _polygon_area(pa) + _polygon_area(pb) - inter
    if union <= 0:
        return 0.0
    return min(1.0, inter / union)


def iou3d(a: Box3D, b: Box3D) -> float:
    """Volumetric IoU: BEV intersection area times vertical overlap."""
    inter_area = convex_intersection_area(a.footprint(), b.footprint())
    (a_lo, a_hi), (b_lo, b_hi) = a.vertical_extent(), b.vertical_extent()
    overlap = max(0.0, min(a_hi, b_hi) - max(a_lo, b_lo))
    inter = inter_area * overlap
    union = a.volume + b.volume - inter
    if union <= 0:
        return 0.0
    return min(1.0, inter / union)


def difficulty_filter(gt: Box3D, level: Difficulty) -> bool:
    """Whether a ground-truth box belongs to the given difficulty bucket."""
    min_height, max_occ, max_trunc = _DIFFICULTY_LIMITS[level]
    return (
        gt.bbox_height >= min_height
        and gt.occlusion <= max_occ
        and gt.truncation <= max_trunc
    )


def _match_frame(
    preds: Sequence[Box3D],
    gts: Sequence[Box3D],
    iou_threshold: float,
    mode: str,
    level: Difficulty,
) -> list[tuple[float, str]]:
    """Greedy per-frame matching; returns (score, kind) with kind in
    {'tp', 'fp', 'ignored'}.

    Predictions are taken in descending score order and matched to the
    unmatched ground truth with highest IoU >= threshold (ties broken by
    lower ground-truth index). A match to an out-of-level ground truth is
    ignored: neither TP nor FP.
    """
    iou_fn = bev_iou if mode == "bev" else iou3d
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
    taken = [False] * len(gts)
    in_level = [difficulty_filter(g, level) for g in gts]
    out = []
    for i in order:
        best_iou = -1.0
        best_j = -1
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            iou = iou_fn(preds[i], g)
            if iou >= iou_threshold and iou > best_iou:
                best_iou = iou
                best_j = j
        if best_j < 0:
            out.append((preds[i].score, "fp"))
        else:
            taken[best_j] = True
            out.append((preds[i].score, "tp" if in_level[best_j] else "ignored"))
    return out


def average_precision(
    preds: Sequence[Sequence[Box3D]],
    gts: Sequence[Sequence[Box3D]],
    iou_threshold: float = 0.7,
    mode: str = "bev",
    level: Difficulty = Difficulty.MODERATE,
    label: str = "Car",
) -> ApResult:
    """11-point interpolated average precision over a set of frames.

    The precision-recall curve is built by sweeping a score threshold over
    all prediction scores; greedy matching in descending score order makes
    that sweep equivalent to prefix truncation of a single matching pass.
    """
    if len(preds) != len(gts):
        raise ValueError("prediction/ground-truth frame counts differ")
    if mode not in ("bev", "3d"):
        raise ValueError(f"unknown mode {mode!r}")
    outcomes = []
    num_gt = 0
    for frame_preds, frame_gts in zip(preds, gts):
        frame_preds = [p for p in frame_preds if p.label == label]
        frame_gts = [g for g in frame_gts if g.label == label]
        for p in frame_preds:
            if p.score is None or math.isnan(p.score):
                raise ValueError("prediction scores must be set and finite")
        num_gt += sum(difficulty_filter(g, level) for g in frame_gts)
        outcomes.extend(
            _match_frame(frame_preds, frame_gts, iou_threshold, mode, level)
        )
    outcomes.sort(key=lambda sk: -sk[0])
    kept = [(s, k) for s, k in outcomes if k != "ignored"]
    tp_cum = np.cumsum([1 if k == "tp" else 0 for _, k in kept])
    fp_cum = np.cumsum([1 if k == "fp" else 0 for _, k in kept])
    if len(kept) == 0 or num_gt == 0:
        return ApResult(0.0, np.zeros(0), np.zeros(0), 0, 0, num_gt)
    precision = tp_cum / (tp_cum + fp_cum)
    recall = tp_cum / num_gt
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 11):
        above = precision[recall >= r - 1e-12]
        ap += float(above.max()) if above.size else 0.0
    ap = ap / 11.0 * 100.0
    return ApResult(
        ap, precision, recall, int(tp_cum[-1]), int(fp_cum[-1]), num_gt
    )
