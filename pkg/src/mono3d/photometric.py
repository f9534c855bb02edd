"""Bilinear sampling, inverse warping and the photometric / depth losses."""

from __future__ import annotations

import numpy as np

from .geometry import Intrinsics, Se3Pose, project_pixels
from .imagery import DepthMap, Image, ValidityMask

# Sample coordinates within this distance of an integer are snapped to it, so
# numerically-identity warps reproduce the source bit-exactly.
_SNAP_EPS = 1e-9


def _snap(x: np.ndarray) -> np.ndarray:
    r = np.round(x)
    return np.where(np.abs(x - r) < _SNAP_EPS, r, x)


def bilinear_sample(img: Image, x: float, y: float) -> tuple[np.ndarray, bool]:
    """Sample img at continuous (column x, row y).

    Valid only when the whole [floor(x), floor(x)+1] x [floor(y), floor(y)+1]
    cell lies inside the image; returns (zeros, False) otherwise.
    """
    colors, valid = _bilinear_gather(
        img.data, np.array([float(x)]), np.array([float(y)])
    )
    return colors[0], bool(valid[0])


def _bilinear_gather(
    data: np.ndarray, xs: np.ndarray, ys: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized bilinear sampling of (h, w, c) data at flat coordinate arrays."""
    h, w = data.shape[:2]
    xs = _snap(xs)
    ys = _snap(ys)
    with np.errstate(invalid="ignore"):
        x0 = np.floor(xs)
        y0 = np.floor(ys)
        valid = (
            np.isfinite(xs) & np.isfinite(ys)
            & (x0 >= 0) & (x0 + 1 <= w - 1)
            & (y0 >= 0) & (y0 + 1 <= h - 1)
        )
    xi = np.where(valid, x0, 0).astype(np.intp)
    yi = np.where(valid, y0, 0).astype(np.intp)
    wx = np.where(valid, xs - x0, 0.0)[:, None]
    wy = np.where(valid, ys - y0, 0.0)[:, None]
    p00 = data[yi, xi]
    p01 = data[yi, xi + 1]
    p10 = data[yi + 1, xi]
    p11 = data[yi + 1, xi + 1]
    top = (1.0 - wx) * p00 + wx * p01
    bot = (1.0 - wx) * p10 + wx * p11
    out = (1.0 - wy) * top + wy * bot
    out[~valid] = 0.0
    return out, valid


def inverse_warp(
    src: Image, depth_t: DepthMap, pose_t_to_s: Se3Pose, k: Intrinsics
) -> tuple[Image, ValidityMask]:
    """Reconstruct the target view by sampling src at projected pixel locations.

    Each target pixel with valid depth is back-projected, moved by the
    target-to-source pose and reprojected; the mask is False where the depth
    is invalid, the point falls behind the camera, or the sample lands out of
    bounds.
    """
    if src.width != k.width or src.height != k.height:
        raise ValueError("source image does not match intrinsics size")
    if depth_t.width != k.width or depth_t.height != k.height:
        raise ValueError("target depth does not match intrinsics size")
    h, w = k.height, k.width
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    z = depth_t.data
    depth_ok = np.isfinite(z)
    zs = np.where(depth_ok, z, np.nan)
    u_s, v_s, in_front = project_pixels(
        us.reshape(-1), vs.reshape(-1), zs.reshape(-1), pose_t_to_s, k
    )
    colors, sample_ok = _bilinear_gather(src.data, u_s, v_s)
    mask = depth_ok.reshape(-1) & in_front & sample_ok
    recon = np.where(mask[:, None], colors, 0.0).reshape(h, w, src.channels)
    return Image(recon), ValidityMask(mask.reshape(h, w))


def photometric_loss(
    target: Image, recon: Image, mask: ValidityMask
) -> tuple[float, int]:
    """Mean absolute intensity difference over masked pixels.

    Returns (loss, valid_count); the raw per-pixel sum is recoverable as
    loss * valid_count * channels. Loss is 0 when the mask is empty.
    """
    if target.data.shape != recon.data.shape:
        raise ValueError("target/recon shape mismatch")
    if mask.data.shape != target.data.shape[:2]:
        raise ValueError("mask shape mismatch")
    count = mask.count
    if count == 0:
        return 0.0, 0
    diff = np.abs(target.data - recon.data)[mask.data]
    return float(diff.sum() / (count * target.channels)), count


def depth_l1_loss(pred: DepthMap, gt: DepthMap) -> tuple[float, int]:
    """Mean |pred - gt| over pixels valid in both maps."""
    if pred.data.shape != gt.data.shape:
        raise ValueError("depth map shape mismatch")
    both = pred.valid & gt.valid
    count = int(both.sum())
    if count == 0:
        return 0.0, 0
    return float(np.abs(pred.data[both] - gt.data[both]).mean()), count


def joint_loss(
    l_det: float, l_depth: float, lambda_det: float, lambda_depth: float
) -> float:
    """Weighted sum of the (externally supplied) detection loss and depth loss."""
    if lambda_det < 0 or lambda_depth < 0:
        raise ValueError("loss weights must be non-negative")
    return lambda_det * l_det + lambda_depth * l_depth
