"""Image, depth map and validity mask containers.

All pixel data is row-major numpy: images are (height, width, channels)
float arrays in [0, 1], depth maps are (height, width) float arrays in
meters with NaN marking invalid pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Image:
    data: np.ndarray  # (h, w, c), c in {1, 3}, values in [0, 1]

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, 1|3) image data, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class DepthMap:
    data: np.ndarray  # (h, w) meters, NaN = invalid

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"expected (h, w) depth data, got shape {arr.shape}")
        finite = np.isfinite(arr)
        if np.isinf(arr).any():
            raise ValueError("depth map contains infinities (use NaN for invalid)")
        if (arr[finite] <= 0).any():
            raise ValueError("valid depth entries must be positive")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.data)


@dataclass(frozen=True)
class ValidityMask:
    data: np.ndarray  # (h, w) bool, True = pixel participates in loss

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=bool).copy()
        if arr.ndim != 2:
            raise ValueError(f"expected (h, w) mask data, got shape {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def count(self) -> int:
        return int(self.data.sum())
