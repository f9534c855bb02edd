"""Shared helpers for the test suite."""

import math

import numpy as np
import pytest

from mono3d.geometry import Intrinsics, Se3Pose, se3_exp


@pytest.fixture
def k0() -> Intrinsics:
    """Square camera with f = 100 px and principal point (50, 50)."""
    return Intrinsics(100.0, 100.0, 50.0, 50.0, 101, 101)


def random_pose(
    rng: np.random.Generator,
    trans_scale: float = 1.0,
    max_angle: float = 0.5 * math.pi,
) -> Se3Pose:
    """Random rigid transform with bounded rotation angle."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    xi = np.concatenate([rng.normal(0.0, trans_scale, 3), angle * axis])
    return se3_exp(xi)
