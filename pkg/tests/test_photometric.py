"""Bilinear sampling, inverse warping and loss-function tests."""

import numpy as np
import pytest

from mono3d.geometry import Intrinsics, Se3Pose, se3_exp, se3_log
from mono3d.imagery import DepthMap, Image, ValidityMask
from mono3d.optimize import make_scene, render_scene
from mono3d.photometric import (
    bilinear_sample,
    depth_l1_loss,
    inverse_warp,
    joint_loss,
    photometric_loss,
)


def _checker():
    return Image(np.array([[0.0, 1.0], [1.0, 0.0]]))


class TestBilinearSample:
    def test_integer_coordinates_exact(self):
        rng = np.random.default_rng(0)
        img = Image(rng.uniform(0, 1, (4, 5, 3)))
        for y in range(3):
            for x in range(4):
                color, valid = bilinear_sample(img, x, y)
                assert valid
                assert np.array_equal(color, img.data[y, x])

    def test_center_of_checker(self):
        color, valid = bilinear_sample(_checker(), 0.5, 0.5)
        assert valid and color[0] == 0.5

    def test_out_of_bounds(self):
        color, valid = bilinear_sample(_checker(), -0.1, 0.0)
        assert not valid and color[0] == 0.0

    def test_cell_must_fit_inside(self):
        # x = 1.2 needs columns 1 and 2; a 2-wide image has no column 2.
        _, valid = bilinear_sample(_checker(), 1.2, 0.0)
        assert not valid

    def test_convex_combination_of_neighbors(self):
        rng = np.random.default_rng(1)
        img = Image(rng.uniform(0, 1, (6, 6, 1)))
        for _ in range(100):
            x, y = rng.uniform(0, 4.999, 2)
            color, valid = bilinear_sample(img, x, y)
            if not valid:
                continue
            cell = img.data[int(y) : int(y) + 2, int(x) : int(x) + 2, 0]
            assert cell.min() - 1e-12 <= color[0] <= cell.max() + 1e-12


def _scene_pair(seed=21, motion=(0.03, 0.0, 0.0)):
    poses = [Se3Pose.identity(), Se3Pose.translate(*motion)]
    scene = make_scene(seed=seed, width=96, height=64, focal=40.0,
                       plane_depth=6.0, poses=poses)
    (tgt, dep), (src, _) = render_scene(scene, 0), render_scene(scene, 1)
    return tgt, dep, src, scene


class TestInverseWarp:
    def test_identity_pose_bit_exact_on_mask(self):
        tgt, dep, _, scene = _scene_pair()
        recon, mask = inverse_warp(tgt, dep, Se3Pose.identity(),
                                   scene.intrinsics)
        assert mask.count > 0
        assert np.array_equal(recon.data[mask.data], tgt.data[mask.data])

    def test_constant_image_stays_constant(self):
        k = Intrinsics(40.0, 40.0, 20.0, 15.0, 41, 31)
        src = Image(np.full((31, 41, 1), 0.7))
        dep = DepthMap(np.full((31, 41), 5.0))
        recon, mask = inverse_warp(src, dep, Se3Pose.translate(0.2, 0.1, 0.0), k)
        assert mask.count > 0
        assert np.allclose(recon.data[mask.data], 0.7, atol=1e-12)

    def test_true_pose_reconstructs_target(self):
        tgt, dep, src, scene = _scene_pair()
        recon, mask = inverse_warp(src, dep, scene.relative_pose(0, 1),
                                   scene.intrinsics)
        loss, count = photometric_loss(tgt, recon, mask)
        assert count > 0.5 * tgt.height * tgt.width
        assert loss < 1e-3

    def test_dimension_mismatch(self):
        tgt, dep, _, scene = _scene_pair()
        k = Intrinsics(40.0, 40.0, 20.0, 15.0, 10, 10)
        with pytest.raises(ValueError):
            inverse_warp(tgt, dep, Se3Pose.identity(), k)


class TestPhotometricLoss:
    def test_equal_images(self):
        tgt, _, _, _ = _scene_pair()
        full = ValidityMask(np.ones((tgt.height, tgt.width), dtype=bool))
        loss, count = photometric_loss(tgt, tgt, full)
        assert loss == 0.0 and count == tgt.height * tgt.width

    def test_constant_offset(self):
        base = Image(np.full((4, 4, 1), 0.25))
        shifted = Image(np.full((4, 4, 1), 0.5))
        full = ValidityMask(np.ones((4, 4), dtype=bool))
        loss, _ = photometric_loss(base, shifted, full)
        assert abs(loss - 0.25) < 1e-15

    def test_matches_per_pixel_loop(self):
        rng = np.random.default_rng(2)
        a = Image(rng.uniform(0, 1, (5, 7, 3)))
        b = Image(rng.uniform(0, 1, (5, 7, 3)))
        mask = ValidityMask(rng.random((5, 7)) < 0.6)
        loss, count = photometric_loss(a, b, mask)
        total, n = 0.0, 0
        for i in range(5):
            for j in range(7):
                if mask.data[i, j]:
                    n += 1
                    for c in range(3):
                        total += abs(a.data[i, j, c] - b.data[i, j, c])
        assert count == n
        assert abs(loss - total / (n * 3)) < 1e-12

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        a = Image(rng.uniform(0, 1, (5, 5, 1)))
        b = Image(rng.uniform(0, 1, (5, 5, 1)))
        mask = ValidityMask(rng.random((5, 5)) < 0.7)
        assert photometric_loss(a, b, mask) == photometric_loss(b, a, mask)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            a, b, c = (Image(rng.uniform(0, 1, (4, 4, 1))) for _ in range(3))
            mask = ValidityMask(rng.random((4, 4)) < 0.8)
            ab, _ = photometric_loss(a, b, mask)
            bc, _ = photometric_loss(b, c, mask)
            ac, _ = photometric_loss(a, c, mask)
            assert ac <= ab + bc + 1e-12

    def test_empty_mask(self):
        tgt, _, _, _ = _scene_pair()
        empty = ValidityMask(np.zeros((tgt.height, tgt.width), dtype=bool))
        assert photometric_loss(tgt, tgt, empty) == (0.0, 0)

    def test_loss_descends_toward_true_pose(self):
        # Sampled along the twist-space segment from a perturbed pose to the
        # true one, the warp loss trends downward and bottoms out at the end.
        tgt, dep, src, scene = _scene_pair()
        true_pose = scene.relative_pose(0, 1)
        offset = np.array([0.02, -0.01, 0.01, 0.002, -0.001, 0.001])
        start = se3_log(true_pose) + offset
        losses = []
        for alpha in np.linspace(0.0, 1.0, 11):
            pose = se3_exp((1 - alpha) * start + alpha * se3_log(true_pose))
            recon, mask = inverse_warp(src, dep, pose, scene.intrinsics)
            loss, _ = photometric_loss(tgt, recon, mask)
            losses.append(loss)
        assert losses[-1] == min(losses)
        diffs = np.diff(losses)
        assert diffs.mean() < 0
        assert (diffs < 1e-4).all()


class TestDepthL1Loss:
    def test_equal_maps(self):
        d = DepthMap(np.full((3, 3), 4.0))
        assert depth_l1_loss(d, d) == (0.0, 9)

    def test_constant_offset(self):
        gt = DepthMap(np.full((3, 3), 4.0))
        pred = DepthMap(np.full((3, 3), 6.0))
        loss, count = depth_l1_loss(pred, gt)
        assert loss == 2.0 and count == 9

    def test_nan_holes_excluded(self):
        rng = np.random.default_rng(5)
        gt_data = rng.uniform(1, 10, (6, 6))
        gt_data[rng.random((6, 6)) < 0.3] = np.nan
        pred_data = rng.uniform(1, 10, (6, 6))
        loss, count = depth_l1_loss(DepthMap(pred_data), DepthMap(gt_data))
        both = np.isfinite(gt_data) & np.isfinite(pred_data)
        assert count == both.sum()
        ref = np.abs(pred_data[both] - gt_data[both]).mean()
        assert abs(loss - ref) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            depth_l1_loss(DepthMap(np.full((2, 2), 1.0)),
                          DepthMap(np.full((3, 3), 1.0)))


class TestJointLoss:
    def test_zero(self):
        assert joint_loss(0.0, 0.0, 1.0, 1.0) == 0.0

    def test_unit_weights(self):
        assert joint_loss(1.0, 2.0, 1.0, 1.0) == 3.0

    def test_weighted(self):
        assert abs(joint_loss(0.5, 1.5, 2.0, 0.1) - 1.15) < 1e-15

    def test_rejects_negative_weight(self):
        with pytest.raises(ValueError):
            joint_loss(1.0, 1.0, -0.5, 1.0)
