"""End-to-end tests of the command-line surface."""

import json

import numpy as np
import pytest

from mono3d import kitti_io, mapeval
from mono3d.cli import main, trajectory_svg
from mono3d.geometry import Se3Pose, compose, depth_to_pointcloud, se3_exp
from mono3d.imagery import DepthMap

CALIB_TEXT = "P2: 100 0 50 0 0 100 50 0 0 0 1 0\n"


def _write_depth(tmp_path, data, name="depth.png"):
    path = tmp_path / name
    path.write_bytes(kitti_io.write_depth_png(DepthMap(data)))
    return path


def _write_calib(tmp_path):
    path = tmp_path / "calib.txt"
    path.write_text(CALIB_TEXT)
    return path


def _random_trajectory(rng, n):
    poses = [Se3Pose.identity()]
    for _ in range(n - 1):
        xi = np.concatenate([rng.normal(0, 0.5, 3), rng.normal(0, 0.05, 3)])
        poses.append(compose(poses[-1], se3_exp(xi)))
    return mapeval.Trajectory(tuple(poses))


GT_LABEL = (
    "Car 0.00 0 -1.58 587.01 150.00 614.12 200.00 1.65 1.67 3.64 "
    "-0.65 1.71 46.70 -1.59\n"
)
PRED_LABEL = (
    "Car 0.00 0 -1.58 587.01 150.00 614.12 200.00 1.65 1.67 3.64 "
    "-0.65 1.71 46.70 -1.59 0.90\n"
)


class TestPseudolidar:
    def test_constant_depth_counts_every_pixel(self, tmp_path, capsys):
        depth = _write_depth(tmp_path, np.full((4, 6), 10.0))
        out = tmp_path / "cloud.bin"
        rc = main(["pseudolidar", str(depth), str(_write_calib(tmp_path)),
                   str(out)])
        assert rc == 0
        assert "points=24 skipped=0" in capsys.readouterr().out
        assert out.stat().st_size == 24 * 16

    def test_all_invalid_map(self, tmp_path, capsys):
        depth = _write_depth(tmp_path, np.full((4, 6), np.nan))
        out = tmp_path / "cloud.bin"
        rc = main(["pseudolidar", str(depth), str(_write_calib(tmp_path)),
                   str(out)])
        assert rc == 0
        assert "points=0 skipped=24" in capsys.readouterr().out
        assert out.stat().st_size == 0

    def test_matches_library_call(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        data = rng.uniform(1.0, 60.0, (8, 9))
        depth_path = _write_depth(tmp_path, data)
        out = tmp_path / "cloud.bin"
        rc = main(["--json", "pseudolidar", str(depth_path),
                   str(_write_calib(tmp_path)), str(out)])
        assert rc == 0
        record = json.loads(capsys.readouterr().out)
        decoded = kitti_io.read_pointcloud_bin(out.read_bytes())
        depth = kitti_io.read_depth_png(depth_path.read_bytes())
        calib = kitti_io.parse_calib(CALIB_TEXT)
        cloud, skipped = depth_to_pointcloud(
            depth, calib.intrinsics(9, 8), max_depth=80.0
        )
        assert record["points"] == len(cloud) == len(decoded)
        assert record["skipped"] == skipped
        assert np.abs(decoded.points - cloud.points).max() < 1e-5

    def test_missing_file_fails(self, tmp_path, capsys):
        rc = main(["pseudolidar", str(tmp_path / "nope.png"),
                   str(_write_calib(tmp_path)), str(tmp_path / "o.bin")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestTraj:
    def _pose_file(self, tmp_path, traj, name):
        path = tmp_path / name
        path.write_text(kitti_io.write_odometry_poses(traj))
        return path

    def test_self_comparison(self, tmp_path, capsys):
        traj = _random_trajectory(np.random.default_rng(1), 6)
        path = self._pose_file(tmp_path, traj, "gt.txt")
        rc = main(["traj", str(path), str(path)])
        assert rc == 0
        assert capsys.readouterr().out.strip() == "0.0000 ± 0.0000"

    def test_scale_doubled_prediction(self, tmp_path, capsys):
        gt = _random_trajectory(np.random.default_rng(2), 6)
        pred = mapeval.Trajectory(tuple(
            Se3Pose(p.rotation, 2.0 * p.translation) for p in gt.poses
        ))
        rc = main(["traj", str(self._pose_file(tmp_path, pred, "pred.txt")),
                   str(self._pose_file(tmp_path, gt, "gt.txt"))])
        assert rc == 0
        assert capsys.readouterr().out.strip() == "0.0000 ± 0.0000"

    def test_matches_library_and_writes_svg(self, tmp_path, capsys):
        rng = np.random.default_rng(3)
        gt = _random_trajectory(rng, 8)
        pred = _random_trajectory(rng, 8)
        svg_path = tmp_path / "plot.svg"
        rc = main(["--json", "traj",
                   str(self._pose_file(tmp_path, pred, "pred.txt")),
                   str(self._pose_file(tmp_path, gt, "gt.txt")),
                   "--svg", str(svg_path)])
        assert rc == 0
        record = json.loads(capsys.readouterr().out)
        report = mapeval.ate(pred, gt, snippet_len=3)
        assert abs(record["mean"] - report.mean) < 1e-12
        assert abs(record["std"] - report.std) < 1e-12
        svg = svg_path.read_text()
        assert svg.count("<polyline") == 2
        assert 'stroke="red"' in svg and 'stroke="blue"' in svg

    def test_relative_flag_accumulates(self, tmp_path, capsys):
        gt = _random_trajectory(np.random.default_rng(4), 6)
        rels = mapeval.Trajectory(tuple(mapeval.derive_relatives(gt)))
        rc = main(["traj", str(self._pose_file(tmp_path, rels, "rel.txt")),
                   str(self._pose_file(tmp_path, gt, "gt.txt")),
                   "--relative"])
        assert rc == 0
        assert capsys.readouterr().out.strip() == "0.0000 ± 0.0000"

    def test_length_mismatch_fails(self, tmp_path, capsys):
        a = _random_trajectory(np.random.default_rng(5), 6)
        b = _random_trajectory(np.random.default_rng(6), 7)
        rc = main(["traj", str(self._pose_file(tmp_path, a, "a.txt")),
                   str(self._pose_file(tmp_path, b, "b.txt"))])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestAp:
    def _label_dirs(self, tmp_path, pred_text=PRED_LABEL, frames=2):
        pred_dir = tmp_path / "pred"
        gt_dir = tmp_path / "gt"
        pred_dir.mkdir()
        gt_dir.mkdir()
        for i in range(frames):
            (gt_dir / f"{i:06d}.txt").write_text(GT_LABEL)
            if pred_text is not None:
                (pred_dir / f"{i:06d}.txt").write_text(pred_text)
        return pred_dir, gt_dir

    def test_perfect_predictions_score_100(self, tmp_path, capsys):
        pred_dir, gt_dir = self._label_dirs(tmp_path)
        rc = main(["--json", "ap", str(pred_dir), str(gt_dir), "--iou", "0.5"])
        assert rc == 0
        records = [json.loads(line)
                   for line in capsys.readouterr().out.splitlines()]
        assert len(records) == 6  # two modes x three difficulties
        assert all(r["ap"] == 100.0 for r in records)

    def test_empty_prediction_dir_scores_0(self, tmp_path, capsys):
        pred_dir, gt_dir = self._label_dirs(tmp_path, pred_text=None)
        rc = main(["--json", "ap", str(pred_dir), str(gt_dir)])
        assert rc == 0
        records = [json.loads(line)
                   for line in capsys.readouterr().out.splitlines()]
        assert all(r["ap"] == 0.0 for r in records)

    def test_thread_count_does_not_change_output(self, tmp_path, capsys):
        pred_dir, gt_dir = self._label_dirs(tmp_path)

        def run(threads):
            rc = main(["--json", "--threads", str(threads), "ap",
                       str(pred_dir), str(gt_dir)])
            assert rc == 0
            return capsys.readouterr().out

        assert run(1) == run(4)

    def test_unpaired_prediction_fails(self, tmp_path, capsys):
        pred_dir, gt_dir = self._label_dirs(tmp_path)
        (pred_dir / "999999.txt").write_text(PRED_LABEL)
        rc = main(["ap", str(pred_dir), str(gt_dir)])
        assert rc == 1
        assert "no ground-truth frame" in capsys.readouterr().err

    def test_human_readable_grid(self, tmp_path, capsys):
        pred_dir, gt_dir = self._label_dirs(tmp_path)
        rc = main(["ap", str(pred_dir), str(gt_dir), "--iou", "0.5"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "easy" in out and "bev" in out and "100.0" in out


class TestOptimizeDemo:
    ARGS = ["optimize-demo", "--motion", "0", "--snippets", "2",
            "--max-iters", "40"]

    def test_zero_motion_errors_vanish(self, capsys):
        rc = main(["--json"] + self.ARGS)
        assert rc == 0
        record = json.loads(capsys.readouterr().out)
        assert record["median_error_plain"] < 1e-6
        assert record["median_error_consistent"] < 1e-6

    def test_noiseless_defaults_recover_submillimeter(self, capsys):
        rc = main(["--json", "optimize-demo"])
        assert rc == 0
        record = json.loads(capsys.readouterr().out)
        assert record["median_error_plain"] < 1e-3
        assert record["median_error_consistent"] < 1e-3

    def test_fixed_seed_reports_identical(self, capsys):
        rc = main(self.ARGS)
        assert rc == 0
        first = capsys.readouterr().out
        rc = main(self.ARGS)
        assert rc == 0
        assert capsys.readouterr().out == first


class TestBench:
    def test_empty_fixture_list(self, capsys):
        rc = main(["bench"])
        assert rc == 0

    def test_single_frame_table(self, tmp_path, capsys):
        rng = np.random.default_rng(7)
        depth = tmp_path / "d.png"
        depth.write_bytes(kitti_io.write_depth_png(
            DepthMap(rng.uniform(1.0, 60.0, (48, 64)))
        ))
        rc = main(["--json", "bench", str(depth),
                   "--calib", str(_write_calib(tmp_path)),
                   "--repetitions", "3"])
        assert rc == 0
        record = json.loads(capsys.readouterr().out)
        assert record["stages"]["pseudolidar"] > 0


class TestTrajectorySvg:
    def test_contains_both_paths(self):
        gt = np.array([[0.0, 0, 0], [1, 0, 1], [2, 0, 3]])
        pred = gt + 0.1
        svg = trajectory_svg(gt, pred)
        assert svg.count("<polyline") == 2
        assert svg.index('stroke="red"') < svg.index('stroke="blue"')
