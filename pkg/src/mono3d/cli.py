"""Command-line surface tying the pipeline together.

Subcommands: pseudolidar (depth PNG -> .bin point cloud), traj (trajectory
ATE + SVG plot), ap (detection AP grid), optimize-demo (synthetic snippet
experiment), bench (per-stage timing table). Machine-readable output via
--json (one JSON-lines record per result); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import deteval, kitti_io, mapeval
from .geometry import Se3Pose, depth_to_pointcloud
from .imagery import DepthMap, Image
from .optimize import (
    OptimizeConfig,
    make_scene,
    render_scene,
    run_snippet_experiment,
)
from .photometric import inverse_warp

_LEVELS = [deteval.Difficulty.EASY, deteval.Difficulty.MODERATE,
           deteval.Difficulty.HARD]


def _default_threads() -> int:
    env = os.environ.get("SM3D_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _emit(args, record: dict, human: str) -> None:
    if args.json:
        print(json.dumps(record, sort_keys=True))
    else:
        print(human)


def cmd_pseudolidar(args) -> int:
    depth = kitti_io.read_depth_png(Path(args.depth).read_bytes())
    calib = kitti_io.parse_calib(Path(args.calib).read_text())
    k = calib.intrinsics(depth.width, depth.height, key=args.projection)
    cloud, skipped = depth_to_pointcloud(depth, k, max_depth=args.max_depth)
    Path(args.out).write_bytes(
        kitti_io.write_pointcloud_bin(cloud, velodyne_frame=args.velodyne_frame)
    )
    zmin = float(cloud.points[:, 2].min()) if len(cloud) else 0.0
    zmax = float(cloud.points[:, 2].max()) if len(cloud) else 0.0
    _emit(
        args,
        {"command": "pseudolidar", "points": len(cloud), "skipped": skipped,
         "min_depth": zmin, "max_depth": zmax, "out": args.out},
        f"points={len(cloud)} skipped={skipped} "
        f"min_depth={zmin:.3f} max_depth={zmax:.3f}",
    )
    return 0


def trajectory_svg(gt: np.ndarray, pred: np.ndarray, size: int = 640) -> str:
    """SVG with the ground-plane (x-z) paths: ground truth red, estimate blue."""
    both = np.vstack([gt[:, [0, 2]], pred[:, [0, 2]]])
    lo = both.min(axis=0)
    span = max(float((both.max(axis=0) - lo).max()), 1e-9)
    margin = 0.05 * size
    scale = (size - 2 * margin) / span

    def polyline(points: np.ndarray, color: str) -> str:
        coords = " ".join(
            f"{margin + (p[0] - lo[0]) * scale:.2f},"
            f"{size - margin - (p[1] - lo[1]) * scale:.2f}"
            for p in points[:, [0, 2]]
        )
        return (
            f'<polyline fill="none" stroke="{color}" stroke-width="2" '
            f'points="{coords}" />'
        )

    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
        f'height="{size}" viewBox="0 0 {size} {size}">\n'
        f"{polyline(gt, 'red')}\n{polyline(pred, 'blue')}\n</svg>\n"
    )


def cmd_traj(args) -> int:
    gt = kitti_io.parse_odometry_poses(Path(args.gt).read_text())
    pred_traj = kitti_io.parse_odometry_poses(Path(args.pred).read_text())
    if args.relative:
        pred_traj = mapeval.accumulate(pred_traj.poses)
    report = mapeval.ate(pred_traj, gt, snippet_len=args.snippet_len)
    if args.svg:
        Path(args.svg).write_text(
            trajectory_svg(gt.positions, pred_traj.positions)
        )
    _emit(
        args,
        {"command": "traj", "mean": report.mean, "std": report.std,
         "snippet_len": report.snippet_len, "snippets": len(report.per_snippet)},
        report.format(),
    )
    return 0


def _boxes_from_label_file(path: Path, with_scores: bool) -> list[deteval.Box3D]:
    boxes = []
    for rec in kitti_io.parse_labels(path.read_text()):
        if rec.is_dont_care:
            continue
        box = rec.to_box3d()
        if with_scores and box.score is None:
            box = deteval.Box3D(
                box.center, box.size, box.yaw, 1.0, box.label,
                box.occlusion, box.truncation, box.bbox_height,
            )
        boxes.append(box)
    return boxes


def cmd_ap(args) -> int:
    gt_files = sorted(Path(args.gt_dir).glob("*.txt"))
    if not gt_files:
        print(f"no ground-truth label files in {args.gt_dir}", file=sys.stderr)
        return 1
    gt_ids = {f.stem for f in gt_files}
    pred_dir = Path(args.pred_dir)
    for f in pred_dir.glob("*.txt"):
        if f.stem not in gt_ids:
            print(f"prediction {f.name} has no ground-truth frame",
                  file=sys.stderr)
            return 1
    gts = [_boxes_from_label_file(f, with_scores=False) for f in gt_files]
    preds = []
    for f in gt_files:
        pred_file = pred_dir / f.name
        preds.append(
            _boxes_from_label_file(pred_file, with_scores=True)
            if pred_file.exists()
            else []
        )

    modes = [args.mode] if args.mode else ["bev", "3d"]
    levels = (
        [deteval.Difficulty(args.level)] if args.level else list(_LEVELS)
    )
    cells = [(mode, level) for mode in modes for level in levels]

    def evaluate(cell):
        mode, level = cell
        return deteval.average_precision(
            preds, gts, iou_threshold=args.iou, mode=mode, level=level,
            label=args.object_class,
        ).ap

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            aps = list(pool.map(evaluate, cells))
    else:
        aps = [evaluate(c) for c in cells]
    results = dict(zip(cells, aps))

    if args.json:
        for (mode, level), ap in results.items():
            print(json.dumps(
                {"command": "ap", "mode": mode, "level": level.value,
                 "iou": args.iou, "ap": ap},
                sort_keys=True,
            ))
    else:
        header = " ".join(f"{lv.value:>10}" for lv in levels)
        print(f"{'':>4} {header}  (IoU={args.iou})")
        for mode in modes:
            row = " ".join(f"{results[(mode, lv)]:>10.1f}" for lv in levels)
            print(f"{mode:>4} {row}")
    return 0


def cmd_optimize_demo(args) -> int:
    cfg = OptimizeConfig(
        max_iters=args.max_iters,
        pyramid_levels=args.pyramid_levels,
    )
    report = run_snippet_experiment(
        n_snippets=args.snippets,
        noise_sigma=args.noise,
        lambda_pc=args.lambda_pc,
        seed=args.seed,
        motion=args.motion,
        cfg=cfg,
    )
    record = {
        "command": "optimize-demo",
        "snippets": args.snippets,
        "noise": args.noise,
        "lambda_pc": args.lambda_pc,
        "median_error_plain": report.median_plain,
        "median_error_consistent": report.median_consistent,
        "median_residual": float(np.median(report.residuals_consistent)),
        "stalled": report.stalled_count,
    }
    _emit(
        args,
        record,
        "median pose error: lambda_pc=0 -> "
        f"{report.median_plain:.6f}, lambda_pc={args.lambda_pc:g} -> "
        f"{report.median_consistent:.6f}\n"
        f"median consistency residual: {record['median_residual']:.6f}\n"
        f"stalled runs: {report.stalled_count}",
    )
    return 0


def _bench_stages(depth: DepthMap, k):
    """Callables per pipeline stage, all on in-memory inputs."""
    png = kitti_io.write_depth_png(depth)
    scene = make_scene(seed=3, width=min(depth.width, 128),
                       height=min(depth.height, 96))
    img, dep = render_scene(scene, 0)
    rng = np.random.default_rng(0)
    rel = [Se3Pose.translate(0.0, 0.0, -1.0)] * 60
    traj = mapeval.accumulate(rel)
    noisy = mapeval.Trajectory(tuple(
        Se3Pose(p.rotation, p.translation + rng.normal(0, 0.01, 3))
        for p in traj.poses
    ))
    boxes = [
        deteval.Box3D((float(i), 1.5, 10.0 + i), (1.5, 1.6, 4.0), 0.1,
                      score=0.9, bbox_height=50.0)
        for i in range(8)
    ]
    return {
        "depth_decode": lambda: kitti_io.read_depth_png(png),
        "pseudolidar": lambda: depth_to_pointcloud(depth, k),
        "warp": lambda: inverse_warp(
            img, dep, Se3Pose.translate(0.05, 0.0, 0.0), scene.intrinsics
        ),
        "ate": lambda: mapeval.ate(noisy, traj, snippet_len=3),
        "ap": lambda: deteval.average_precision(
            [boxes], [boxes], iou_threshold=0.5, mode="bev",
            level=deteval.Difficulty.EASY,
        ),
    }


def cmd_bench(args) -> int:
    if not args.fixtures:
        _emit(args, {"command": "bench", "stages": {}}, "")
        return 0
    depth = kitti_io.read_depth_png(Path(args.fixtures[0]).read_bytes())
    calib = kitti_io.parse_calib(Path(args.calib).read_text())
    k = calib.intrinsics(depth.width, depth.height)
    stages = _bench_stages(depth, k)
    medians = {}
    for name, fn in stages.items():
        times = []
        for _ in range(args.repetitions):
            t0 = time.perf_counter()
            fn()
            times.append((time.perf_counter() - t0) * 1000.0)
        medians[name] = statistics.median(times)
    if args.json:
        print(json.dumps({"command": "bench", "stages": medians}, sort_keys=True))
    else:
        for name, ms in medians.items():
            print(f"{name:>14} {ms:10.3f} ms")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mono3d",
        description="Monocular mapping / pseudo-lidar detection pipeline tools",
    )
    parser.add_argument("--json", action="store_true",
                        help="machine-readable JSON-lines output")
    parser.add_argument("--threads", type=int, default=_default_threads(),
                        help="worker threads (default: SM3D_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pseudolidar", help="depth PNG -> point cloud .bin")
    p.add_argument("depth")
    p.add_argument("calib")
    p.add_argument("out")
    p.add_argument("--max-depth", type=float, default=80.0)
    p.add_argument("--velodyne-frame", action="store_true")
    p.add_argument("--projection", default="P2")
    p.set_defaults(func=cmd_pseudolidar)

    p = sub.add_parser("traj", help="trajectory ATE and SVG plot")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--snippet-len", type=int, default=3)
    p.add_argument("--svg")
    p.add_argument("--relative", action="store_true",
                   help="pred file holds frame-to-frame relative poses")
    p.set_defaults(func=cmd_traj)

    p = sub.add_parser("ap", help="average-precision grid over label dirs")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("--iou", type=float, default=0.7, choices=None)
    p.add_argument("--mode", choices=["bev", "3d"])
    p.add_argument("--level", choices=[lv.value for lv in _LEVELS])
    p.add_argument("--object-class", default="Car")
    p.set_defaults(func=cmd_ap)

    p = sub.add_parser("optimize-demo", help="synthetic snippet experiment")
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--motion", type=float, default=0.002)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--lambda-pc", type=float, default=1.0)
    p.add_argument("--snippets", type=int, default=5)
    p.add_argument("--max-iters", type=int, default=150)
    p.add_argument("--pyramid-levels", type=int, default=2)
    p.set_defaults(func=cmd_optimize_demo)

    p = sub.add_parser("bench", help="per-stage timing table")
    p.add_argument("fixtures", nargs="*")
    p.add_argument("--calib", default="")
    p.add_argument("--repetitions", type=int, default=20)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
