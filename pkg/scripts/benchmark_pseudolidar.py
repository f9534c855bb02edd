#!/usr/bin/env python3
"""Timing harness for depth back-projection at detection resolution.

Generates a random 352 x 1216 depth map, converts it to a point cloud
repeatedly and reports the median wall time per stage (back-projection and
binary serialization).
"""

import argparse
import statistics
import time

import numpy as np

from mono3d.geometry import Intrinsics, depth_to_pointcloud
from mono3d.imagery import DepthMap
from mono3d.kitti_io import write_pointcloud_bin


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repetitions", type=int, default=20)
    parser.add_argument("--width", type=int, default=1216)
    parser.add_argument("--height", type=int, default=352)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    depth = DepthMap(rng.uniform(1.0, 79.0, (args.height, args.width)))
    k = Intrinsics(721.5, 721.5, args.width / 2.0, args.height / 2.0,
                   args.width, args.height)

    def timed(fn):
        times = []
        for _ in range(args.repetitions):
            t0 = time.perf_counter()
            fn()
            times.append((time.perf_counter() - t0) * 1000.0)
        return statistics.median(times)

    cloud, skipped = depth_to_pointcloud(depth, k)
    backproject_ms = timed(lambda: depth_to_pointcloud(depth, k))
    serialize_ms = timed(lambda: write_pointcloud_bin(cloud))

    print(f"resolution      : {args.width} x {args.height} "
          f"({len(cloud)} points, {skipped} skipped)")
    print(f"back-projection : {backproject_ms:8.2f} ms median")
    print(f"serialization   : {serialize_ms:8.2f} ms median")


if __name__ == "__main__":
    main()
