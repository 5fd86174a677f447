"""Rendering throughput harness.

Measures steady-state frames per second for each output configuration at
each resolution, after a warmup. Absolute numbers are hardware-specific;
the stable properties are the orderings (cheaper configs are faster) and
the resolution independence of the non-visual row, which does no rendering
and is therefore measured once and repeated across resolutions.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .bvh import BVH
from .dataset import PanoramaDataset
from .geometry import Pose6D, wrap_angle
from .ibr import RenderConfig, render_view
from .render import render_equirect

SCHEMA_VERSION = 1
DEFAULT_CONFIGS = ("rgbd_pre", "rgbd_post", "depth", "normal", "semantic", "nonvisual")
DEFAULT_RESOLUTIONS = (128, 256, 512)
MIN_FRAMES = 100
WARMUP_FRAMES = 10


@dataclass(frozen=True)
class BenchRow:
    config: str
    resolution: int  # equirect height; width is 2x
    fps: float
    frames: int
    k: int
    lambda_d: float
    n_f: int | None

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.frames < MIN_FRAMES:
            raise ValueError(f"need at least {MIN_FRAMES} measured frames")


@dataclass
class BenchReport:
    rows: list[BenchRow]
    warmup: int = WARMUP_FRAMES
    schema_version: int = SCHEMA_VERSION

    def row(self, config: str, resolution: int) -> BenchRow:
        for r in self.rows:
            if r.config == config and r.resolution == resolution:
                return r
        raise KeyError((config, resolution))

    def to_json(self) -> dict:
        return {"schema_version": self.schema_version, "warmup": self.warmup,
                "rows": [asdict(r) for r in self.rows]}

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1)


def _bench_poses(dataset: PanoramaDataset, n: int) -> list[Pose6D]:
    """Deterministic pose loop circling the first capture position."""
    base = dataset.views[0].pose
    poses = []
    for i in range(n):
        ang = 2 * math.pi * i / n
        poses.append(Pose6D(base.x + 0.15 * math.cos(ang),
                            base.y + 0.15 * math.sin(ang),
                            base.z, 0.0, 0.0, wrap_angle(ang)))
    return poses


def _sensor_only(pose: Pose6D, target: np.ndarray) -> np.ndarray:
    dist = math.hypot(pose.x - target[0], pose.y - target[1])
    ang = wrap_angle(math.atan2(target[1] - pose.y, target[0] - pose.x) - pose.yaw)
    return np.array([pose.x, pose.y, pose.z, pose.roll, pose.pitch, pose.yaw,
                     0.0, 0.0, 0.0, dist, ang])


def fps_benchmark(bvh: BVH, dataset: PanoramaDataset,
                  configs=DEFAULT_CONFIGS, resolutions=DEFAULT_RESOLUTIONS,
                  frames: int = MIN_FRAMES, warmup: int = WARMUP_FRAMES,
                  k: int = 2, lambda_d: float = 1.0, filler=None) -> BenchReport:
    if frames < MIN_FRAMES:
        raise ValueError(f"frames must be >= {MIN_FRAMES}")
    poses = _bench_poses(dataset, 16)
    target = np.array([poses[0].x + 2.0, poses[0].y])
    n_f = getattr(filler, "n_f", None)
    rows: list[BenchRow] = []

    if filler is not None:
        from .filler.train import images_to_nchw, nchw_to_images
    else:
        images_to_nchw = nchw_to_images = None

    def make_frame_fn(config: str, height: int):
        width = 2 * height
        cfg = RenderConfig(k=min(k, len(dataset)), lambda_d=lambda_d,
                           width=width, height=height)

        def rgbd_pre(pose):
            render_view(dataset, bvh, pose, cfg)

        def rgbd_post(pose):
            result = render_view(dataset, bvh, pose, cfg)
            if filler is not None:
                x = images_to_nchw(result.rgb.data[None])
                nchw_to_images(filler.forward(x, training=False))

        def mesh_modality(pose, modality=config):
            render_equirect(bvh, pose, width, height, modality)

        return {"rgbd_pre": rgbd_pre, "rgbd_post": rgbd_post,
                "depth": mesh_modality, "normal": mesh_modality,
                "semantic": mesh_modality}[config]

    nonvisual_fps = None
    for config in configs:
        if config == "nonvisual":
            # no rendering happens: measure once, repeat per resolution
            for _ in range(warmup):
                _sensor_only(poses[0], target)
            t0 = time.perf_counter()
            for i in range(frames):
                _sensor_only(poses[i % len(poses)], target)
            nonvisual_fps = frames / (time.perf_counter() - t0)
            for res in resolutions:
                rows.append(BenchRow("nonvisual", res, nonvisual_fps, frames,
                                     k, lambda_d, n_f))
            continue
        for res in resolutions:
            fn = make_frame_fn(config, res)
            for i in range(warmup):
                fn(poses[i % len(poses)])
            t0 = time.perf_counter()
            for i in range(frames):
                fn(poses[i % len(poses)])
            fps = frames / (time.perf_counter() - t0)
            rows.append(BenchRow(config, res, fps, frames, k, lambda_d, n_f))
    return BenchReport(rows, warmup=warmup)
