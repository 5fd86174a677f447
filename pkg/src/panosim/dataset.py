"""Panorama dataset directory format.

A dataset directory holds:

* ``poses.json`` — array of ``{id, x, y, z, roll, pitch, yaw, width, height}``
* ``rgb_<id>.ppm`` — binary P6, 8-bit, maxval 255
* ``depth_<id>.bin`` — little-endian float32, row-major, meters,
  ``width * height`` entries. Non-finite or non-positive entries mark
  invalid pixels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .geometry import EquirectImage, Pose6D


def write_ppm(path, rgb_u8: np.ndarray) -> None:
    rgb_u8 = np.asarray(rgb_u8, dtype=np.uint8)
    if rgb_u8.ndim != 3 or rgb_u8.shape[2] != 3:
        raise ShapeError(f"expected (H,W,3) uint8, got {rgb_u8.shape}")
    h, w = rgb_u8.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb_u8.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    # header: magic, width, height, maxval, single whitespace, then pixels
    fields: list[bytes] = []
    i = 0
    while len(fields) < 4:
        while i < len(raw) and raw[i : i + 1].isspace():
            i += 1
        if raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(raw) and not raw[j : j + 1].isspace():
            j += 1
        fields.append(raw[i:j])
        i = j
    i += 1
    if fields[0] != b"P6":
        raise ShapeError(f"not a binary PPM: magic {fields[0]!r}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ShapeError(f"only maxval 255 supported, got {maxval}")
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h * 3, offset=i)
    return data.reshape(h, w, 3).copy()


def write_pgm(path, gray_u8: np.ndarray) -> None:
    gray_u8 = np.asarray(gray_u8, dtype=np.uint8)
    if gray_u8.ndim != 2:
        raise ShapeError(f"expected (H,W) uint8, got {gray_u8.shape}")
    h, w = gray_u8.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(gray_u8.tobytes())


def rgb_to_u8(rgb: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(rgb, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def u8_to_rgb(u8: np.ndarray) -> np.ndarray:
    return (np.asarray(u8, dtype=np.float32) / 255.0).astype(np.float32)


@dataclass(frozen=True)
class PanoramaView:
    view_id: int
    pose: Pose6D
    rgb: EquirectImage
    depth: EquirectImage


class PanoramaDataset:
    """Sparse set of posed RGB-D panoramas (the source views for rendering)."""

    def __init__(self, views: list[PanoramaView]):
        if len({v.view_id for v in views}) != len(views):
            raise ShapeError("duplicate view ids in dataset")
        self.views = sorted(views, key=lambda v: v.view_id)
        self._by_id = {v.view_id: v for v in self.views}
        self.positions = np.array(
            [v.pose.position for v in self.views], dtype=np.float64
        ).reshape(len(self.views), 3)
        self.ids = np.array([v.view_id for v in self.views], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.views)

    def __iter__(self):
        return iter(self.views)

    def get(self, view_id: int) -> PanoramaView:
        return self._by_id[view_id]

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        records = []
        for v in self.views:
            records.append(
                {
                    "id": v.view_id,
                    "x": v.pose.x,
                    "y": v.pose.y,
                    "z": v.pose.z,
                    "roll": v.pose.roll,
                    "pitch": v.pose.pitch,
                    "yaw": v.pose.yaw,
                    "width": v.rgb.width,
                    "height": v.rgb.height,
                }
            )
            write_ppm(directory / f"rgb_{v.view_id}.ppm", rgb_to_u8(v.rgb.data))
            depth = v.depth.data.astype("<f4").copy()
            depth[~v.depth.mask] = -1.0
            (directory / f"depth_{v.view_id}.bin").write_bytes(depth.tobytes())
        with open(directory / "poses.json", "w") as f:
            json.dump(records, f, indent=1)

    @classmethod
    def load(cls, directory) -> "PanoramaDataset":
        directory = Path(directory)
        with open(directory / "poses.json") as f:
            records = json.load(f)
        views = []
        for rec in records:
            w, h = int(rec["width"]), int(rec["height"])
            pose = Pose6D(rec["x"], rec["y"], rec["z"],
                          rec["roll"], rec["pitch"], rec["yaw"])
            rgb_u8 = read_ppm(directory / f"rgb_{rec['id']}.ppm")
            if rgb_u8.shape[:2] != (h, w):
                raise ShapeError(
                    f"view {rec['id']}: rgb is {rgb_u8.shape[:2]}, poses.json says {h}x{w}"
                )
            raw = np.frombuffer(
                (directory / f"depth_{rec['id']}.bin").read_bytes(), dtype="<f4"
            )
            if raw.size != w * h:
                raise ShapeError(
                    f"view {rec['id']}: depth has {raw.size} floats, expected {w * h}"
                )
            depth = raw.reshape(h, w).astype(np.float32)
            mask = np.isfinite(depth) & (depth > 0)
            depth = np.where(mask, depth, 0.0).astype(np.float32)
            views.append(
                PanoramaView(
                    int(rec["id"]),
                    pose,
                    EquirectImage.rgb(u8_to_rgb(rgb_u8)),
                    EquirectImage.scalar(depth, mask, nonnegative=True),
                )
            )
        return cls(views)
