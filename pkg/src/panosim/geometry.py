"""Pose algebra and equirectangular projection.

Conventions, fixed package-wide:

* World and camera frames are right-handed: x forward, y left, z up.
* Euler angles are intrinsic Z-Y-X, i.e. ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``,
  stored in radians in ``(-pi, pi]``.
* A pixel ``(u, v)`` of a ``W x H`` equirectangular image is centered at
  longitude ``2*pi*(u+0.5)/W - pi`` and latitude ``pi/2 - pi*(v+0.5)/H``.
  Longitude wraps at the seam, latitude clamps at the poles.
* Depth images hold Euclidean distance along the viewing ray, in meters
  (not planar z; planar z is meaningless for a spherical image).
* Geometry runs in float64; image payloads are float32.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    InvalidDirectionError,
    InvalidPoseError,
    PixelBoundsError,
    ShapeError,
)

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


@dataclass(frozen=True)
class Pose6D:
    """Camera/agent pose: position in meters, orientation in radians."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.roll, self.pitch, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidPoseError(f"non-finite pose fields: {vals}")
        for name in ("roll", "pitch", "yaw"):
            object.__setattr__(self, name, wrap_angle(float(getattr(self, name))))
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]

    @classmethod
    def from_list(cls, vals) -> "Pose6D":
        x, y, z, roll, pitch, yaw = (float(v) for v in vals)
        return cls(x, y, z, roll, pitch, yaw)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation mapping local coordinates into the parent frame."""

    rotation: np.ndarray
    translation: np.ndarray
    _validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self._validate:
            if not (np.isfinite(R).all() and np.isfinite(t).all()):
                raise InvalidPoseError("non-finite transform")
            if np.abs(R.T @ R - np.eye(3)).max() > 1e-9:
                raise InvalidPoseError("rotation is not orthonormal within 1e-9")
            if abs(np.linalg.det(R) - 1.0) > 1e-9:
                raise InvalidPoseError("rotation determinant is not +1 within 1e-9")
        R = R.copy()
        t = t.copy()
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3), _validate=False)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self o other)(p) = self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
            _validate=False,
        )

    def invert(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation, _validate=False)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to a 3-vector or an (N, 3) array."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation


def rotation_zyx(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    Rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    Ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return Rz @ Ry @ Rx


def pose_to_transform(pose: Pose6D) -> RigidTransform:
    """Camera-to-world transform for a pose."""
    return RigidTransform(
        rotation_zyx(pose.roll, pose.pitch, pose.yaw),
        np.array([pose.x, pose.y, pose.z]),
        _validate=False,
    )


def dir_from_pixel(u: float, v: float, width: int, height: int) -> np.ndarray:
    """Unit viewing direction (camera frame) for pixel coordinates.

    Accepts continuous coordinates; integer values address pixel centers.
    """
    if not (0.0 <= u < width and 0.0 <= v < height):
        raise PixelBoundsError(f"pixel ({u}, {v}) outside {width}x{height}")
    lon = TWO_PI * (u + 0.5) / width - math.pi
    lat = math.pi / 2.0 - math.pi * (v + 0.5) / height
    cl = math.cos(lat)
    return np.array([cl * math.cos(lon), cl * math.sin(lon), math.sin(lat)])


def pixel_from_dir(d: np.ndarray, width: int, height: int) -> tuple[float, float]:
    """Continuous pixel coordinates for a unit direction (camera frame).

    u wraps into [0, W); v clamps into [0, H) at the poles.
    """
    d = np.asarray(d, dtype=np.float64).reshape(3)
    n = float(np.linalg.norm(d))
    if n < 1e-12:
        raise InvalidDirectionError("zero direction vector")
    if abs(n - 1.0) > 1e-6:
        raise InvalidDirectionError(f"direction norm {n} deviates from 1 by >1e-6")
    lon = math.atan2(d[1], d[0])
    lat = math.asin(min(1.0, max(-1.0, d[2] / n)))
    u = (lon + math.pi) / TWO_PI * width - 0.5
    v = (math.pi / 2.0 - lat) / math.pi * height - 0.5
    u = u % width
    v = min(max(v, 0.0), np.nextafter(float(height), 0.0))
    return u, v


def pixels_from_dirs(dirs: np.ndarray, width: int, height: int):
    """Vectorized pixel_from_dir for an (N, 3) array of unit directions."""
    dirs = np.asarray(dirs, dtype=np.float64)
    lon = np.arctan2(dirs[..., 1], dirs[..., 0])
    lat = np.arcsin(np.clip(dirs[..., 2], -1.0, 1.0))
    u = (lon + math.pi) / TWO_PI * width - 0.5
    v = (math.pi / 2.0 - lat) / math.pi * height - 0.5
    u = np.mod(u, width)
    v = np.clip(v, 0.0, np.nextafter(float(height), 0.0))
    return u, v


@lru_cache(maxsize=16)
def grid_directions(width: int, height: int) -> np.ndarray:
    """(H, W, 3) unit directions at every pixel center, cached per size."""
    u = np.arange(width, dtype=np.float64)
    v = np.arange(height, dtype=np.float64)
    lon = TWO_PI * (u + 0.5) / width - math.pi
    lat = math.pi / 2.0 - math.pi * (v + 0.5) / height
    cl = np.cos(lat)[:, None]
    out = np.empty((height, width, 3), dtype=np.float64)
    out[:, :, 0] = cl * np.cos(lon)[None, :]
    out[:, :, 1] = cl * np.sin(lon)[None, :]
    out[:, :, 2] = np.sin(lat)[:, None]
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class EquirectImage:
    """2:1 panorama raster with a per-pixel validity mask.

    data is float32, shape (H, W) for scalar modalities or (H, W, 3) for
    color-like ones. Where mask is False the data content is undefined
    (stored as zeros by convention).
    """

    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim == 2:
            h, w = data.shape
        elif data.ndim == 3 and data.shape[2] == 3:
            h, w = data.shape[:2]
        else:
            raise ShapeError(f"expected (H,W) or (H,W,3) data, got {data.shape}")
        if w != 2 * h:
            raise ShapeError(f"equirectangular image must be 2:1, got {w}x{h}")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != (h, w):
            raise ShapeError(f"mask shape {mask.shape} != image {h}x{w}")
        data = data.copy()
        mask = mask.copy()
        data[~mask] = 0.0
        data.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "mask", mask)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @classmethod
    def rgb(cls, data: np.ndarray, mask: np.ndarray | None = None) -> "EquirectImage":
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ShapeError(f"expected (H,W,3) rgb, got {data.shape}")
        if mask is None:
            mask = np.ones(data.shape[:2], dtype=bool)
        img = cls(data, mask)
        vals = img.data[img.mask]
        if vals.size and (vals.min() < -1e-5 or vals.max() > 1.0 + 1e-5):
            raise ShapeError("rgb values must lie in [0, 1]")
        return img

    @classmethod
    def scalar(cls, data: np.ndarray, mask: np.ndarray | None = None,
               nonnegative: bool = False) -> "EquirectImage":
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 2:
            raise ShapeError(f"expected (H,W) scalar image, got {data.shape}")
        if mask is None:
            mask = np.ones(data.shape, dtype=bool)
        img = cls(data, mask)
        if nonnegative and img.mask.any() and img.data[img.mask].min() < 0:
            raise ShapeError("depth values must be >= 0")
        return img


@dataclass(frozen=True)
class PointCloud:
    """World-space colored points tagged with the view they came from."""

    positions: np.ndarray  # (N, 3) float64, meters
    colors: np.ndarray  # (N, 3) float32 in [0, 1]
    view_ids: np.ndarray  # (N,) int32

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        col = np.asarray(self.colors, dtype=np.float32).reshape(-1, 3)
        ids = np.asarray(self.view_ids, dtype=np.int32).reshape(-1)
        if not (len(pos) == len(col) == len(ids)):
            raise ShapeError("positions/colors/view_ids lengths differ")
        if not np.isfinite(pos).all():
            raise ShapeError("non-finite point positions")
        for name, arr in (("positions", pos), ("colors", col), ("view_ids", ids)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.positions.shape[0]


def panorama_to_pointcloud(rgb: EquirectImage, depth: EquirectImage,
                           pose: Pose6D, view_id: int = 0) -> PointCloud:
    """Lift an RGB-D panorama into a world-space point cloud.

    One point per pixel valid in both images; depth is Euclidean ray length.
    """
    if rgb.data.shape[:2] != depth.data.shape[:2]:
        raise ShapeError(
            f"rgb {rgb.data.shape[:2]} and depth {depth.data.shape[:2]} dimensions differ"
        )
    if depth.channels != 1:
        raise ShapeError("depth image must be single-channel")
    valid = rgb.mask & depth.mask & (depth.data > 0)
    dirs = grid_directions(rgb.width, rgb.height)
    local = dirs[valid] * depth.data[valid].astype(np.float64)[:, None]
    world = pose_to_transform(pose).apply(local)
    colors = rgb.data[valid]
    ids = np.full(len(world), view_id, dtype=np.int32)
    return PointCloud(world, colors, ids)
