"""Procedural indoor scenes and synthetic capture.

Generates textured, labeled room meshes (rows of rooms joined by door
tunnels, optional stairway, tall clutter boxes), samples sparse panorama
poses on the traversable floor, renders ground-truth RGB-D panoramas, and
produces a corrupted "camera" domain for adaptation experiments.

Everything is deterministic given the spec seeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .bvh import BVH, build_bvh, sphere_collision
from .dataset import PanoramaDataset, PanoramaView
from .errors import GenerationError, UnreachableError
from .geometry import EquirectImage, Pose6D
from .mesh import (
    SEM_CEILING,
    SEM_CLUTTER,
    SEM_DOOR,
    SEM_FLOOR,
    SEM_STAIRS,
    SEM_WALL,
    TriangleMesh,
)
from .render import render_equirect
from .scene_metrics import OccupancyGrid, occupancy_grid


@dataclass(frozen=True)
class StairSpec:
    steps: int = 8
    rise: float = 0.17
    run: float = 0.28
    width: float = 1.2


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    room_count: tuple[int, int] = (2, 3)
    room_width: tuple[float, float] = (3.0, 5.0)
    room_depth: tuple[float, float] = (3.0, 5.0)
    wall_height: float = 2.8
    wall_thickness: float = 0.1
    door_width: float = 0.8
    door_height: float = 2.0
    furniture_per_room: tuple[int, int] = (0, 2)
    furniture_footprint: tuple[float, float] = (0.4, 0.9)
    furniture_height: tuple[float, float] = (1.5, 2.2)
    checker_scale: tuple[float, float] = (0.8, 1.6)
    stairway: StairSpec | None = None

    def __post_init__(self):
        if self.room_count[0] < 1 or self.room_width[0] <= 0 or self.room_depth[0] <= 0:
            raise ValueError("room dimensions must be positive")
        if self.door_height >= self.wall_height:
            raise ValueError("door must be lower than the walls")
        if self.stairway is not None:
            top = self.stairway.steps * self.stairway.rise
            if top >= self.wall_height - 0.5:
                raise ValueError("stairway reaches the ceiling")

    def to_json(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        if d.get("stairway") is not None:
            d["stairway"] = StairSpec(**d["stairway"])
        for key in ("room_count", "room_width", "room_depth", "furniture_per_room",
                    "furniture_footprint", "furniture_height", "checker_scale"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        return cls(**d)


class _MeshBuilder:
    def __init__(self):
        self.verts: list[np.ndarray] = []
        self.faces: list[tuple[int, int, int]] = []
        self.albedo: list[tuple] = []
        self.semantic: list[int] = []
        self.scale: list[float] = []
        self.color2: list[tuple] = []

    def rect(self, origin, eu, ev, albedo, semantic, checker=0.0, color2=None):
        """Quad origin, origin+eu, origin+eu+ev, origin+ev; normal = eu x ev."""
        o = np.asarray(origin, dtype=np.float64)
        eu = np.asarray(eu, dtype=np.float64)
        ev = np.asarray(ev, dtype=np.float64)
        if np.linalg.norm(eu) < 1e-9 or np.linalg.norm(ev) < 1e-9:
            return
        base = len(self.verts)
        self.verts += [o, o + eu, o + eu + ev, o + ev]
        for tri in ((base, base + 1, base + 2), (base, base + 2, base + 3)):
            self.faces.append(tri)
            self.albedo.append(tuple(albedo))
            self.semantic.append(semantic)
            self.scale.append(checker)
            self.color2.append(tuple(color2 if color2 is not None else albedo))

    def build(self) -> TriangleMesh:
        return TriangleMesh(
            np.array(self.verts, dtype=np.float64),
            np.array(self.faces, dtype=np.int64),
            np.array(self.albedo, dtype=np.float32),
            np.array(self.semantic, dtype=np.int32),
            np.array(self.scale, dtype=np.float32),
            np.array(self.color2, dtype=np.float32),
        )


def _wall_with_hole(b: _MeshBuilder, origin, along, up, length, height,
                    hole, albedo, checker, color2):
    """Wall rectangle in the (along, up) plane, minus a door hole.

    hole is (s0, s1, h) in along/height coordinates, or None.
    """
    o = np.asarray(origin, dtype=np.float64)
    a = np.asarray(along, dtype=np.float64)
    u = np.asarray(up, dtype=np.float64)
    if hole is None:
        b.rect(o, a * length, u * height, albedo, SEM_WALL, checker, color2)
        return
    s0, s1, hh = hole
    b.rect(o, a * s0, u * height, albedo, SEM_WALL, checker, color2)
    b.rect(o + a * s1, a * (length - s1), u * height, albedo, SEM_WALL, checker, color2)
    b.rect(o + a * s0 + u * hh, a * (s1 - s0), u * (height - hh),
           albedo, SEM_WALL, checker, color2)


_WALL_PALETTE = [
    (0.85, 0.80, 0.70), (0.70, 0.78, 0.86), (0.80, 0.86, 0.72),
    (0.88, 0.74, 0.72), (0.76, 0.72, 0.86),
]
_FLOOR_COLOR = (0.55, 0.42, 0.30)
_CEIL_COLOR = (0.92, 0.92, 0.90)
_DOOR_COLOR = (0.45, 0.30, 0.18)
_STAIR_COLOR = (0.60, 0.58, 0.55)
_CLUTTER_PALETTE = [
    (0.30, 0.45, 0.60), (0.60, 0.35, 0.30), (0.35, 0.55, 0.35), (0.55, 0.50, 0.25),
]


def generate_scene(spec: SceneSpec) -> TriangleMesh:
    """Build the scene mesh for a spec; same seed gives identical output."""
    rng = np.random.default_rng(spec.seed)
    b = _MeshBuilder()
    h = spec.wall_height
    t = spec.wall_thickness

    n_rooms = int(rng.integers(spec.room_count[0], spec.room_count[1] + 1))
    widths = rng.uniform(*spec.room_width, size=n_rooms)
    depths = rng.uniform(*spec.room_depth, size=n_rooms)
    if spec.stairway is not None:
        need = spec.stairway.steps * spec.stairway.run + 1.0
        widths[-1] = max(widths[-1], need)
        depths[-1] = max(depths[-1], spec.stairway.width + 1.0)

    x0 = 0.0
    rooms = []  # (x0, x1, y0, y1)
    for i in range(n_rooms):
        rooms.append((x0, x0 + widths[i], -depths[i] / 2.0, depths[i] / 2.0))
        x0 += widths[i] + t

    doors = []  # (x_start, y0, y1) tunnels between room i and i+1
    for i in range(n_rooms - 1):
        overlap_lo = max(rooms[i][2], rooms[i + 1][2]) + 0.3
        overlap_hi = min(rooms[i][3], rooms[i + 1][3]) - 0.3
        if overlap_hi - overlap_lo < spec.door_width:
            raise GenerationError(f"rooms {i},{i + 1} cannot share a door")
        c = rng.uniform(overlap_lo + spec.door_width / 2, overlap_hi - spec.door_width / 2)
        doors.append((rooms[i][1], c - spec.door_width / 2, c + spec.door_width / 2))

    def room_checker():
        return float(rng.uniform(*spec.checker_scale))

    for i, (rx0, rx1, ry0, ry1) in enumerate(rooms):
        wall = _WALL_PALETTE[i % len(_WALL_PALETTE)]
        wall2 = tuple(c * 0.55 for c in wall)
        cs = room_checker()
        dx, dy = rx1 - rx0, ry1 - ry0
        b.rect((rx0, ry0, 0), (dx, 0, 0), (0, dy, 0),
               _FLOOR_COLOR, SEM_FLOOR, cs, tuple(c * 0.6 for c in _FLOOR_COLOR))
        b.rect((rx0, ry0, h), (0, dy, 0), (dx, 0, 0), _CEIL_COLOR, SEM_CEILING)
        # south (+y normal) and north (-y normal) walls
        b.rect((rx0, ry0, 0), (0, 0, h), (dx, 0, 0), wall, SEM_WALL, cs, wall2)
        b.rect((rx0, ry1, 0), (dx, 0, 0), (0, 0, h), wall, SEM_WALL, cs, wall2)
        # west wall (+x normal), with a hole if a door leads back
        hole_w = None
        if i > 0:
            _, d0, d1 = doors[i - 1]
            hole_w = (d0 - ry0, d1 - ry0, spec.door_height)
        _wall_with_hole(b, (rx0, ry0, 0), (0, 1, 0), (0, 0, 1), dy, h,
                        hole_w, wall, cs, wall2)
        # east wall (-x normal)
        hole_e = None
        if i < n_rooms - 1:
            _, d0, d1 = doors[i]
            hole_e = (d0 - ry0, d1 - ry0, spec.door_height)
        if hole_e is None:
            b.rect((rx1, ry0, 0), (0, 0, h), (0, dy, 0), wall, SEM_WALL, cs, wall2)
        else:
            s0, s1, hh = hole_e
            b.rect((rx1, ry0, 0), (0, 0, h), (0, s0, 0), wall, SEM_WALL, cs, wall2)
            b.rect((rx1, ry0 + s1, 0), (0, 0, h), (0, dy - s1, 0), wall, SEM_WALL, cs, wall2)
            b.rect((rx1, ry0 + s0, hh), (0, 0, h - hh), (0, s1 - s0, 0),
                   wall, SEM_WALL, cs, wall2)

    for x_start, d0, d1 in doors:
        dw = d1 - d0
        dh = spec.door_height
        b.rect((x_start, d0, 0), (t, 0, 0), (0, dw, 0), _DOOR_COLOR, SEM_DOOR)
        b.rect((x_start, d0, dh), (0, dw, 0), (t, 0, 0), _DOOR_COLOR, SEM_DOOR)
        b.rect((x_start, d0, 0), (0, 0, dh), (t, 0, 0), _DOOR_COLOR, SEM_DOOR)
        b.rect((x_start, d1, 0), (t, 0, 0), (0, 0, dh), _DOOR_COLOR, SEM_DOOR)

    occupied: list[tuple[float, float, float, float]] = []

    def clear_of(rect, others, margin=0.1):
        ax0, ax1, ay0, ay1 = rect
        for bx0, bx1, by0, by1 in others:
            if ax0 < bx1 + margin and ax1 > bx0 - margin \
                    and ay0 < by1 + margin and ay1 > by0 - margin:
                return False
        return True

    if spec.stairway is not None:
        st = spec.stairway
        rx0, rx1, ry0, ry1 = rooms[-1]
        total_run = st.steps * st.run
        sx0 = rx1 - total_run
        sy0 = -st.width / 2.0
        sy1 = st.width / 2.0
        for k in range(st.steps):
            xk = sx0 + k * st.run
            zk = (k + 1) * st.rise
            b.rect((xk, sy0, k * st.rise), (0, 0, st.rise), (0, st.width, 0),
                   _STAIR_COLOR, SEM_STAIRS)
            b.rect((xk, sy0, zk), (st.run, 0, 0), (0, st.width, 0),
                   _STAIR_COLOR, SEM_STAIRS)
            b.rect((xk, sy0, 0), (st.run, 0, 0), (0, 0, zk), _STAIR_COLOR, SEM_STAIRS)
            b.rect((xk, sy1, 0), (0, 0, zk), (st.run, 0, 0), _STAIR_COLOR, SEM_STAIRS)
        b.rect((rx1, sy0, 0), (0, st.width, 0), (0, 0, st.steps * st.rise),
               _STAIR_COLOR, SEM_STAIRS)
        occupied.append((sx0, rx1, sy0, sy1))

    for i, (rx0, rx1, ry0, ry1) in enumerate(rooms):
        n_boxes = int(rng.integers(spec.furniture_per_room[0],
                                   spec.furniture_per_room[1] + 1))
        for _ in range(n_boxes):
            placed = False
            for _attempt in range(100):
                fw = rng.uniform(*spec.furniture_footprint)
                fd = rng.uniform(*spec.furniture_footprint)
                fh = rng.uniform(*spec.furniture_height)
                # keep door approaches (room ends) and wall margins clear
                bx0 = rng.uniform(rx0 + 1.0, rx1 - 1.0 - fw)
                by0 = rng.uniform(ry0 + 0.4, ry1 - 0.4 - fd)
                rect = (bx0, bx0 + fw, by0, by0 + fd)
                if clear_of(rect, occupied, margin=0.5):
                    occupied.append(rect)
                    color = _CLUTTER_PALETTE[int(rng.integers(len(_CLUTTER_PALETTE)))]
                    _add_box(b, bx0, bx0 + fw, by0, by0 + fd, fh, color)
                    placed = True
                    break
            if not placed:
                raise GenerationError(
                    f"could not place furniture in room {i} after 100 attempts"
                )
    return b.build()


def _add_box(b: _MeshBuilder, x0, x1, y0, y1, height, color):
    dx, dy = x1 - x0, y1 - y0
    b.rect((x0, y0, height), (dx, 0, 0), (0, dy, 0), color, SEM_CLUTTER)
    b.rect((x0, y0, 0), (0, 0, height), (0, dy, 0), color, SEM_CLUTTER)  # -x side
    b.rect((x1, y0, 0), (0, dy, 0), (0, 0, height), color, SEM_CLUTTER)  # +x side
    b.rect((x0, y0, 0), (dx, 0, 0), (0, 0, height), color, SEM_CLUTTER)  # -y side
    b.rect((x0, y1, 0), (0, 0, height), (dx, 0, 0), color, SEM_CLUTTER)  # +y side


CAMERA_HEIGHT = 1.6
AGENT_RADIUS = 0.2


def sample_panorama_poses(bvh: BVH, density: float = 0.2, seed: int = 0,
                          camera_height: float = CAMERA_HEIGHT,
                          agent_radius: float = AGENT_RADIUS,
                          grid: OccupancyGrid | None = None) -> list[Pose6D]:
    """Poisson-disk-style capture poses on the traversable floor.

    density is panoramas per square meter; spacing ~ sqrt(1/density).
    All returned poses are collision-free at the agent radius.
    """
    if density <= 0:
        raise ValueError("density must be > 0")
    if grid is None:
        grid = occupancy_grid(bvh, cell=0.25, agent_radius=agent_radius,
                              probe_height=camera_height)
    cells = grid.traversable_cells()
    if len(cells) == 0:
        raise UnreachableError("no traversable floor for panorama capture")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(cells))
    spacing = math.sqrt(1.0 / density)
    target = max(1, round(grid.free_area * density))
    chosen: list[np.ndarray] = []
    poses: list[Pose6D] = []
    for idx in order:
        i, j = cells[idx]
        center = grid.cell_center(int(i), int(j))
        if any(np.hypot(*(center - c)) < spacing for c in chosen):
            continue
        z = float(grid.floor_z[int(i), int(j)]) + camera_height
        if sphere_collision(bvh, (center[0], center[1], z), agent_radius).colliding:
            continue
        chosen.append(center)
        yaw = float(rng.uniform(-math.pi, math.pi))
        poses.append(Pose6D(float(center[0]), float(center[1]), z, 0.0, 0.0, yaw))
        if len(poses) >= target:
            break
    return poses


def render_oracle_panorama(bvh: BVH, pose: Pose6D, width: int, height: int):
    """Ground-truth (RGB, depth) pair straight off the mesh."""
    rgb = render_equirect(bvh, pose, width, height, "albedo")
    depth = render_equirect(bvh, pose, width, height, "depth")
    return rgb, depth


def build_dataset(bvh: BVH, poses: list[Pose6D], width: int, height: int) -> PanoramaDataset:
    views = []
    for i, pose in enumerate(poses):
        rgb, depth = render_oracle_panorama(bvh, pose, width, height)
        views.append(PanoramaView(i, pose, rgb, depth))
    return PanoramaDataset(views)


@dataclass(frozen=True)
class CorruptionSpec:
    """Synthetic camera-domain corruption: affine color, vignette, noise."""

    gain: tuple[float, float, float] = (1.0, 1.0, 1.0)
    offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    noise_sigma: float = 0.0
    vignette: float = 0.0
    seed: int = 0

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "CorruptionSpec":
        d = dict(d)
        for key in ("gain", "offset"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def make_domain_pair(image: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Apply affine color, then vignette, then Gaussian noise; clamp to [0,1]."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H,W,3) image, got {img.shape}")
    out = img * np.asarray(spec.gain, dtype=np.float32) \
        + np.asarray(spec.offset, dtype=np.float32)
    if spec.vignette != 0.0:
        h, w = img.shape[:2]
        yy = (np.arange(h, dtype=np.float32) - (h - 1) / 2.0) / (h / 2.0)
        xx = (np.arange(w, dtype=np.float32) - (w - 1) / 2.0) / (w / 2.0)
        r2 = (yy[:, None] ** 2 + xx[None, :] ** 2) / 2.0
        out *= (1.0 - spec.vignette * r2)[:, :, None]
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        out += rng.normal(0.0, spec.noise_sigma, size=out.shape).astype(np.float32)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def corrupt_dataset(src_dir, spec: CorruptionSpec, dst_dir) -> None:
    """Write a corrupted-RGB copy of a panorama dataset (poses/depth kept)."""
    ds = PanoramaDataset.load(src_dir)
    views = []
    for v in ds:
        per_view = CorruptionSpec(**{**spec.to_json(), "seed": spec.seed + v.view_id})
        rgb = make_domain_pair(v.rgb.data, per_view)
        views.append(PanoramaView(v.view_id, v.pose,
                                  EquirectImage.rgb(rgb, v.rgb.mask), v.depth))
    PanoramaDataset(views).save(dst_dir)


@dataclass
class DomainPairs:
    """Aligned crops: geometric renders vs the synthetic camera domain."""

    source: np.ndarray  # (N, h, w, 3) pre-filler renders, holes black
    target: np.ndarray  # (N, h, w, 3) corrupted ground truth
    clean: np.ndarray  # (N, h, w, 3) uncorrupted ground truth


def make_goggles_pairs(bvh: BVH, dataset: PanoramaDataset, render_cfg,
                       corruption: CorruptionSpec, n_pairs: int, crop: int,
                       seed: int, poses: list[Pose6D] | None = None) -> DomainPairs:
    """Render novel views and crop aligned (render, corrupted-photo) pairs."""
    from .ibr import render_view  # local import; ibr depends on this module's callers

    rng = np.random.default_rng(seed)
    if poses is None:
        poses = _jittered_poses(bvh, dataset, max(4, n_pairs // 16), rng)
    src, tgt, clean = [], [], []
    per_pose = int(math.ceil(n_pairs / len(poses)))
    for p_idx, pose in enumerate(poses):
        result = render_view(dataset, bvh, pose, render_cfg)
        pre = result.rgb.data.copy()
        pre[~result.rgb.mask] = 0.0
        truth, _ = render_oracle_panorama(bvh, pose, render_cfg.width, render_cfg.height)
        spec = CorruptionSpec(**{**corruption.to_json(),
                                 "seed": corruption.seed + p_idx})
        corrupted = make_domain_pair(truth.data, spec)
        h, w = pre.shape[:2]
        for _ in range(per_pose):
            if len(src) >= n_pairs:
                break
            i = int(rng.integers(0, h - crop + 1))
            j = int(rng.integers(0, w - crop + 1))
            src.append(pre[i : i + crop, j : j + crop])
            tgt.append(corrupted[i : i + crop, j : j + crop])
            clean.append(truth.data[i : i + crop, j : j + crop])
    return DomainPairs(
        np.stack(src).astype(np.float32),
        np.stack(tgt).astype(np.float32),
        np.stack(clean).astype(np.float32),
    )


def save_pairs(pairs: DomainPairs, directory) -> None:
    """Write a training-pair directory: pairs.json plus PPM triplets."""
    from .dataset import rgb_to_u8, write_ppm

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    items = []
    for i in range(len(pairs.source)):
        names = {}
        for role, stack in (("source", pairs.source), ("target", pairs.target),
                            ("clean", pairs.clean)):
            name = f"{role}_{i:04d}.ppm"
            write_ppm(directory / name, rgb_to_u8(stack[i]))
            names[role] = name
        items.append({"id": i, **names})
    with open(directory / "pairs.json", "w") as f:
        json.dump({"version": 1, "items": items}, f, indent=1)


def load_pairs(directory) -> DomainPairs:
    from .dataset import read_ppm, u8_to_rgb

    directory = Path(directory)
    with open(directory / "pairs.json") as f:
        doc = json.load(f)
    if doc.get("version") != 1:
        raise ValueError(f"unsupported pairs version {doc.get('version')!r}")
    stacks = {"source": [], "target": [], "clean": []}
    for item in doc["items"]:
        for role in stacks:
            stacks[role].append(u8_to_rgb(read_ppm(directory / item[role])))
    return DomainPairs(*(np.stack(stacks[r]) for r in ("source", "target", "clean")))


def _jittered_poses(bvh: BVH, dataset: PanoramaDataset, n: int, rng) -> list[Pose6D]:
    poses = []
    views = dataset.views
    attempts = 0
    while len(poses) < n and attempts < n * 50:
        attempts += 1
        a, b_idx = rng.integers(0, len(views), size=2)
        w = rng.uniform(0.2, 0.8)
        pos = w * views[a].pose.position + (1 - w) * views[b_idx].pose.position
        pos[:2] += rng.uniform(-0.2, 0.2, size=2)
        if sphere_collision(bvh, pos, AGENT_RADIUS).colliding:
            continue
        poses.append(Pose6D(pos[0], pos[1], pos[2], 0.0, 0.0,
                            float(rng.uniform(-math.pi, math.pi))))
    if not poses:
        raise GenerationError("could not sample any collision-free novel pose")
    return poses
