"""Embodied step/reset environment over the renderer and mesh collision.

The agent is a sphere at camera height driven by an ideal positional
controller: forward/backward translate 0.1 m along the heading, left/right
rotate 15 degrees. Moves that would collide are rejected (the pose never
enters a colliding state) and counted. Reward is the decrease in distance
to target, minus a collision penalty, plus an optional forward-clearance
term c * L_nearest.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bvh import BVH, closest_distance, raycast
from .dataset import PanoramaDataset
from .errors import EpisodeStateError, TrajectoryFormatError, UnreachableError
from .geometry import EquirectImage, Pose6D, wrap_angle
from .ibr import RenderConfig, render_view
from .render import render_equirect
from .scene_metrics import OccupancyGrid, occupancy_grid
from .synth import AGENT_RADIUS, CAMERA_HEIGHT

ACTIONS = ("forward", "backward", "left", "right")
STEP_SIZE = 0.1  # meters
TURN_ANGLE = math.radians(15.0)
DONE_RADIUS = 0.3  # meters
VISUAL_MODALITIES = ("rgb_pre", "rgb_post", "depth", "normal", "semantic")

TASK_LOCAL = "local_planning"
TASK_DISTANT = "distant_navigation"


@dataclass(frozen=True)
class TaskSpec:
    kind: str = TASK_LOCAL
    max_steps: int = 100
    collision_penalty: float = 0.1
    beam_c: float = 0.0  # weight of the forward free-distance term
    seed: int = 0  # fixes the distant-navigation target
    near_range: tuple[float, float] = (1.0, 3.0)  # local-planning target band

    def __post_init__(self):
        if self.kind not in (TASK_LOCAL, TASK_DISTANT):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "max_steps": self.max_steps,
            "collision_penalty": self.collision_penalty,
            "beam_c": self.beam_c,
            "seed": self.seed,
            "near_range": list(self.near_range),
        }

    @classmethod
    def from_json(cls, d: dict) -> "TaskSpec":
        d = dict(d)
        d["near_range"] = tuple(d.get("near_range", (1.0, 3.0)))
        return cls(**d)


@dataclass
class AgentState:
    pose: Pose6D
    velocity: np.ndarray  # (3,) m per step, kinematic bookkeeping
    collisions: int = 0
    step_index: int = 0


@dataclass
class Observation:
    images: dict[str, EquirectImage]
    sensors: np.ndarray  # position(3), rpy(3), velocity(3), dist, angle


@dataclass
class StepResult:
    observation: Observation | None
    reward: float
    done: bool
    info: dict


@dataclass
class ObsConfig:
    height: int = 64
    modalities: tuple[str, ...] = ("depth",)
    render: RenderConfig | None = None
    filler: object | None = None  # FillerNet for rgb_post

    def __post_init__(self):
        self.modalities = tuple(self.modalities)
        for m in self.modalities:
            if m not in VISUAL_MODALITIES:
                raise ValueError(f"unknown modality {m!r}")
        needs_rgb = any(m.startswith("rgb") for m in self.modalities)
        if self.render is None and needs_rgb:
            self.render = RenderConfig(width=2 * self.height, height=self.height)


class EmbodiedEnv:
    """Single-agent, serialized-step environment instance."""

    def __init__(self, bvh: BVH, task: TaskSpec, obs: ObsConfig | None = None,
                 dataset: PanoramaDataset | None = None,
                 grid: OccupancyGrid | None = None,
                 agent_radius: float = AGENT_RADIUS,
                 camera_height: float = CAMERA_HEIGHT):
        self.bvh = bvh
        self.task = task
        self.obs_cfg = obs or ObsConfig()
        self.dataset = dataset
        if any(m.startswith("rgb") for m in self.obs_cfg.modalities) and dataset is None:
            raise ValueError("rgb modalities need a panorama dataset")
        self.grid = grid if grid is not None else occupancy_grid(
            bvh, cell=0.1, agent_radius=agent_radius, probe_height=camera_height
        )
        self.agent_radius = agent_radius
        self.camera_height = camera_height
        cells = self.grid.traversable_cells()
        if len(cells) == 0:
            raise UnreachableError("scene has no traversable floor")
        self._cells = cells
        self._fixed_target = self._pick_distant_target() \
            if task.kind == TASK_DISTANT else None
        self.state: AgentState | None = None
        self.target: np.ndarray | None = None
        self.done = True
        self._episode: dict | None = None

    def _pick_distant_target(self) -> np.ndarray:
        rng = np.random.default_rng(self.task.seed)
        centers = (self.grid.origin + (self._cells + 0.5) * self.grid.cell)
        centroid = centers.mean(axis=0)
        d = np.linalg.norm(centers - centroid, axis=1)
        far = np.argsort(d)[-max(1, len(d) // 10):]
        pick = centers[far[rng.integers(0, len(far))]]
        return pick.astype(np.float64)

    # -- episode control ---------------------------------------------------

    def reset(self, seed: int = 0) -> Observation:
        rng = np.random.default_rng(seed)
        idx = int(rng.integers(0, len(self._cells)))
        i, j = self._cells[idx]
        center = self.grid.cell_center(int(i), int(j))
        z = float(self.grid.floor_z[int(i), int(j)]) + self.camera_height
        yaw = float(rng.uniform(-math.pi, math.pi))
        pose = Pose6D(float(center[0]), float(center[1]), z, 0.0, 0.0, yaw)
        if self.task.kind == TASK_DISTANT:
            self.target = self._fixed_target.copy()
        else:
            self.target = self._sample_near_target(center, rng)
        self.state = AgentState(pose, np.zeros(3))
        self.done = False
        self._episode = {"seed": seed, "actions": [], "rewards": []}
        return self.observe()

    def _sample_near_target(self, start: np.ndarray, rng) -> np.ndarray:
        centers = self.grid.origin + (self._cells + 0.5) * self.grid.cell
        d = np.linalg.norm(centers - start, axis=1)
        lo, hi = self.task.near_range
        band = np.nonzero((d >= lo) & (d <= hi))[0]
        if len(band) == 0:
            band = np.nonzero(d >= lo)[0]
        if len(band) == 0:
            band = np.argsort(d)[-max(1, len(d) // 4):]
        return centers[band[int(rng.integers(0, len(band)))]].astype(np.float64)

    def _distance_to_target(self, pose: Pose6D) -> float:
        return math.hypot(pose.x - self.target[0], pose.y - self.target[1])

    def _forward_clearance(self, pose: Pose6D) -> float:
        hit = raycast(self.bvh, pose.position,
                      (math.cos(pose.yaw), math.sin(pose.yaw), 0.0))
        return hit.t if hit is not None else 100.0

    def step(self, action: str) -> StepResult:
        if self.state is None or self.done:
            raise EpisodeStateError("step after done (or before reset)")
        if action not in ACTIONS:
            raise ValueError(f"unknown action {action!r}; expected one of {ACTIONS}")
        pose = self.state.pose
        prev_dist = self._distance_to_target(pose)
        collided = False

        if action in ("forward", "backward"):
            sign = 1.0 if action == "forward" else -1.0
            nx = pose.x + sign * STEP_SIZE * math.cos(pose.yaw)
            ny = pose.y + sign * STEP_SIZE * math.sin(pose.yaw)
            candidate = Pose6D(nx, ny, pose.z, 0.0, 0.0, pose.yaw)
            d, _ = closest_distance(
                self.bvh, np.array([[nx, ny, pose.z]], dtype=np.float64)
            )
            if d[0] < self.agent_radius:
                collided = True
            else:
                new_v = candidate.position - pose.position
                pose = candidate
                self.state.velocity = new_v
            if collided:
                self.state.velocity = np.zeros(3)
                self.state.collisions += 1
        else:
            yaw = wrap_angle(pose.yaw + (TURN_ANGLE if action == "left" else -TURN_ANGLE))
            pose = Pose6D(pose.x, pose.y, pose.z, 0.0, 0.0, yaw)
            self.state.velocity = np.zeros(3)

        self.state.pose = pose
        self.state.step_index += 1
        new_dist = self._distance_to_target(pose)
        reward = prev_dist - new_dist
        if collided:
            reward -= self.task.collision_penalty
        if self.task.beam_c > 0:
            reward += self.task.beam_c * self._forward_clearance(pose)

        self.done = new_dist < DONE_RADIUS or self.state.step_index >= self.task.max_steps
        info = {
            "collisions": self.state.collisions,
            "step": self.state.step_index,
            "collided": collided,
            "distance": new_dist,
        }
        self._episode["actions"].append(action)
        self._episode["rewards"].append(reward)
        return StepResult(self.observe(), reward, self.done, info)

    # -- observation -------------------------------------------------------

    def sensor_vector(self) -> np.ndarray:
        pose = self.state.pose
        dist = self._distance_to_target(pose)
        bearing = math.atan2(self.target[1] - pose.y, self.target[0] - pose.x)
        angle = wrap_angle(bearing - pose.yaw)
        return np.array(
            [pose.x, pose.y, pose.z, pose.roll, pose.pitch, pose.yaw,
             self.state.velocity[0], self.state.velocity[1], self.state.velocity[2],
             dist, angle],
            dtype=np.float64,
        )

    def observe(self, modalities: tuple[str, ...] | None = None) -> Observation:
        if self.state is None:
            raise EpisodeStateError("observe before reset")
        modalities = modalities if modalities is not None else self.obs_cfg.modalities
        images: dict[str, EquirectImage] = {}
        h = self.obs_cfg.height
        w = 2 * h
        pose = self.state.pose
        pre = None
        for m in modalities:
            if m in ("depth", "normal", "semantic"):
                images[m] = render_equirect(self.bvh, pose, w, h, m)
            elif m == "rgb_pre":
                pre = render_view(self.dataset, self.bvh, pose, self.obs_cfg.render)
                images[m] = pre.rgb
            elif m == "rgb_post":
                if pre is None and "rgb_pre" not in images:
                    pre = render_view(self.dataset, self.bvh, pose, self.obs_cfg.render)
                base = pre.rgb if pre is not None else images["rgb_pre"]
                filled = self._apply_filler(base)
                images[m] = filled
        return Observation(images, self.sensor_vector())

    def _apply_filler(self, rgb: EquirectImage) -> EquirectImage:
        if self.obs_cfg.filler is None:
            return EquirectImage.rgb(rgb.data, np.ones_like(rgb.mask))
        from .filler.train import images_to_nchw, nchw_to_images

        x = images_to_nchw(rgb.data[None])
        y = self.obs_cfg.filler.forward(x, training=False)
        out = np.clip(nchw_to_images(y)[0], 0.0, 1.0)
        return EquirectImage.rgb(out)

    # -- trajectory record / replay ----------------------------------------

    TRAJECTORY_VERSION = 1

    def save_trajectory(self, path) -> None:
        if self._episode is None:
            raise EpisodeStateError("no episode to record")
        doc = {
            "version": self.TRAJECTORY_VERSION,
            "task": self.task.to_json(),
            "reset_seed": self._episode["seed"],
            "actions": list(self._episode["actions"]),
            "rewards": [float(r).hex() for r in self._episode["rewards"]],
        }
        Path(path).write_text(json.dumps(doc, indent=1))

    @staticmethod
    def load_trajectory(path) -> dict:
        try:
            doc = json.loads(Path(path).read_text())
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise TrajectoryFormatError(f"unreadable trajectory file: {e}") from e
        if not isinstance(doc, dict) or doc.get("version") != EmbodiedEnv.TRAJECTORY_VERSION:
            raise TrajectoryFormatError(
                f"unsupported trajectory version {doc.get('version')!r}"
            )
        for key in ("task", "reset_seed", "actions", "rewards"):
            if key not in doc:
                raise TrajectoryFormatError(f"trajectory missing field {key!r}")
        if len(doc["actions"]) != len(doc["rewards"]):
            raise TrajectoryFormatError("actions/rewards length mismatch")
        doc["rewards"] = [float.fromhex(r) for r in doc["rewards"]]
        return doc

    def replay(self, path) -> list[StepResult]:
        """Re-run a recorded episode; deterministic rendering makes results
        bit-identical to the original run."""
        doc = self.load_trajectory(path)
        if doc["task"] != self.task.to_json():
            raise TrajectoryFormatError("trajectory was recorded for a different task")
        self.reset(doc["reset_seed"])
        results = []
        for action in doc["actions"]:
            results.append(self.step(action))
        return results
