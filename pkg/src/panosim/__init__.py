"""panosim: sparse-panorama view synthesis and embodied navigation simulator."""

__version__ = "0.1.0"

from .geometry import (
    EquirectImage,
    PointCloud,
    Pose6D,
    RigidTransform,
    dir_from_pixel,
    panorama_to_pointcloud,
    pixel_from_dir,
    pose_to_transform,
)
from .mesh import TriangleMesh, load_obj, save_obj
from .bvh import BVH, build_bvh, raycast, raycast_batch, sphere_collision
from .render import render_equirect, perspective_crop
from .dataset import PanoramaDataset, PanoramaView
from .ibr import RenderConfig, render_view
from .scene_metrics import OccupancyGrid, navigation_complexity, occupancy_grid, ssa
from .synth import CorruptionSpec, SceneSpec, StairSpec, generate_scene
from .env import EmbodiedEnv, ObsConfig, TaskSpec

__all__ = [
    "BVH",
    "CorruptionSpec",
    "EmbodiedEnv",
    "EquirectImage",
    "ObsConfig",
    "OccupancyGrid",
    "PanoramaDataset",
    "PanoramaView",
    "PointCloud",
    "Pose6D",
    "RenderConfig",
    "RigidTransform",
    "SceneSpec",
    "StairSpec",
    "TaskSpec",
    "TriangleMesh",
    "build_bvh",
    "dir_from_pixel",
    "generate_scene",
    "load_obj",
    "navigation_complexity",
    "occupancy_grid",
    "panorama_to_pointcloud",
    "perspective_crop",
    "pixel_from_dir",
    "pose_to_transform",
    "raycast",
    "raycast_batch",
    "render_equirect",
    "render_view",
    "save_obj",
    "sphere_collision",
    "ssa",
]
