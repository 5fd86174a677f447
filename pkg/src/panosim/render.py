"""Mesh-based equirectangular rendering of depth, normals, semantics, albedo."""

from __future__ import annotations

import numpy as np

from .bvh import BVH, raycast_batch
from .geometry import EquirectImage, Pose6D, grid_directions, pose_to_transform

MODALITIES = ("depth", "normal", "semantic", "albedo")


def render_equirect(bvh: BVH, pose: Pose6D, width: int, height: int,
                    modality: str = "depth") -> EquirectImage:
    """Render one modality from the mesh as seen from `pose`.

    depth: Euclidean ray distance (m). normal: unit shading normal oriented
    toward the viewer, encoded (n+1)/2 as RGB. semantic: per-face label id.
    albedo: per-face albedo modulated by the procedural checker.
    Pixels whose rays miss the mesh are masked invalid.
    """
    if modality not in MODALITIES:
        raise ValueError(f"unknown modality {modality!r}, expected one of {MODALITIES}")
    mesh = bvh.mesh
    T = pose_to_transform(pose)
    dirs_cam = grid_directions(width, height).reshape(-1, 3)
    dirs_world = dirs_cam @ T.rotation.T
    t, face, _, _ = raycast_batch(bvh, T.translation, dirs_world)
    hit = face >= 0
    mask = hit.reshape(height, width)

    if modality == "depth":
        data = np.where(hit, t, 0.0).astype(np.float32).reshape(height, width)
        return EquirectImage.scalar(data, mask, nonnegative=True)

    if modality == "semantic":
        ids = np.zeros(len(face), dtype=np.float32)
        ids[hit] = mesh.semantic[face[hit]].astype(np.float32)
        return EquirectImage.scalar(ids.reshape(height, width), mask)

    rgb = np.zeros((len(face), 3), dtype=np.float32)
    if modality == "normal":
        n = mesh.face_normals[face[hit]]
        # orient toward the viewer: flip normals facing away from the ray
        facing = np.einsum("ij,ij->i", n, dirs_world[hit]) > 0
        n = np.where(facing[:, None], -n, n)
        rgb[hit] = ((n + 1.0) * 0.5).astype(np.float32)
        return EquirectImage.rgb(rgb.reshape(height, width, 3), mask)

    # albedo with checker texture, evaluated at the hit points
    points = T.translation + dirs_world[hit] * t[hit][:, None]
    rgb[hit] = mesh.shade(face[hit], points)
    return EquirectImage.rgb(rgb.reshape(height, width, 3), mask)


def perspective_crop(img: EquirectImage, yaw: float = 0.0, pitch: float = 0.0,
                     fov_deg: float = 90.0, size: int = 128) -> np.ndarray:
    """Extract a square pinhole view from an equirect image (bilinear).

    Returns float32 (size, size) or (size, size, 3). Invalid source pixels
    contribute zeros.
    """
    half = np.tan(np.deg2rad(fov_deg) / 2.0)
    s = (np.arange(size, dtype=np.float64) + 0.5) / size * 2.0 - 1.0
    # camera frame: x forward, y left, z up; image columns go rightward
    yy = -s * half  # left axis
    zz = -s * half  # up axis, row 0 at top
    dirs = np.empty((size, size, 3), dtype=np.float64)
    dirs[:, :, 0] = 1.0
    dirs[:, :, 1] = yy[None, :]
    dirs[:, :, 2] = zz[:, None]
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    R = pose_to_transform(Pose6D(0, 0, 0, 0.0, pitch, yaw)).rotation
    dirs = dirs @ R.T

    from .geometry import pixels_from_dirs

    u, v = pixels_from_dirs(dirs.reshape(-1, 3), img.width, img.height)
    data = img.data if img.channels == 3 else img.data[:, :, None]
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    fu = (u - u0)[:, None]
    fv = (v - v0)[:, None]
    u1 = (u0 + 1) % img.width
    v1 = np.minimum(v0 + 1, img.height - 1)
    u0 %= img.width
    out = (
        data[v0, u0] * (1 - fu) * (1 - fv)
        + data[v0, u1] * fu * (1 - fv)
        + data[v1, u0] * (1 - fu) * fv
        + data[v1, u1] * fu * fv
    )
    out = out.reshape(size, size, -1).astype(np.float32)
    return out[:, :, 0] if img.channels == 1 else out
