"""Point-cloud reprojection rendering from sparse RGB-D panoramas.

Stages, composed by render_view: pick the nearest source panoramas, splat
each into the target view, reject splats that disagree with the mesh depth
(see-through protection), estimate per-view splat density, softmax-blend
views by density, interpolate each view's sparse splats, and aggregate.

Splat coordinates stay continuous until interpolation. Longitude wraps at
the seam in every spatial query. All reductions run in fixed order, so
output is bitwise reproducible regardless of worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .bvh import BVH
from .dataset import PanoramaDataset, PanoramaView
from .errors import EmptySceneError, ShapeError
from .geometry import (
    EquirectImage,
    Pose6D,
    grid_directions,
    pixels_from_dirs,
    pose_to_transform,
)
from .render import render_equirect


@dataclass(frozen=True)
class RenderConfig:
    k: int = 4  # source views per target
    lambda_d: float = 1.0  # density softmax temperature
    depth_eps: float = 0.1  # meters; see-through rejection threshold
    kde_bandwidth: float = 1.5  # pixels
    width: int = 128
    height: int = 64
    interp_radius: float = 3.0  # pixels; nearest-splat search radius
    kde_truncate: float = 4.0  # bandwidths; keeps truncation error <=1e-3

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.depth_eps <= 0:
            raise ValueError("depth_eps must be > 0")
        if self.kde_bandwidth <= 0:
            raise ValueError("kde_bandwidth must be > 0")
        if self.width != 2 * self.height:
            raise ValueError("output must be 2:1 equirectangular")


@dataclass(frozen=True)
class ViewSplats:
    """Reprojected source pixels in continuous target image coordinates."""

    view_id: int
    u: np.ndarray  # (N,) float64 in [0, W)
    v: np.ndarray  # (N,) float64 in [0, H)
    depth: np.ndarray  # (N,) float64 distance to target origin, > 0
    rgb: np.ndarray  # (N, 3) float32

    def __len__(self) -> int:
        return len(self.u)


def select_source_views(dataset: PanoramaDataset, target: Pose6D, k: int) -> list[int]:
    """ids of the k views nearest in position; ties break on ascending id."""
    if len(dataset) == 0:
        raise EmptySceneError("empty panorama dataset")
    d = np.linalg.norm(dataset.positions - target.position, axis=1)
    order = np.lexsort((dataset.ids, d))
    return [int(i) for i in dataset.ids[order][:k]]


def reproject_view(view: PanoramaView, target: Pose6D,
                   width: int, height: int) -> ViewSplats:
    """Splat every valid source pixel into the target equirect frame."""
    depth = view.depth.data.astype(np.float64)
    valid = view.rgb.mask & view.depth.mask & (depth > 0)
    dirs = grid_directions(view.rgb.width, view.rgb.height)[valid]
    local = dirs * depth[valid][:, None]
    world = pose_to_transform(view.pose).apply(local)

    T = pose_to_transform(target)
    rel = (world - T.translation) @ T.rotation
    dist = np.linalg.norm(rel, axis=1)
    keep = dist > 1e-9
    rel = rel[keep]
    dist = dist[keep]
    u, v = pixels_from_dirs(rel / dist[:, None], width, height)
    return ViewSplats(view.view_id, u, v, dist, view.rgb.data[valid][keep])


def depth_filter(splats: ViewSplats, target_depth: EquirectImage,
                 depth_eps: float) -> ViewSplats:
    """Keep splats whose depth matches the mesh depth at their pixel.

    The lookup is nearest-pixel: interpolating depth across silhouette
    edges would compare against a surface that does not exist.
    """
    w, h = target_depth.width, target_depth.height
    iu = (np.floor(splats.u + 0.5).astype(np.int64)) % w
    iv = np.clip(np.floor(splats.v + 0.5).astype(np.int64), 0, h - 1)
    ref = target_depth.data[iv, iu].astype(np.float64)
    ok = target_depth.mask[iv, iu] & (np.abs(splats.depth - ref) <= depth_eps)
    return ViewSplats(splats.view_id, splats.u[ok], splats.v[ok],
                      splats.depth[ok], splats.rgb[ok])


def _bucket_index(u: np.ndarray, v: np.ndarray, width: int, height: int):
    """CSR bucket index over integer pixel cells (floor binning)."""
    iu = np.floor(u).astype(np.int64) % width
    iv = np.clip(np.floor(v).astype(np.int64), 0, height - 1)
    bucket = iv * width + iu
    order = np.argsort(bucket, kind="stable")
    counts = np.bincount(bucket, minlength=width * height)
    offsets = np.zeros(width * height + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return order.astype(np.int64), offsets


@njit(cache=True, parallel=True)
def _kde_kernel(us, vs, order, offsets, width, height, bw, radius, out):
    inv2 = 1.0 / (2.0 * bw * bw)
    norm = 1.0 / (2.0 * math.pi * bw * bw)
    r2 = radius * radius
    ir = int(math.ceil(radius)) + 1
    n_cols = min(width, 2 * ir + 1)
    for py in prange(height):
        v_lo = max(0, py - ir)
        v_hi = min(height - 1, py + ir)
        for px in range(width):
            acc = 0.0
            for iv in range(v_lo, v_hi + 1):
                for ci in range(n_cols):
                    iu = (px - ir + ci) % width if n_cols < width else ci
                    b = iv * width + iu
                    for k in range(offsets[b], offsets[b + 1]):
                        s = order[k]
                        du = abs(us[s] - px)
                        if du > width * 0.5:
                            du = width - du
                        dv = vs[s] - py
                        d2 = du * du + dv * dv
                        if d2 <= r2:
                            acc += math.exp(-d2 * inv2)
            out[py, px] = acc * norm


def density_map(splats: ViewSplats, width: int, height: int,
                bandwidth: float, truncate: float = 4.0) -> np.ndarray:
    """Gaussian KDE of splat positions on the pixel grid (points per pixel).

    The kernel is truncated at `truncate` bandwidths; at the default 4 the
    dropped tail is below 1e-3 of any local contribution.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be > 0")
    out = np.zeros((height, width), dtype=np.float64)
    if len(splats) == 0:
        return out
    order, offsets = _bucket_index(splats.u, splats.v, width, height)
    _kde_kernel(splats.u, splats.v, order, offsets, width, height,
                float(bandwidth), float(truncate * bandwidth), out)
    return out


def view_weights(densities: np.ndarray, lambda_d: float) -> np.ndarray:
    """Per-pixel softmax over the view axis: exp(l*d_i)/sum_m exp(l*d_m)."""
    d = np.asarray(densities, dtype=np.float64)
    if d.ndim != 3:
        raise ShapeError(f"expected (k, H, W) densities, got {d.shape}")
    z = lambda_d * d
    z -= z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


@njit(cache=True, parallel=True)
def _interp_kernel(us, vs, rgb, order, offsets, width, height, radius,
                   out_rgb, out_mask):
    r2 = radius * radius
    ir = int(math.ceil(radius)) + 1
    n_cols = min(width, 2 * ir + 1)
    for py in prange(height):
        v_lo = max(0, py - ir)
        v_hi = min(height - 1, py + ir)
        for px in range(width):
            d0 = np.inf
            d1 = np.inf
            d2_ = np.inf
            d3 = np.inf
            i0 = -1
            i1 = -1
            i2 = -1
            i3 = -1
            for iv in range(v_lo, v_hi + 1):
                for ci in range(n_cols):
                    iu = (px - ir + ci) % width if n_cols < width else ci
                    b = iv * width + iu
                    for k in range(offsets[b], offsets[b + 1]):
                        s = order[k]
                        du = abs(us[s] - px)
                        if du > width * 0.5:
                            du = width - du
                        dv = vs[s] - py
                        dd = du * du + dv * dv
                        if dd > r2:
                            continue
                        if dd < d0:
                            d3, i3 = d2_, i2
                            d2_, i2 = d1, i1
                            d1, i1 = d0, i0
                            d0, i0 = dd, s
                        elif dd < d1:
                            d3, i3 = d2_, i2
                            d2_, i2 = d1, i1
                            d1, i1 = dd, s
                        elif dd < d2_:
                            d3, i3 = d2_, i2
                            d2_, i2 = dd, s
                        elif dd < d3:
                            d3, i3 = dd, s
            if i0 < 0:
                out_mask[py, px] = False
                continue
            out_mask[py, px] = True
            if d0 < 1e-18:  # splat sits on the pixel center: copy exactly
                out_rgb[py, px, 0] = rgb[i0, 0]
                out_rgb[py, px, 1] = rgb[i0, 1]
                out_rgb[py, px, 2] = rgb[i0, 2]
                continue
            wsum = 0.0
            r_acc = 0.0
            g_acc = 0.0
            b_acc = 0.0
            for di, ii in ((d0, i0), (d1, i1), (d2_, i2), (d3, i3)):
                if ii < 0:
                    continue
                w = 1.0 / di
                wsum += w
                r_acc += w * rgb[ii, 0]
                g_acc += w * rgb[ii, 1]
                b_acc += w * rgb[ii, 2]
            out_rgb[py, px, 0] = r_acc / wsum
            out_rgb[py, px, 1] = g_acc / wsum
            out_rgb[py, px, 2] = b_acc / wsum


def interpolate_view(splats: ViewSplats, width: int, height: int,
                     radius: float = 3.0):
    """Resample one view's splats onto the pixel grid.

    Up to the 4 nearest splats within `radius` blend with inverse-square-
    distance weights; an exact hit copies the splat color; pixels with no
    splat in range are invalid.
    """
    out_rgb = np.zeros((height, width, 3), dtype=np.float32)
    out_mask = np.zeros((height, width), dtype=np.bool_)
    if len(splats) == 0:
        return out_rgb, out_mask
    order, offsets = _bucket_index(splats.u, splats.v, width, height)
    _interp_kernel(splats.u, splats.v,
                   np.ascontiguousarray(splats.rgb, dtype=np.float64),
                   order, offsets, width, height, float(radius),
                   out_rgb, out_mask)
    return out_rgb, out_mask


def aggregate(images: np.ndarray, masks: np.ndarray, weights: np.ndarray):
    """Blend per-view images by weights renormalized over valid views.

    Returns (rgb (H,W,3) float32, disocclusion mask (H,W) bool). The
    dis-occlusion mask is True where no view contributed.
    """
    images = np.asarray(images, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    weights = np.asarray(weights, dtype=np.float64)
    if not (images.shape[:3] == masks.shape == weights.shape):
        raise ShapeError(
            f"mismatched stack shapes {images.shape} {masks.shape} {weights.shape}"
        )
    wv = weights * masks
    total = wv.sum(axis=0)
    covered = total > 0
    wv = np.divide(wv, total, out=np.zeros_like(wv), where=covered)
    out = np.einsum("khw,khwc->hwc", wv, images).astype(np.float32)
    return out, ~covered


@dataclass(frozen=True)
class RenderResult:
    rgb: EquirectImage  # mask = covered pixels
    disocclusion: np.ndarray  # (H, W) bool, True where no source view saw it
    target_depth: EquirectImage
    source_ids: list[int] = field(default_factory=list)


def render_view(dataset: PanoramaDataset, bvh: BVH, target: Pose6D,
                cfg: RenderConfig) -> RenderResult:
    """Full geometric stage: select, reproject, filter, weight, interpolate."""
    ids = select_source_views(dataset, target, cfg.k)
    target_depth = render_equirect(bvh, target, cfg.width, cfg.height, "depth")
    imgs = np.zeros((len(ids), cfg.height, cfg.width, 3), dtype=np.float32)
    masks = np.zeros((len(ids), cfg.height, cfg.width), dtype=bool)
    dens = np.zeros((len(ids), cfg.height, cfg.width), dtype=np.float64)
    for i, vid in enumerate(ids):
        splats = reproject_view(dataset.get(vid), target, cfg.width, cfg.height)
        splats = depth_filter(splats, target_depth, cfg.depth_eps)
        dens[i] = density_map(splats, cfg.width, cfg.height,
                              cfg.kde_bandwidth, cfg.kde_truncate)
        imgs[i], masks[i] = interpolate_view(splats, cfg.width, cfg.height,
                                             cfg.interp_radius)
    weights = view_weights(dens, cfg.lambda_d)
    rgb, disocc = aggregate(imgs, masks, weights)
    return RenderResult(
        EquirectImage.rgb(rgb, ~disocc), disocc, target_depth, ids
    )
