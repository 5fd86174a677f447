"""BVH-accelerated ray casting and proximity queries over triangle meshes.

The tree is a flat array structure built with median splits on the longest
centroid axis (leaf size <= 4). Traversal kernels are numba-compiled; all
outputs are per-query and order-independent, so parallel execution is
bitwise deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .errors import EmptySceneError
from .mesh import TriangleMesh

LEAF_SIZE = 4
MIN_HIT_T = 1e-9
_EDGE_EPS = 1e-12  # inclusive edge test: grazing rays hit rather than leak


@dataclass
class BVH:
    """Flattened bounding volume hierarchy over a mesh's faces.

    node_child[i] >= 0: inner node, children at node_child[i] and
    node_child[i]+1. node_child[i] < 0: leaf holding tri slots
    [-(node_child[i]+1), -(node_child[i]+1) + node_count[i]).
    tri_face maps tri slots back to original face indices.
    """

    mesh: TriangleMesh
    node_min: np.ndarray
    node_max: np.ndarray
    node_child: np.ndarray
    node_count: np.ndarray
    tri_face: np.ndarray
    tri_v0: np.ndarray
    tri_e1: np.ndarray
    tri_e2: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_child)


def build_bvh(mesh: TriangleMesh, leaf_size: int = LEAF_SIZE) -> BVH:
    if mesh is None or mesh.n_faces == 0:
        raise EmptySceneError("cannot build a BVH over an empty mesh")
    v = mesh.vertices
    f = mesh.faces
    tri = v[f]  # (F, 3, 3)
    fmin = tri.min(axis=1)
    fmax = tri.max(axis=1)
    centroids = tri.mean(axis=1)

    order = np.arange(mesh.n_faces, dtype=np.int64)
    node_min: list[np.ndarray] = []
    node_max: list[np.ndarray] = []
    node_child: list[int] = []
    node_count: list[int] = []

    # (start, end, node_index) ranges over `order`; children are allocated
    # consecutively so node_child needs a single index.
    stack = [(0, mesh.n_faces, _alloc(node_min, node_max, node_child, node_count))]
    while stack:
        start, end, idx = stack.pop()
        sel = order[start:end]
        node_min[idx] = fmin[sel].min(axis=0)
        node_max[idx] = fmax[sel].max(axis=0)
        n = end - start
        if n <= leaf_size:
            node_child[idx] = -(start + 1)
            node_count[idx] = n
            continue
        cent = centroids[sel]
        axis = int(np.argmax(cent.max(axis=0) - cent.min(axis=0)))
        local = np.argsort(cent[:, axis], kind="stable")
        order[start:end] = sel[local]
        mid = start + n // 2
        left = _alloc(node_min, node_max, node_child, node_count)
        right = _alloc(node_min, node_max, node_child, node_count)
        assert right == left + 1
        node_child[idx] = left
        node_count[idx] = 0
        stack.append((start, mid, left))
        stack.append((mid, end, right))

    tri_sorted = tri[order]
    return BVH(
        mesh=mesh,
        node_min=np.ascontiguousarray(node_min, dtype=np.float64),
        node_max=np.ascontiguousarray(node_max, dtype=np.float64),
        node_child=np.array(node_child, dtype=np.int64),
        node_count=np.array(node_count, dtype=np.int64),
        tri_face=order.copy(),
        tri_v0=np.ascontiguousarray(tri_sorted[:, 0]),
        tri_e1=np.ascontiguousarray(tri_sorted[:, 1] - tri_sorted[:, 0]),
        tri_e2=np.ascontiguousarray(tri_sorted[:, 2] - tri_sorted[:, 0]),
    )


def _alloc(node_min, node_max, node_child, node_count) -> int:
    node_min.append(None)
    node_max.append(None)
    node_child.append(0)
    node_count.append(0)
    return len(node_child) - 1


@njit(cache=True, inline="always")
def _slab_hit(ox, oy, oz, ix, iy, iz, bmin, bmax, t_best):
    t0 = (bmin[0] - ox) * ix
    t1 = (bmax[0] - ox) * ix
    tmin = min(t0, t1)
    tmax = max(t0, t1)
    t0 = (bmin[1] - oy) * iy
    t1 = (bmax[1] - oy) * iy
    tmin = max(tmin, min(t0, t1))
    tmax = min(tmax, max(t0, t1))
    t0 = (bmin[2] - oz) * iz
    t1 = (bmax[2] - oz) * iz
    tmin = max(tmin, min(t0, t1))
    tmax = min(tmax, max(t0, t1))
    if tmax < tmin or tmax < MIN_HIT_T or tmin > t_best:
        return -1.0
    return max(tmin, 0.0)


@njit(cache=True)
def _ray_traverse(ox, oy, oz, dx, dy, dz,
                  node_min, node_max, node_child, node_count,
                  tri_v0, tri_e1, tri_e2):
    """Nearest hit: returns (t, tri_slot, bary_u, bary_v); tri_slot=-1 on miss."""
    ix = 1.0 / dx if dx != 0.0 else np.inf
    iy = 1.0 / dy if dy != 0.0 else np.inf
    iz = 1.0 / dz if dz != 0.0 else np.inf
    best_t = np.inf
    best_tri = -1
    best_u = 0.0
    best_v = 0.0
    stack = np.empty(128, dtype=np.int64)
    sp = 0
    stack[0] = 0
    while sp >= 0:
        node = stack[sp]
        sp -= 1
        if _slab_hit(ox, oy, oz, ix, iy, iz,
                     node_min[node], node_max[node], best_t) < 0.0:
            continue
        child = node_child[node]
        if child >= 0:
            # near child first keeps best_t tight
            tl = _slab_hit(ox, oy, oz, ix, iy, iz,
                           node_min[child], node_max[child], best_t)
            tr = _slab_hit(ox, oy, oz, ix, iy, iz,
                           node_min[child + 1], node_max[child + 1], best_t)
            if tl >= 0.0 and tr >= 0.0:
                if tl <= tr:
                    sp += 1
                    stack[sp] = child + 1
                    sp += 1
                    stack[sp] = child
                else:
                    sp += 1
                    stack[sp] = child
                    sp += 1
                    stack[sp] = child + 1
            elif tl >= 0.0:
                sp += 1
                stack[sp] = child
            elif tr >= 0.0:
                sp += 1
                stack[sp] = child + 1
            continue
        start = -(child + 1)
        for k in range(start, start + node_count[node]):
            # Moller-Trumbore, inclusive edges
            e1x, e1y, e1z = tri_e1[k, 0], tri_e1[k, 1], tri_e1[k, 2]
            e2x, e2y, e2z = tri_e2[k, 0], tri_e2[k, 1], tri_e2[k, 2]
            px = dy * e2z - dz * e2y
            py = dz * e2x - dx * e2z
            pz = dx * e2y - dy * e2x
            det = e1x * px + e1y * py + e1z * pz
            if -1e-14 < det < 1e-14:
                continue
            inv = 1.0 / det
            sx = ox - tri_v0[k, 0]
            sy = oy - tri_v0[k, 1]
            sz = oz - tri_v0[k, 2]
            u = (sx * px + sy * py + sz * pz) * inv
            if u < -_EDGE_EPS or u > 1.0 + _EDGE_EPS:
                continue
            qx = sy * e1z - sz * e1y
            qy = sz * e1x - sx * e1z
            qz = sx * e1y - sy * e1x
            vv = (dx * qx + dy * qy + dz * qz) * inv
            if vv < -_EDGE_EPS or u + vv > 1.0 + _EDGE_EPS:
                continue
            t = (e2x * qx + e2y * qy + e2z * qz) * inv
            if MIN_HIT_T < t < best_t:
                best_t = t
                best_tri = k
                best_u = u
                best_v = vv
    return best_t, best_tri, best_u, best_v


@njit(cache=True, parallel=True)
def _raycast_batch(origins, dirs, node_min, node_max, node_child, node_count,
                   tri_v0, tri_e1, tri_e2, out_t, out_tri, out_u, out_v):
    for i in prange(origins.shape[0]):
        t, tri, u, v = _ray_traverse(
            origins[i, 0], origins[i, 1], origins[i, 2],
            dirs[i, 0], dirs[i, 1], dirs[i, 2],
            node_min, node_max, node_child, node_count,
            tri_v0, tri_e1, tri_e2,
        )
        out_t[i] = t
        out_tri[i] = tri
        out_u[i] = u
        out_v[i] = v


@njit(cache=True, inline="always")
def _point_tri_dist2(px, py, pz, a, e1, e2):
    """Squared distance from point to triangle (Ericson's closest point)."""
    bx = px - a[0]
    by = py - a[1]
    bz = pz - a[2]
    d1 = e1[0] * bx + e1[1] * by + e1[2] * bz
    d2 = e2[0] * bx + e2[1] * by + e2[2] * bz
    a11 = e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]
    a12 = e1[0] * e2[0] + e1[1] * e2[1] + e1[2] * e2[2]
    a22 = e2[0] * e2[0] + e2[1] * e2[1] + e2[2] * e2[2]
    det = a11 * a22 - a12 * a12
    s = a22 * d1 - a12 * d2
    t = a11 * d2 - a12 * d1
    if s + t <= det:
        if s < 0.0:
            if t < 0.0:
                # region of vertex a
                if d1 > 0.0:
                    s = min(1.0, d1 / a11) if a11 > 0 else 0.0
                    t = 0.0
                else:
                    s = 0.0
                    t = min(1.0, max(0.0, d2 / a22)) if a22 > 0 else 0.0
            else:
                s = 0.0
                t = min(1.0, max(0.0, d2 / a22)) if a22 > 0 else 0.0
        elif t < 0.0:
            t = 0.0
            s = min(1.0, max(0.0, d1 / a11)) if a11 > 0 else 0.0
        else:
            inv = 1.0 / det
            s *= inv
            t *= inv
    else:
        if s < 0.0:
            tmp0 = a12 + d1
            tmp1 = a22 + d2
            if tmp1 > tmp0:
                num = tmp1 - tmp0
                den = a11 - 2.0 * a12 + a22
                s = min(1.0, max(0.0, num / den)) if den > 0 else 0.0
                t = 1.0 - s
            else:
                s = 0.0
                t = min(1.0, max(0.0, d2 / a22)) if a22 > 0 else 0.0
        elif t < 0.0:
            tmp0 = a12 + d2
            tmp1 = a11 + d1
            if tmp1 > tmp0:
                num = tmp1 - tmp0
                den = a11 - 2.0 * a12 + a22
                t = min(1.0, max(0.0, num / den)) if den > 0 else 0.0
                s = 1.0 - t
            else:
                t = 0.0
                s = min(1.0, max(0.0, d1 / a11)) if a11 > 0 else 0.0
        else:
            num = (a22 + d2) - (a12 + d1)
            den = a11 - 2.0 * a12 + a22
            s = min(1.0, max(0.0, num / den)) if den > 0 else 0.0
            t = 1.0 - s
    cx = a[0] + s * e1[0] + t * e2[0]
    cy = a[1] + s * e1[1] + t * e2[1]
    cz = a[2] + s * e1[2] + t * e2[2]
    dx = px - cx
    dy = py - cy
    dz = pz - cz
    return dx * dx + dy * dy + dz * dz


@njit(cache=True, inline="always")
def _box_dist2(px, py, pz, bmin, bmax):
    dx = max(bmin[0] - px, 0.0, px - bmax[0])
    dy = max(bmin[1] - py, 0.0, py - bmax[1])
    dz = max(bmin[2] - pz, 0.0, pz - bmax[2])
    return dx * dx + dy * dy + dz * dz


@njit(cache=True)
def _closest_traverse(px, py, pz, node_min, node_max, node_child, node_count,
                      tri_v0, tri_e1, tri_e2):
    best = np.inf
    best_tri = -1
    stack = np.empty(128, dtype=np.int64)
    sp = 0
    stack[0] = 0
    while sp >= 0:
        node = stack[sp]
        sp -= 1
        if _box_dist2(px, py, pz, node_min[node], node_max[node]) >= best:
            continue
        child = node_child[node]
        if child >= 0:
            dl = _box_dist2(px, py, pz, node_min[child], node_max[child])
            dr = _box_dist2(px, py, pz, node_min[child + 1], node_max[child + 1])
            if dl <= dr:
                if dr < best:
                    sp += 1
                    stack[sp] = child + 1
                if dl < best:
                    sp += 1
                    stack[sp] = child
            else:
                if dl < best:
                    sp += 1
                    stack[sp] = child
                if dr < best:
                    sp += 1
                    stack[sp] = child + 1
            continue
        start = -(child + 1)
        for k in range(start, start + node_count[node]):
            d2 = _point_tri_dist2(px, py, pz, tri_v0[k], tri_e1[k], tri_e2[k])
            if d2 < best:
                best = d2
                best_tri = k
    return best, best_tri


@njit(cache=True, parallel=True)
def _closest_batch(points, node_min, node_max, node_child, node_count,
                   tri_v0, tri_e1, tri_e2, out_d, out_tri):
    for i in prange(points.shape[0]):
        d2, tri = _closest_traverse(
            points[i, 0], points[i, 1], points[i, 2],
            node_min, node_max, node_child, node_count,
            tri_v0, tri_e1, tri_e2,
        )
        out_d[i] = np.sqrt(d2)
        out_tri[i] = tri


@dataclass(frozen=True)
class Hit:
    t: float
    face_id: int
    bary_u: float
    bary_v: float


@dataclass(frozen=True)
class CollisionResult:
    colliding: bool
    distance: float
    face_id: int


def raycast(bvh: BVH, origin, direction) -> Hit | None:
    """Nearest intersection with t > 1e-9, or None on miss."""
    o = np.asarray(origin, dtype=np.float64).reshape(3)
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    t, tri, u, v = _ray_traverse(
        o[0], o[1], o[2], d[0], d[1], d[2],
        bvh.node_min, bvh.node_max, bvh.node_child, bvh.node_count,
        bvh.tri_v0, bvh.tri_e1, bvh.tri_e2,
    )
    if tri < 0:
        return None
    return Hit(float(t), int(bvh.tri_face[tri]), float(u), float(v))


def raycast_batch(bvh: BVH, origins: np.ndarray, dirs: np.ndarray):
    """Vectorized nearest-hit query.

    Returns (t, face_id, bary_u, bary_v); face_id is -1 and t is inf on miss.
    """
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    if origins.ndim == 1:
        origins = np.broadcast_to(origins, dirs.shape)
    origins = np.ascontiguousarray(origins).reshape(-1, 3)
    n = len(dirs)
    out_t = np.empty(n, dtype=np.float64)
    out_tri = np.empty(n, dtype=np.int64)
    out_u = np.empty(n, dtype=np.float64)
    out_v = np.empty(n, dtype=np.float64)
    _raycast_batch(origins, dirs, bvh.node_min, bvh.node_max, bvh.node_child,
                   bvh.node_count, bvh.tri_v0, bvh.tri_e1, bvh.tri_e2,
                   out_t, out_tri, out_u, out_v)
    face = np.where(out_tri >= 0, bvh.tri_face[np.maximum(out_tri, 0)], -1)
    return out_t, face, out_u, out_v


def closest_distance(bvh: BVH, points: np.ndarray):
    """Distance from each point to the mesh surface plus the witness face."""
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    out_d = np.empty(len(pts), dtype=np.float64)
    out_tri = np.empty(len(pts), dtype=np.int64)
    _closest_batch(pts, bvh.node_min, bvh.node_max, bvh.node_child,
                   bvh.node_count, bvh.tri_v0, bvh.tri_e1, bvh.tri_e2,
                   out_d, out_tri)
    return out_d, bvh.tri_face[out_tri]


def sphere_collision(bvh: BVH, center, radius: float) -> CollisionResult:
    """A sphere collides iff the surface comes closer than its radius."""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    d, face = closest_distance(bvh, np.asarray(center, dtype=np.float64).reshape(1, 3))
    return CollisionResult(bool(d[0] < radius), float(d[0]), int(face[0]))
