"""Independent reference implementations used only to check the package.

Deliberately naive: brute force over all faces, plain Dijkstra, direct
KDE sums, loop-based SSIM. None of these share code with the paths they
verify.
"""

from __future__ import annotations

import heapq
import math

import numpy as np


def brute_raycast(mesh, origin, direction, t_min=1e-9):
    """Nearest ray-triangle hit over every face (vectorized Moller-Trumbore)."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    v = mesh.vertices
    f = mesh.faces
    a = v[f[:, 0]]
    e1 = v[f[:, 1]] - a
    e2 = v[f[:, 2]] - a
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = o - a
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    w = (q @ d) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    eps = 1e-12
    hit = ok & (u >= -eps) & (w >= -eps) & (u + w <= 1 + eps) & (t > t_min)
    if not hit.any():
        return math.inf, -1
    idx = np.nonzero(hit)[0]
    best = idx[np.argmin(t[idx])]
    return float(t[best]), int(best)


def brute_min_distance(mesh, point):
    """Min point-to-surface distance via plane/edge/vertex decomposition."""
    p = np.asarray(point, dtype=np.float64)
    v = mesh.vertices
    f = mesh.faces
    tri = v[f]  # (F, 3, 3)
    best = math.inf
    # vertex distances
    best = min(best, float(np.linalg.norm(tri.reshape(-1, 3) - p, axis=1).min()))
    # edge distances
    for i, j in ((0, 1), (1, 2), (2, 0)):
        a = tri[:, i]
        ab = tri[:, j] - a
        tt = np.clip(np.einsum("ij,ij->i", p - a, ab)
                     / np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-30), 0, 1)
        proj = a + ab * tt[:, None]
        best = min(best, float(np.linalg.norm(proj - p, axis=1).min()))
    # interior projections
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    nn = np.linalg.norm(n, axis=1)
    n = n / nn[:, None]
    dist_plane = np.einsum("ij,ij->i", p - tri[:, 0], n)
    foot = p - dist_plane[:, None] * n
    # barycentric test of the foot point
    v0 = tri[:, 1] - tri[:, 0]
    v1 = tri[:, 2] - tri[:, 0]
    v2 = foot - tri[:, 0]
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    denom = d00 * d11 - d01 * d01
    bu = (d11 * d20 - d01 * d21) / np.maximum(denom, 1e-30)
    bv = (d00 * d21 - d01 * d20) / np.maximum(denom, 1e-30)
    inside = (bu >= 0) & (bv >= 0) & (bu + bv <= 1)
    if inside.any():
        best = min(best, float(np.abs(dist_plane[inside]).min()))
    return best


def dijkstra_path_length(grid, start, goal):
    """Plain Dijkstra over the 8-connected traversable cells, in meters."""
    trav = grid.traversable
    nx, ny = trav.shape
    if not (trav[start] and trav[goal]):
        return None
    dist = {start: 0.0}
    heap = [(0.0, start)]
    seen = set()
    moves = [(-1, -1, math.sqrt(2)), (-1, 0, 1.0), (-1, 1, math.sqrt(2)),
             (0, -1, 1.0), (0, 1, 1.0),
             (1, -1, math.sqrt(2)), (1, 0, 1.0), (1, 1, math.sqrt(2))]
    while heap:
        d, cur = heapq.heappop(heap)
        if cur == goal:
            return d * grid.cell
        if cur in seen:
            continue
        seen.add(cur)
        for di, dj, w in moves:
            ni, nj = cur[0] + di, cur[1] + dj
            if 0 <= ni < nx and 0 <= nj < ny and trav[ni, nj]:
                cand = d + w
                if cand < dist.get((ni, nj), math.inf):
                    dist[(ni, nj)] = cand
                    heapq.heappush(heap, (cand, (ni, nj)))
    return None


def kde_direct(u, v, width, height, bandwidth):
    """Untruncated KDE sum over the full grid, with longitude wrap."""
    out = np.zeros((height, width), dtype=np.float64)
    norm = 1.0 / (2.0 * math.pi * bandwidth * bandwidth)
    inv2 = 1.0 / (2.0 * bandwidth * bandwidth)
    px = np.arange(width, dtype=np.float64)
    py = np.arange(height, dtype=np.float64)
    for su, sv in zip(u, v):
        du = np.abs(su - px)
        du = np.minimum(du, width - du)
        dv = sv - py
        out += np.exp(-(du[None, :] ** 2 + dv[:, None] ** 2) * inv2)
    return out * norm


def ssim_reference(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Loop-over-windows SSIM; slow but direct from the definition."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    x = np.arange(window) - (window - 1) / 2
    g1 = np.exp(-(x * x) / (2 * sigma * sigma))
    g1 /= g1.sum()
    w = np.outer(g1, g1)
    c1, c2 = k1 * k1, k2 * k2
    h, wid, ch = a.shape
    vals = []
    for c in range(ch):
        acc = []
        for i in range(h - window + 1):
            for j in range(wid - window + 1):
                pa = a[i : i + window, j : j + window, c]
                pb = b[i : i + window, j : j + window, c]
                mu_a = (w * pa).sum()
                mu_b = (w * pb).sum()
                va = (w * pa * pa).sum() - mu_a * mu_a
                vb = (w * pb * pb).sum() - mu_b * mu_b
                cov = (w * pa * pb).sum() - mu_a * mu_b
                acc.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                           / ((mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)))
        vals.append(np.mean(acc))
    return float(np.mean(vals))


def fd_gradient(fn, x, indices=None, eps=1e-5):
    """Central finite differences of a scalar function at selected indices."""
    flat = x.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    out = {}
    for i in indices:
        orig = flat[i]
        flat[i] = orig + eps
        lp = fn()
        flat[i] = orig - eps
        lm = fn()
        flat[i] = orig
        out[i] = (lp - lm) / (2 * eps)
    return out


def max_rel_err(analytic_flat, fd_map, floor=1e-6):
    worst = 0.0
    for i, fd in fd_map.items():
        a = analytic_flat[i]
        worst = max(worst, abs(fd - a) / max(abs(fd), abs(a), floor))
    return worst
