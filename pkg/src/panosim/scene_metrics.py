"""Scene-level dataset metrics: surface/hull ratio, occupancy, path complexity."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .bvh import BVH, raycast_batch, closest_distance
from .errors import DegenerateHullError, UnreachableError
from .mesh import TriangleMesh

SQRT2 = math.sqrt(2.0)


def ssa(mesh: TriangleMesh) -> float:
    """Total face area divided by the volume of the vertex convex hull.

    The hull comes from quickhull; its volume is summed from signed
    tetrahedra anchored at the hull centroid.
    """
    verts = mesh.vertices
    if len(verts) < 4:
        raise DegenerateHullError("need at least 4 vertices for a 3-D hull")
    try:
        hull = ConvexHull(verts)
    except QhullError as e:
        raise DegenerateHullError(f"degenerate vertex set: {e}") from e
    centroid = verts[hull.vertices].mean(axis=0)
    tri = verts[hull.simplices]  # (S, 3, 3)
    a = tri[:, 0] - centroid
    b = tri[:, 1] - centroid
    c = tri[:, 2] - centroid
    vol = float(np.abs(np.einsum("ij,ij->i", a, np.cross(b, c))).sum() / 6.0)
    if vol <= 0:
        raise DegenerateHullError("hull volume is zero")
    return mesh.total_area / vol


@dataclass
class OccupancyGrid:
    """2-D traversability raster over the mesh footprint.

    traversable[i, j] covers world x in [origin_x + i*cell, +cell),
    y likewise with j. floor_z holds the supporting floor height where
    traversable (0 elsewhere).
    """

    origin: np.ndarray  # (2,) world xy of cell (0, 0) corner
    cell: float
    traversable: np.ndarray  # (nx, ny) bool
    floor_z: np.ndarray  # (nx, ny) float32

    @property
    def shape(self) -> tuple[int, int]:
        return self.traversable.shape

    def cell_center(self, i: int, j: int) -> np.ndarray:
        return self.origin + (np.array([i, j], dtype=np.float64) + 0.5) * self.cell

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        i = int(math.floor((x - self.origin[0]) / self.cell))
        j = int(math.floor((y - self.origin[1]) / self.cell))
        return i, j

    def traversable_cells(self) -> np.ndarray:
        return np.argwhere(self.traversable)

    @property
    def free_area(self) -> float:
        return float(self.traversable.sum()) * self.cell * self.cell


def occupancy_grid(bvh: BVH, cell: float = 0.1, agent_radius: float = 0.2,
                   probe_height: float = 1.6,
                   floor_band: tuple[float, float] = (-0.05, 0.3)) -> OccupancyGrid:
    """Traversability by floor probing plus an agent-sized clearance sphere.

    A cell is traversable iff a downward ray from the probe height hits a
    floor whose z lies inside floor_band and a sphere of agent_radius at
    (cx, cy, floor_z + probe_height) is collision-free. The probe height is
    the agent/camera height, so clearance is tested where the agent's body is.
    """
    if cell <= 0:
        raise ValueError("cell size must be > 0")
    lo, hi = bvh.mesh.bounds()
    nx = max(1, int(math.ceil((hi[0] - lo[0]) / cell)))
    ny = max(1, int(math.ceil((hi[1] - lo[1]) / cell)))
    origin = np.array([lo[0], lo[1]], dtype=np.float64)

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    cx = origin[0] + (ii.ravel() + 0.5) * cell
    cy = origin[1] + (jj.ravel() + 0.5) * cell
    origins = np.stack([cx, cy, np.full_like(cx, probe_height)], axis=1)
    dirs = np.zeros_like(origins)
    dirs[:, 2] = -1.0
    t, face, _, _ = raycast_batch(bvh, origins, dirs)
    floor_z = probe_height - t
    on_floor = (face >= 0) & (floor_z >= floor_band[0]) & (floor_z <= floor_band[1])

    traversable = np.zeros(nx * ny, dtype=bool)
    fz = np.zeros(nx * ny, dtype=np.float32)
    idx = np.nonzero(on_floor)[0]
    if len(idx):
        centers = np.stack(
            [cx[idx], cy[idx], floor_z[idx] + probe_height], axis=1
        )
        dist, _ = closest_distance(bvh, centers)
        ok = dist >= agent_radius
        traversable[idx[ok]] = True
        fz[idx[ok]] = floor_z[idx[ok]].astype(np.float32)
    return OccupancyGrid(origin, float(cell),
                         traversable.reshape(nx, ny), fz.reshape(nx, ny))


_NEIGHBORS = [(-1, -1, SQRT2), (-1, 0, 1.0), (-1, 1, SQRT2),
              (0, -1, 1.0), (0, 1, 1.0),
              (1, -1, SQRT2), (1, 0, 1.0), (1, 1, SQRT2)]


def astar_path_length(grid: OccupancyGrid, start: tuple[int, int],
                      goal: tuple[int, int]) -> float | None:
    """8-connected A* path length in meters (sqrt(2) diagonals), or None."""
    trav = grid.traversable
    nx, ny = trav.shape
    if not (trav[start] and trav[goal]):
        return None
    if start == goal:
        return 0.0

    def h(c):
        return math.hypot(c[0] - goal[0], c[1] - goal[1])

    g = {start: 0.0}
    open_heap = [(h(start), 0, start)]
    closed = set()
    counter = 1
    while open_heap:
        _, _, cur = heapq.heappop(open_heap)
        if cur == goal:
            return g[cur] * grid.cell
        if cur in closed:
            continue
        closed.add(cur)
        for di, dj, w in _NEIGHBORS:
            ni, nj = cur[0] + di, cur[1] + dj
            if not (0 <= ni < nx and 0 <= nj < ny) or not trav[ni, nj]:
                continue
            cand = g[cur] + w
            nxt = (ni, nj)
            if cand < g.get(nxt, math.inf):
                g[nxt] = cand
                heapq.heappush(open_heap, (cand + h(nxt), counter, nxt))
                counter += 1
    return None


def sample_cell_pairs(grid: OccupancyGrid, n_samples: int, seed: int) -> np.ndarray:
    """Seeded (n, 2, 2) array of distinct traversable cell pairs."""
    cells = grid.traversable_cells()
    if len(cells) < 2:
        raise UnreachableError("fewer than 2 traversable cells")
    rng = np.random.default_rng(seed)
    a = rng.integers(0, len(cells), size=n_samples)
    b = rng.integers(0, len(cells), size=n_samples)
    same = a == b
    b[same] = (b[same] + 1) % len(cells)
    return np.stack([cells[a], cells[b]], axis=1)


def navigation_complexity(grid: OccupancyGrid, n_samples: int = 200,
                          seed: int = 0) -> float:
    """Max over sampled connected pairs of A* length / straight-line distance.

    Disconnected pairs are skipped. Deterministic for a fixed seed.
    """
    pairs = sample_cell_pairs(grid, n_samples, seed)
    best = -math.inf
    for (si, sj), (gi, gj) in pairs:
        path = astar_path_length(grid, (int(si), int(sj)), (int(gi), int(gj)))
        if path is None or path == 0.0:
            continue
        euclid = math.hypot(float(gi - si), float(gj - sj)) * grid.cell
        best = max(best, path / euclid)
    if best < 0:
        raise UnreachableError("no connected pair among the sampled cells")
    return best


def connected_components(grid: OccupancyGrid) -> int:
    """Number of 8-connected traversable components."""
    trav = grid.traversable
    seen = np.zeros_like(trav)
    count = 0
    nx, ny = trav.shape
    for i in range(nx):
        for j in range(ny):
            if trav[i, j] and not seen[i, j]:
                count += 1
                stack = [(i, j)]
                seen[i, j] = True
                while stack:
                    ci, cj = stack.pop()
                    for di, dj, _ in _NEIGHBORS:
                        ni, nj = ci + di, cj + dj
                        if (0 <= ni < nx and 0 <= nj < ny
                                and trav[ni, nj] and not seen[ni, nj]):
                            seen[ni, nj] = True
                            stack.append((ni, nj))
    return count
