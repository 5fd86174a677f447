"""Triangle meshes with per-face appearance and semantic labels.

File format: OBJ subset (``v`` and triangular ``f`` lines only) plus a
sidecar ``<name>.labels.json`` mapping face index to
``{"albedo": [r,g,b], "semantic": int, "checker": {"scale": s, "color2": [r,g,b]}}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptySceneError, ShapeError

# semantic label ids (subset of an indoor 13-class scheme)
SEM_UNLABELED = 0
SEM_FLOOR = 1
SEM_CEILING = 2
SEM_WALL = 3
SEM_DOOR = 4
SEM_STAIRS = 5
SEM_CLUTTER = 6

SEMANTIC_NAMES = {
    SEM_UNLABELED: "unlabeled",
    SEM_FLOOR: "floor",
    SEM_CEILING: "ceiling",
    SEM_WALL: "wall",
    SEM_DOOR: "door",
    SEM_STAIRS: "stairs",
    SEM_CLUTTER: "clutter",
}

MIN_FACE_AREA = 1e-12  # m^2

_DEFAULT_ALBEDO = (0.7, 0.7, 0.7)


@dataclass
class TriangleMesh:
    """Indexed triangle soup with per-face albedo, label and checker texture.

    checker_scale is checker cells per meter in the face plane; 0 disables
    the texture for that face. Arrays are treated as immutable after
    construction.
    """

    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int64
    albedo: np.ndarray | None = None  # (F, 3) float32
    semantic: np.ndarray | None = None  # (F,) int32
    checker_scale: np.ndarray | None = None  # (F,) float32
    checker_color2: np.ndarray | None = None  # (F, 3) float32

    _normals: np.ndarray = field(default=None, repr=False)
    _areas: np.ndarray = field(default=None, repr=False)
    _uv_basis: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) == 0:
            raise EmptySceneError("mesh has no faces")
        if f.min() < 0 or f.max() >= len(v):
            raise ShapeError("face index out of vertex range")
        n_f = len(f)
        self.vertices = v
        self.faces = f
        self.albedo = self._per_face(self.albedo, _DEFAULT_ALBEDO, np.float32, 3)
        self.semantic = self._per_face(self.semantic, SEM_UNLABELED, np.int32)
        self.checker_scale = self._per_face(self.checker_scale, 0.0, np.float32)
        self.checker_color2 = self._per_face(self.checker_color2, _DEFAULT_ALBEDO, np.float32, 3)

        a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
        cross = np.cross(b - a, c - a)
        area2 = np.linalg.norm(cross, axis=1)
        if (area2 < 2 * MIN_FACE_AREA).any():
            bad = int(np.argmin(area2))
            raise ShapeError(f"degenerate face {bad} (area {area2[bad] / 2:.3g} m^2)")
        self._areas = area2 / 2.0
        self._normals = cross / area2[:, None]
        e1 = b - a
        e1 /= np.linalg.norm(e1, axis=1)[:, None]
        e2 = np.cross(self._normals, e1)
        self._uv_basis = np.stack([e1, e2], axis=1)  # (F, 2, 3)
        assert self._uv_basis.shape == (n_f, 2, 3)

    def _per_face(self, arr, default, dtype, comps: int | None = None):
        n = len(self.faces)
        shape = (n,) if comps is None else (n, comps)
        if arr is None:
            out = np.empty(shape, dtype=dtype)
            out[...] = default
            return out
        out = np.ascontiguousarray(arr, dtype=dtype)
        if out.shape != shape:
            raise ShapeError(f"per-face array has shape {out.shape}, expected {shape}")
        return out.copy()

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def face_normals(self) -> np.ndarray:
        return self._normals

    @property
    def face_areas(self) -> np.ndarray:
        return self._areas

    @property
    def total_area(self) -> float:
        return float(self._areas.sum())

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def shade(self, face_ids: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Albedo modulated by the per-face checker at world points on faces."""
        face_ids = np.asarray(face_ids, dtype=np.int64)
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        base = self.albedo[face_ids].astype(np.float32)
        scale = self.checker_scale[face_ids]
        textured = scale > 0
        if textured.any():
            fid = face_ids[textured]
            rel = points[textured] - self.vertices[self.faces[fid, 0]]
            uv_a = np.einsum("ij,ij->i", rel, self._uv_basis[fid, 0])
            uv_b = np.einsum("ij,ij->i", rel, self._uv_basis[fid, 1])
            s = scale[textured].astype(np.float64)
            parity = (np.floor(uv_a * s) + np.floor(uv_b * s)).astype(np.int64) & 1
            tex = np.where(
                parity[:, None] == 1, self.checker_color2[fid], self.albedo[fid]
            )
            base[textured] = tex
        return base

    def scaled(self, s: float) -> "TriangleMesh":
        return TriangleMesh(
            self.vertices * s,
            self.faces,
            self.albedo,
            self.semantic,
            self.checker_scale,
            self.checker_color2,
        )


def save_obj(mesh: TriangleMesh, path) -> None:
    path = Path(path)
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    path.write_text("\n".join(lines) + "\n")
    labels = {}
    for i in range(mesh.n_faces):
        entry = {
            "albedo": [round(float(c), 6) for c in mesh.albedo[i]],
            "semantic": int(mesh.semantic[i]),
        }
        if mesh.checker_scale[i] > 0:
            entry["checker"] = {
                "scale": round(float(mesh.checker_scale[i]), 6),
                "color2": [round(float(c), 6) for c in mesh.checker_color2[i]],
            }
        labels[str(i)] = entry
    with open(path.with_suffix(path.suffix + ".labels.json")
              if path.suffix != ".obj" else path.with_name(path.stem + ".labels.json"),
              "w") as f:
        json.dump(labels, f, indent=0)


def load_obj(path) -> TriangleMesh:
    path = Path(path)
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    for line in path.read_text().splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            if len(parts) != 4:
                raise ShapeError(f"non-triangular face: {line!r}")
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:4]]
            faces.append(idx)
    sidecar = path.with_name(path.stem + ".labels.json")
    albedo = semantic = scale = color2 = None
    if sidecar.exists():
        with open(sidecar) as f:
            labels = json.load(f)
        n = len(faces)
        albedo = np.full((n, 3), _DEFAULT_ALBEDO, dtype=np.float32)
        semantic = np.zeros(n, dtype=np.int32)
        scale = np.zeros(n, dtype=np.float32)
        color2 = np.full((n, 3), _DEFAULT_ALBEDO, dtype=np.float32)
        for key, entry in labels.items():
            i = int(key)
            albedo[i] = entry.get("albedo", _DEFAULT_ALBEDO)
            semantic[i] = entry.get("semantic", SEM_UNLABELED)
            checker = entry.get("checker")
            if checker:
                scale[i] = checker["scale"]
                color2[i] = checker["color2"]
    return TriangleMesh(
        np.array(verts, dtype=np.float64),
        np.array(faces, dtype=np.int64),
        albedo,
        semantic,
        scale,
        color2,
    )
