import numpy as np
import pytest

from panosim.bvh import build_bvh
from panosim.mesh import SEM_CLUTTER, SEM_WALL, TriangleMesh
from panosim.synth import SceneSpec, build_dataset, generate_scene, sample_panorama_poses

BOX_ROOM_SPEC = SceneSpec(
    seed=1, room_count=(1, 1), room_width=(4.0, 4.0), room_depth=(4.0, 4.0),
    wall_height=3.0, furniture_per_room=(0, 0),
)

# two rooms joined by a door, one tall cabinet: the standard small test scene
SCENE_SPEC = SceneSpec(seed=7, room_count=(2, 2), room_width=(4.0, 5.0),
                       room_depth=(3.5, 4.5), furniture_per_room=(1, 1))


@pytest.fixture(scope="session")
def box_room():
    return generate_scene(BOX_ROOM_SPEC)


@pytest.fixture(scope="session")
def box_room_bvh(box_room):
    return build_bvh(box_room)


@pytest.fixture(scope="session")
def scene():
    return generate_scene(SCENE_SPEC)


@pytest.fixture(scope="session")
def scene_bvh(scene):
    return build_bvh(scene)


@pytest.fixture(scope="session")
def scene_poses(scene_bvh):
    return sample_panorama_poses(scene_bvh, density=0.2, seed=3)


@pytest.fixture(scope="session")
def scene_dataset(scene_bvh, scene_poses):
    return build_dataset(scene_bvh, scene_poses, 128, 64)


def make_quad_mesh(rects, albedo=(0.7, 0.7, 0.7), semantic=SEM_WALL):
    """Mesh from (origin, eu, ev) rect triples; normal = eu x ev."""
    verts = []
    faces = []
    for origin, eu, ev in rects:
        o = np.asarray(origin, dtype=np.float64)
        u = np.asarray(eu, dtype=np.float64)
        v = np.asarray(ev, dtype=np.float64)
        base = len(verts)
        verts += [o, o + u, o + u + v, o + v]
        faces += [(base, base + 1, base + 2), (base, base + 2, base + 3)]
    n = len(faces)
    return TriangleMesh(
        np.array(verts), np.array(faces),
        np.full((n, 3), albedo, dtype=np.float32),
        np.full(n, semantic, dtype=np.int32),
    )


def occluder_scene():
    """Room with a free-floating thin panel in front of the east wall.

    A camera west of the panel sees the panel; cameras off to the side see
    the wall behind it. Built for see-through (occlusion) tests.
    """
    room = generate_scene(BOX_ROOM_SPEC)
    # panel: 1.2 x 1.2 m, facing -x, centered at (3.0, 0, 1.5)
    panel = [
        ((3.0, -0.6, 0.9), (0, 0, 1.2), (0, 1.2, 0)),  # -x face
        ((3.0, -0.6, 0.9), (0, 1.2, 0), (0, 0, 1.2)),  # +x face (back)
    ]
    extra = make_quad_mesh(panel, albedo=(0.2, 0.6, 0.3), semantic=SEM_CLUTTER)
    verts = np.vstack([room.vertices, extra.vertices])
    faces = np.vstack([room.faces, extra.faces + len(room.vertices)])
    return TriangleMesh(
        verts, faces,
        np.vstack([room.albedo, extra.albedo]),
        np.concatenate([room.semantic, extra.semantic]),
        np.concatenate([room.checker_scale, np.zeros(extra.n_faces, np.float32)]),
        np.vstack([room.checker_color2, extra.checker_color2]),
    )
