"""Shared fixtures: the noise-free cube reconstruction used by the
quality tests and the acceptance gate."""

import numpy as np
import pytest

from telecarve.carving import CarvedLabeling, SurfaceMesh
from telecarve.delaunay import init_bounding
from telecarve.frontend import SceneSpec, orbit_poses, synth_scene
from telecarve.geometry import box_mesh, triangle_normals
from telecarve.harness import apply_frontend_event

CUBE_SEED = 11
CUBE_POINTS_PER_KEYFRAME = 300
CUBE_KEYFRAMES = 8


@pytest.fixture(scope="session")
def cube_reconstruction():
    """(carved mesh, ground-truth mesh, labeling) for a unit cube orbit.

    Noise-free capture: eight poses at two heights, 300 points per
    keyframe, fixed seed.  Session scoped because the carve is the
    expensive step and every consumer treats the meshes as read-only.
    """
    v, t = box_mesh((0.0, 0.0, 0.5), (1.0, 1.0, 1.0))
    scene = SceneSpec.from_mesh(v, t)
    truth = SurfaceMesh(0, v, t.astype(np.int32), triangle_normals(v, t))
    poses = orbit_poses((0.0, 0.0, 0.5), 2.5, CUBE_KEYFRAMES, heights=(1.2, 2.0))
    events = synth_scene(
        scene, poses, 0.0, CUBE_SEED,
        points_per_keyframe=CUBE_POINTS_PER_KEYFRAME,
    )
    eyes = np.array([p.translation for p in poses])
    spread = np.vstack([v, eyes])
    mid = 0.5 * (spread.min(axis=0) + spread.max(axis=0))
    half = 5.0 * float(np.linalg.norm(spread.max(axis=0) - spread.min(axis=0)))
    lab = CarvedLabeling(init_bounding(mid - half, mid + half))
    for ev in events:
        apply_frontend_event(lab, ev)
    return lab.extract_surface(), truth, lab
