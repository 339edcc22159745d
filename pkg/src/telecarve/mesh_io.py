"""OBJ-subset serialization and view-dependent texturing helpers.

The on-disk format is a strict OBJ subset: `v x y z` (fixed 6 decimals, so
exports are byte-stable), optional `vt u v`, and `f` lines with 1-based
indices, either `f a b c` or `f a/a b/b c/c` when texture coordinates are
present. ASCII, LF endings, '#' comments. No materials, no normals.

Texture selection scores candidate keyframes by how closely their viewing
direction and position match a query pose; submesh extraction keeps the
triangles fully inside a keyframe's frustum and facing its camera, without
occlusion tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .carving import SurfaceMesh
from .frontend import Keyframe, Pose


class NotVisible:
    """Sentinel for projections that fall behind the camera or off-image."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __bool__(self):
        return False

    def __repr__(self):
        return "NOT_VISIBLE"


NOT_VISIBLE = NotVisible()


def project_vertex(kf: Keyframe, p):
    """Project a world point into a keyframe's image.

    Returns (u, v, depth) with u, v normalized to [0,1) and depth in
    meters, or NOT_VISIBLE when the point is at or behind the camera plane
    or lands outside the image.
    """
    intr = kf.intrinsics
    q = kf.pose.world_to_camera(p)
    z = float(q[2])
    if z <= 0.0:
        return NOT_VISIBLE
    px = intr.fx * float(q[0]) / z + intr.cx
    py = intr.fy * float(q[1]) / z + intr.cy
    if not (0.0 <= px < intr.width and 0.0 <= py < intr.height):
        return NOT_VISIBLE
    return px / intr.width, py / intr.height, z


def obj_bytes(mesh) -> bytes:
    """Serialize a mesh (SurfaceMesh or TexturedSubmesh) as OBJ subset bytes.

    Triangle order is preserved; vertices keep their array order with
    1-based indices.
    """
    v = np.asarray(mesh.vertices, dtype=np.float64)
    t = np.asarray(mesh.triangles, dtype=np.int64)
    uv = getattr(mesh, "uv", None)
    chunks = ["# telecarve surface mesh\n"]
    if len(v):
        chunks.append(("v %.6f %.6f %.6f\n" * len(v)) % tuple(v.ravel()))
    if uv is not None and len(uv):
        uv = np.asarray(uv, dtype=np.float64)
        chunks.append(("vt %.6f %.6f\n" * len(uv)) % tuple(uv.ravel()))
    if len(t):
        f1 = t + 1
        if uv is not None:
            chunks.append(
                ("f %d/%d %d/%d %d/%d\n" * len(f1))
                % tuple(np.repeat(f1, 2, axis=1).ravel())
            )
        else:
            chunks.append(("f %d %d %d\n" * len(f1)) % tuple(f1.ravel()))
    return "".join(chunks).encode("ascii")


def export_obj(mesh, path) -> int:
    """Write a mesh as an OBJ subset file and return the byte count."""
    data = obj_bytes(mesh)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


@dataclass(frozen=True, eq=False)
class ParsedObj:
    vertices: np.ndarray
    triangles: np.ndarray
    uv: np.ndarray | None
    uv_indices: np.ndarray | None


def parse_obj(path) -> ParsedObj:
    """Read the OBJ subset written by export_obj (v/vt/f only)."""
    verts: list[list[float]] = []
    uvs: list[list[float]] = []
    tris: list[list[int]] = []
    uv_idx: list[list[int]] = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "v" and len(parts) == 4:
                    verts.append([float(x) for x in parts[1:]])
                elif parts[0] == "vt" and len(parts) == 3:
                    uvs.append([float(x) for x in parts[1:]])
                elif parts[0] == "f" and len(parts) == 4:
                    vi, ti = [], []
                    for tok in parts[1:]:
                        sub = tok.split("/")
                        if len(sub) == 1:
                            vi.append(int(sub[0]))
                        elif len(sub) == 2:
                            vi.append(int(sub[0]))
                            ti.append(int(sub[1]))
                        else:
                            raise ValueError(f"unsupported face token {tok!r}")
                    if not all(1 <= i <= len(verts) for i in vi):
                        raise ValueError("face index out of range")
                    if ti and not all(1 <= i <= len(uvs) for i in ti):
                        raise ValueError("texture index out of range")
                    if ti and len(ti) != 3:
                        raise ValueError("mixed face token forms")
                    tris.append([i - 1 for i in vi])
                    if ti:
                        uv_idx.append([i - 1 for i in ti])
                else:
                    raise ValueError(f"unsupported record {parts[0]!r}")
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
    if uv_idx and len(uv_idx) != len(tris):
        raise ValueError("some faces carry texture indices and some do not")
    return ParsedObj(
        np.asarray(verts, dtype=np.float64).reshape(-1, 3),
        np.asarray(tris, dtype=np.int32).reshape(-1, 3),
        np.asarray(uvs, dtype=np.float64).reshape(-1, 2) if uvs else None,
        np.asarray(uv_idx, dtype=np.int32).reshape(-1, 3) if uv_idx else None,
    )


def select_texture_keyframe(
    query_pose: Pose,
    keyframes: Iterable[Keyframe],
    *,
    scene_diameter: float | None = None,
    direction_weight: float = 0.5,
) -> int:
    """Pick the keyframe whose view best matches the query pose.

    Score = cos(angle between viewing directions) minus
    direction_weight * (camera distance / scene_diameter); exact ties go to
    the most recent (highest id) keyframe. When scene_diameter is omitted it
    is taken from the bounding box of all camera centers involved.
    """
    kfs = list(keyframes)
    if not kfs:
        raise ValueError("no keyframes to select from")
    centers = np.array([kf.pose.translation for kf in kfs]
                       + [query_pose.translation])
    if scene_diameter is None:
        scene_diameter = float(
            np.linalg.norm(centers.max(axis=0) - centers.min(axis=0))
        )
    if scene_diameter <= 0.0:
        scene_diameter = 1.0
    fq = query_pose.forward
    best_id, best_score = None, -math.inf
    for kf in kfs:
        cosang = float(np.dot(fq, kf.pose.forward))
        dist = float(np.linalg.norm(query_pose.translation - kf.pose.translation))
        score = cosang - direction_weight * dist / scene_diameter
        if score > best_score or (score == best_score and kf.id > best_id):
            best_id, best_score = kf.id, score
    return best_id


@dataclass(frozen=True, eq=False)
class TexturedSubmesh:
    """Triangles of one mesh snapshot fully visible in one keyframe, with
    per-vertex texture coordinates into that keyframe's image."""

    keyframe_id: int
    vertices: np.ndarray
    triangles: np.ndarray
    uv: np.ndarray
    image_ref: str

    def __post_init__(self):
        for name in ("vertices", "triangles", "uv"):
            a = getattr(self, name)
            a.setflags(write=False)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def as_mesh(self, version: int = 0) -> SurfaceMesh:
        from .geometry import triangle_normals

        return SurfaceMesh(
            version=version,
            vertices=self.vertices.copy(),
            triangles=self.triangles.copy(),
            normals=triangle_normals(self.vertices, self.triangles),
            uv=self.uv.copy(),
            image_ref=self.image_ref,
        )


def build_textured_submesh(mesh: SurfaceMesh, kf: Keyframe) -> TexturedSubmesh:
    """Extract the part of a mesh texturable from one keyframe.

    A triangle is kept when all three vertices project inside the image
    with positive depth and the face points toward the camera. Occlusion is
    deliberately ignored.
    """
    if kf.image_ref is None:
        raise ValueError(f"keyframe {kf.id} has no image to texture from")
    n = mesh.n_vertices
    uv = np.zeros((n, 2))
    visible = np.zeros(n, dtype=bool)
    for i in range(n):
        hit = project_vertex(kf, mesh.vertices[i])
        if hit is not NOT_VISIBLE:
            visible[i] = True
            uv[i] = hit[0], hit[1]

    cam = kf.pose.translation
    keep = []
    for j in range(mesh.n_triangles):
        tri = mesh.triangles[j]
        if not visible[tri].all():
            continue
        centroid = mesh.vertices[tri].mean(axis=0)
        if np.dot(mesh.normals[j], cam - centroid) <= 0.0:
            continue
        keep.append(j)

    used = sorted({int(v) for j in keep for v in mesh.triangles[j]})
    remap = {v: i for i, v in enumerate(used)}
    sub_tris = np.array(
        [[remap[int(v)] for v in mesh.triangles[j]] for j in keep], dtype=np.int32
    ).reshape(-1, 3)
    return TexturedSubmesh(
        keyframe_id=kf.id,
        vertices=mesh.vertices[used].reshape(-1, 3).copy(),
        triangles=sub_tris,
        uv=uv[used].reshape(-1, 2).copy(),
        image_ref=kf.image_ref,
    )
