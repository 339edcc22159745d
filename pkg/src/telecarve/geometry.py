"""Small geometric utilities shared across the engine.

Conventions: right-handed world frame, meters; camera looks down +Z in its
own frame; rotation matrices map camera coordinates to world coordinates.
"""

from __future__ import annotations

import math

import numpy as np


def quat_to_rot(qx: float, qy: float, qz: float, qw: float) -> np.ndarray:
    """Unit quaternion (x, y, z, w) to a 3x3 rotation matrix."""
    n = math.sqrt(qx * qx + qy * qy + qz * qz + qw * qw)
    if n == 0.0:
        raise ValueError("zero quaternion")
    qx, qy, qz, qw = qx / n, qy / n, qz / n, qw / n
    xx, yy, zz = qx * qx, qy * qy, qz * qz
    xy, xz, yz = qx * qy, qx * qz, qy * qz
    wx, wy, wz = qw * qx, qw * qy, qw * qz
    return np.array(
        [
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        ]
    )


def rot_to_quat(r: np.ndarray) -> tuple[float, float, float, float]:
    """Rotation matrix to unit quaternion (x, y, z, w), w >= 0."""
    t = r[0, 0] + r[1, 1] + r[2, 2]
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        qw = 0.25 * s
        qx = (r[2, 1] - r[1, 2]) / s
        qy = (r[0, 2] - r[2, 0]) / s
        qz = (r[1, 0] - r[0, 1]) / s
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        qx = 0.25 * s
        qw = (r[2, 1] - r[1, 2]) / s
        qy = (r[0, 1] + r[1, 0]) / s
        qz = (r[0, 2] + r[2, 0]) / s
    elif r[1, 1] >= r[2, 2]:
        s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        qy = 0.25 * s
        qw = (r[0, 2] - r[2, 0]) / s
        qx = (r[0, 1] + r[1, 0]) / s
        qz = (r[1, 2] + r[2, 1]) / s
    else:
        s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        qz = 0.25 * s
        qw = (r[1, 0] - r[0, 1]) / s
        qx = (r[0, 2] + r[2, 0]) / s
        qy = (r[1, 2] + r[2, 1]) / s
    if qw < 0.0:
        qx, qy, qz, qw = -qx, -qy, -qz, -qw
    return float(qx), float(qy), float(qz), float(qw)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Rotation (world <- camera) for a camera at eye looking at target.

    Camera frame: +Z forward, +X right, +Y down (so `up` in world maps
    near -Y in camera coordinates, the usual pinhole image convention).
    """
    eye = np.asarray(eye, dtype=float)
    fwd = np.asarray(target, dtype=float) - eye
    n = np.linalg.norm(fwd)
    if n == 0.0:
        raise ValueError("eye and target coincide")
    z = fwd / n
    upv = np.asarray(up, dtype=float)
    x = np.cross(z, -upv)
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        # Looking straight along up: pick an arbitrary perpendicular right.
        x = np.cross(z, np.array([1.0, 0.0, 0.0]))
        nx = np.linalg.norm(x)
        if nx < 1e-12:
            x = np.cross(z, np.array([0.0, 1.0, 0.0]))
            nx = np.linalg.norm(x)
    x = x / nx
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    a = np.asarray(axis, dtype=float)
    n = np.linalg.norm(a)
    if n == 0.0:
        raise ValueError("zero axis")
    x, y, z = a / n
    c, s = np.cos(angle), np.sin(angle)
    c1 = 1.0 - c
    return np.array(
        [
            [c + x * x * c1, x * y * c1 - z * s, x * z * c1 + y * s],
            [y * x * c1 + z * s, c + y * y * c1, y * z * c1 - x * s],
            [z * x * c1 - y * s, z * y * c1 + x * s, c + z * z * c1],
        ]
    )


def triangle_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Unit normals per triangle (right-hand rule on vertex order)."""
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    n = np.cross(b - a, c - a)
    lens = np.linalg.norm(n, axis=1)
    lens[lens == 0.0] = 1.0
    return n / lens[:, None]


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def sample_on_triangles(
    vertices: np.ndarray, triangles: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Area-weighted uniform samples on a triangle soup."""
    areas = triangle_areas(vertices, triangles)
    total = areas.sum()
    if total <= 0.0:
        raise ValueError("mesh has zero area")
    idx = rng.choice(len(triangles), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    a = vertices[triangles[idx, 0]]
    b = vertices[triangles[idx, 1]]
    c = vertices[triangles[idx, 2]]
    return a + u[:, None] * (b - a) + v[:, None] * (c - a)


def ray_triangles_first_hit(origin, direction, vertices, triangles, eps=1e-12):
    """First intersection of a ray with a triangle soup.

    Vectorized Moller-Trumbore over all triangles. Returns (t, triangle
    index) for the nearest hit with t > eps, or (inf, -1) when the ray
    misses everything.
    """
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    a = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - a
    e2 = vertices[triangles[:, 2]] - a
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = o - a
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = np.einsum("j,ij->i", d, qvec) * inv
    t = np.einsum("ij,ij->i", e2, qvec) * inv
    hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > eps)
    if not hit.any():
        return np.inf, -1
    t = np.where(hit, t, np.inf)
    i = int(np.argmin(t))
    return float(t[i]), i


def closest_point_on_triangle(a, b, c, p):
    """Closest point to p on triangle (a, b, c) (Ericson's region walk)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = float(np.dot(ab, ap))
    d2 = float(np.dot(ac, ap))
    if d1 <= 0.0 and d2 <= 0.0:
        return a
    bp = p - b
    d3 = float(np.dot(ab, bp))
    d4 = float(np.dot(ac, bp))
    if d3 >= 0.0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        return a + (d1 / (d1 - d3)) * ab
    cp = p - c
    d5 = float(np.dot(ab, cp))
    d6 = float(np.dot(ac, cp))
    if d6 >= 0.0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        return a + (d2 / (d2 - d6)) * ac
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b)
    denom = 1.0 / (va + vb + vc)
    return a + ab * (vb * denom) + ac * (vc * denom)


def cube_mesh(center=(0.0, 0.0, 0.0), size=1.0):
    """Closed axis-aligned cube as (vertices, triangles), outward normals."""
    return box_mesh(center, (size, size, size))


def box_mesh(center, extents):
    """Closed axis-aligned box; extents are full side lengths."""
    cx, cy, cz = center
    hx, hy, hz = extents[0] / 2.0, extents[1] / 2.0, extents[2] / 2.0
    verts = np.array(
        [
            [cx - hx, cy - hy, cz - hz],
            [cx + hx, cy - hy, cz - hz],
            [cx - hx, cy + hy, cz - hz],
            [cx + hx, cy + hy, cz - hz],
            [cx - hx, cy - hy, cz + hz],
            [cx + hx, cy - hy, cz + hz],
            [cx - hx, cy + hy, cz + hz],
            [cx + hx, cy + hy, cz + hz],
        ]
    )
    tris = np.array(
        [
            [0, 2, 1], [1, 2, 3],   # z = min, normal -z
            [4, 5, 6], [5, 7, 6],   # z = max, normal +z
            [0, 1, 4], [1, 5, 4],   # y = min, normal -y
            [2, 6, 3], [3, 6, 7],   # y = max, normal +y
            [0, 4, 2], [2, 4, 6],   # x = min, normal -x
            [1, 3, 5], [3, 7, 5],   # x = max, normal +x
        ],
        dtype=np.int32,
    )
    return verts, tris


def grid_mesh(nx: int, ny: int, extent=(1.0, 1.0), z: float = 0.0, origin=(0.0, 0.0)):
    """Planar grid of nx*ny quads split into 2*nx*ny triangles, normals +z."""
    ox, oy = origin
    xs = np.linspace(ox, ox + extent[0], nx + 1)
    ys = np.linspace(oy, oy + extent[1], ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)])
    tris = []
    for i in range(nx):
        for j in range(ny):
            v00 = i * (ny + 1) + j
            v01 = v00 + 1
            v10 = v00 + (ny + 1)
            v11 = v10 + 1
            tris.append([v00, v10, v11])
            tris.append([v00, v11, v01])
    return verts, np.asarray(tris, dtype=np.int32)


def mesh_diameter(vertices: np.ndarray) -> float:
    """Diagonal of the axis-aligned bounding box."""
    if len(vertices) == 0:
        return 0.0
    return float(np.linalg.norm(vertices.max(axis=0) - vertices.min(axis=0)))
