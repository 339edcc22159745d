"""Shared test oracles: structural integrity and brute-force geometry checks.

These deliberately avoid the library's own fast paths: signs are recomputed
from scratch (numpy floats with a wide suspicion margin, then exact rational
arithmetic for anything flagged) so they can catch errors in the filtered
kernels rather than inherit them.
"""

from __future__ import annotations

from collections import Counter
from fractions import Fraction

import numpy as np

from telecarve.predicates import conflict_sign, orient3d_sign


def exact_orient_fraction(a, b, c, d) -> int:
    """Orientation sign computed with rational arithmetic only."""
    u = [Fraction(float(b[i])) - Fraction(float(a[i])) for i in range(3)]
    v = [Fraction(float(c[i])) - Fraction(float(a[i])) for i in range(3)]
    w = [Fraction(float(d[i])) - Fraction(float(a[i])) for i in range(3)]
    det = (
        u[0] * (v[1] * w[2] - v[2] * w[1])
        - u[1] * (v[0] * w[2] - v[2] * w[0])
        + u[2] * (v[0] * w[1] - v[1] * w[0])
    )
    return (det > 0) - (det < 0)


def check_integrity(tri) -> None:
    """Structural invariants: orientation, adjacency, facet counts, v2t."""
    alive = tri.alive_tets()
    alive_set = set(int(t) for t in alive)
    facet_count: Counter = Counter()
    for t in alive:
        quad = [int(q) for q in tri.tets[t]]
        assert len(set(quad)) == 4, f"tet {t} repeats a vertex"
        pts = [tri.pts[q] for q in quad]
        assert exact_orient_fraction(*pts) > 0, f"tet {t} not positively oriented"
        for q in quad:
            assert tri.alive_v[q], f"tet {t} references dead vertex {q}"
        for i in range(4):
            nb = int(tri.neigh[t, i])
            if nb < 0:
                continue
            assert nb in alive_set, f"tet {t} neighbour {nb} is dead"
            back = np.nonzero(tri.neigh[nb] == t)[0]
            assert len(back) == 1, f"adjacency not symmetric between {t} and {nb}"
            mine = sorted(quad[j] for j in range(4) if j != i)
            theirs = sorted(
                int(tri.tets[nb, j]) for j in range(4) if j != int(back[0])
            )
            assert mine == theirs, f"tets {t}/{nb} disagree on the shared facet"
        for i in range(4):
            facet_count[tuple(sorted(quad[j] for j in range(4) if j != i))] += 1
    assert all(v <= 2 for v in facet_count.values()), "facet shared by > 2 tets"
    for v in np.nonzero(tri.alive_v[: tri.n_v])[0]:
        t = int(tri.v2t[v])
        assert t in alive_set and int(v) in tri.tets[t], f"stale v2t for vertex {v}"


def check_delaunay(tri) -> None:
    """Exhaustive perturbed empty-circumsphere oracle.

    Floats first (batched determinants with a generous suspicion margin),
    exact perturbed predicate for every flagged pair.  Respects the same
    vertex-id perturbation order the library uses, which is the only
    self-consistent notion of 'Delaunay' for degenerate inputs.
    """
    alive = np.asarray(tri.alive_tets())
    ids = np.nonzero(tri.alive_v[: tri.n_v])[0]
    pts = tri.pts
    quads = tri.tets[alive]  # (T, 4)
    probe = pts[ids]  # (n, 3)
    for lo in range(0, len(alive), 256):
        chunk = quads[lo : lo + 256]
        rel = pts[chunk][None] - probe[:, None, None, :]  # (n, c, 4, 3)
        lift = np.einsum("ncij,ncij->nci", rel, rel)  # (n, c, 4)
        x, y, z = rel[..., 0], rel[..., 1], rel[..., 2]

        def minor(i, j, k):
            return (
                x[..., i] * (y[..., j] * z[..., k] - z[..., j] * y[..., k])
                - y[..., i] * (x[..., j] * z[..., k] - z[..., j] * x[..., k])
                + z[..., i] * (x[..., j] * y[..., k] - y[..., j] * x[..., k])
            )

        # det of rows [rel | lift], cofactor expansion along the lift column
        dets = (
            -lift[..., 0] * minor(1, 2, 3)
            + lift[..., 1] * minor(0, 2, 3)
            - lift[..., 2] * minor(0, 1, 3)
            + lift[..., 3] * minor(0, 1, 2)
        )
        # Per-pair float error bound: terms are degree-5 products of rel
        # coordinates, so rounding error stays far below 1e-10 * s^5 and
        # the exact fallback only fires for genuinely suspicious pairs.
        s = np.abs(rel).max(axis=(2, 3))  # (n, c)
        margin = 1e-10 * s**5
        for k, c in zip(*np.nonzero(dets < margin)):
            quad = [int(q) for q in chunk[c]]
            v = int(ids[k])
            if v in quad:
                continue
            coords = tuple(float(x) for q in quad for x in pts[q]) + tuple(
                float(x) for x in pts[v]
            )
            pids = tuple(int(tri.pid[q]) for q in quad) + (int(tri.pid[v]),)
            s = conflict_sign(coords, pids)
            t = int(alive[lo + c])
            assert s > 0, f"vertex {v} conflicts with tet {t}"


def finite_tet_sets(tri) -> set:
    """Canonical finite-tet key set (frozensets of vertex ids, no corners)."""
    out = set()
    for t in tri.alive_tets():
        quad = frozenset(int(q) for q in tri.tets[t])
        if all(q >= 8 for q in quad):
            out.add(quad)
    return out


def all_tet_sets(tri) -> set:
    return {frozenset(int(q) for q in tri.tets[t]) for t in tri.alive_tets()}


def brute_force_containing(tri, p) -> list:
    """All alive tets whose closed hull contains p, by exact per-facet signs."""
    from telecarve._kernels import FOPP

    out = []
    for t in tri.alive_tets():
        quad = tri.tets[t]
        inside = True
        for i in range(4):
            f = FOPP[i]
            s = orient3d_sign(
                *tri.pts[quad[f[0]]], *tri.pts[quad[f[1]]], *tri.pts[quad[f[2]]], *p
            )
            if s > 0:
                inside = False
                break
        if inside:
            out.append(int(t))
    return out


# -- carving oracles ----------------------------------------------------------

# Doubles are dyadic rationals with denominators at most 2**1074, so
# multiplying by 2**1100 turns every coordinate into an exact integer on
# one shared scale; determinants of such integers are exact and mutually
# comparable.
_SEG_SCALE = 1 << 1100


def _seg_ints(vals) -> list[int]:
    out = []
    for v in vals:
        f = Fraction(v) * _SEG_SCALE
        assert f.denominator == 1
        out.append(f.numerator)
    return out


def exact_segment_touches_tet(quad, a, b) -> bool:
    """Does the open segment (a, b) meet the closed tet with corners `quad`?

    Independent reference: clips the segment's parameter interval against
    the four facet half-spaces with exact integer determinants, entirely
    separate from the library's filtered walk.
    """
    pts = [list(quad[0]), list(quad[1]), list(quad[2]), list(quad[3]), list(a), list(b)]
    cols = [_seg_ints([p[ax] for p in pts]) for ax in range(3)]
    ip = [(cols[0][i], cols[1][i], cols[2][i]) for i in range(6)]

    def orient(i, j, k, m) -> int:
        ux, uy, uz = (ip[j][0] - ip[i][0], ip[j][1] - ip[i][1], ip[j][2] - ip[i][2])
        vx, vy, vz = (ip[k][0] - ip[i][0], ip[k][1] - ip[i][1], ip[k][2] - ip[i][2])
        wx, wy, wz = (ip[m][0] - ip[i][0], ip[m][1] - ip[i][1], ip[m][2] - ip[i][2])
        return ux * (vy * wz - vz * wy) - uy * (vx * wz - vz * wx) + uz * (vx * wy - vy * wx)

    lo = Fraction(0)
    hi = Fraction(1)
    for f in range(4):
        i, j, k = (x for x in range(4) if x != f)
        s = orient(i, j, k, f)
        assert s != 0, "degenerate tet handed to the segment oracle"
        sg = 1 if s > 0 else -1
        ha = sg * orient(i, j, k, 4)
        hb = sg * orient(i, j, k, 5)
        if ha == hb:
            if ha < 0:
                return False
            continue
        tstar = Fraction(ha, ha - hb)
        if ha > hb:
            hi = min(hi, tstar)
        else:
            lo = max(lo, tstar)
    return lo <= hi and lo < 1 and hi > 0


def brute_force_labeling(tri, rays, k):
    """Recompute all per-tet evidence from scratch with the exact clip.

    `rays` is an iterable of (camera xyz, target vertex id).  Returns
    (counters dict, free set) over the currently alive tet slots.
    """
    alive = [int(t) for t in tri.alive_tets()]
    counters = {t: 0 for t in alive}
    for cam, tv in rays:
        b = tri.pts[int(tv)]
        if cam[0] == b[0] and cam[1] == b[1] and cam[2] == b[2]:
            continue
        for t in alive:
            if exact_segment_touches_tet(tri.pts[tri.tets[t]], cam, b):
                counters[t] += 1
    free = {t for t in alive if tri.is_corner_tet(t) or counters[t] >= k}
    return counters, free


def live_ray_list(labeling) -> list:
    """(camera, target vid) for every live registered ray, by ray id."""
    return [
        (labeling.ray_cam[r].copy(), int(labeling.ray_tgt[r]))
        for r in range(labeling.n_rays)
        if labeling.ray_alive[r]
    ]


def canon_tet(tri, t) -> tuple:
    return tuple(sorted(map(tuple, tri.pts[tri.tets[t]].tolist())))


def canon_free_set(labeling) -> set:
    return {canon_tet(labeling.tri, int(t)) for t in labeling.free_tets()}


def canon_alive_set(tri) -> set:
    return {canon_tet(tri, int(t)) for t in tri.alive_tets()}


def rebuild_batch(labeling):
    """From-scratch rebuild: insert all surviving points in id order into a
    fresh triangulation, then carve every live ray once.  The incremental
    engine must agree with this batch result."""
    from telecarve import CarvedLabeling, Triangulation

    src = labeling.tri
    tri2 = Triangulation(src.box_min, src.box_max)
    vid2 = {}
    for pid, vid in sorted(labeling.vid_of_point.items()):
        vid2[pid] = tri2.insert_point(src.pts[vid], source_id=pid)
    lab2 = CarvedLabeling(tri2, k=labeling.k)
    for r in range(labeling.n_rays):
        if not labeling.ray_alive[r]:
            continue
        pid = src.source_of(int(labeling.ray_tgt[r]))
        lab2.carve_ray(labeling.ray_cam[r].copy(), vid2[pid])
    return lab2


def check_separation(labeling) -> None:
    """Every tet in a live ray's footprint must be FREE (threshold k=1)."""
    assert labeling.k == 1
    for r in range(labeling.n_rays):
        if not labeling.ray_alive[r]:
            continue
        for t in labeling.ray_footprint(r):
            assert labeling.is_free(t), f"ray {r} traverses occupied tet {t}"


def check_counters_exact(labeling) -> None:
    """Counters of every alive tet must equal the from-scratch recompute."""
    counters, free = brute_force_labeling(
        labeling.tri, live_ray_list(labeling), labeling.k
    )
    for t, want in counters.items():
        got = labeling.counter_of(t)
        assert got == want, f"tet {t}: counter {got} != brute force {want}"
    assert {int(t) for t in labeling.free_tets()} == free


def tet_facet_keys(tri, t: int):
    """Canonical position-triple keys for the four facets of tet t."""
    ps = [tuple(tri.pts[v].tolist()) for v in tri.tets[t]]
    return [
        tuple(sorted((ps[a], ps[b], ps[c])))
        for (a, b, c) in ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))
    ]


def check_surface_matches_labels(lab, mesh) -> None:
    """The mesh must hold exactly the facets occupied tets do not share
    with another occupied tet, each emitted once."""
    from collections import Counter

    counts = Counter()
    for t in lab.tri.alive_tets():
        t = int(t)
        if not lab.is_free(t):
            counts.update(tet_facet_keys(lab.tri, t))
    assert all(c <= 2 for c in counts.values())
    expected = {key for key, c in counts.items() if c == 1}
    got = [
        tuple(sorted(map(tuple, mesh.vertices[tr].tolist())))
        for tr in mesh.triangles
    ]
    assert len(got) == len(set(got))
    assert set(got) == expected


def large_scene_mesh(rng):
    """22998-triangle height field: the perf-budget scene size."""
    from telecarve.carving import SurfaceMesh
    from telecarve.geometry import grid_mesh, triangle_normals

    va, ta = grid_mesh(107, 107, extent=(4.0, 4.0), origin=(-2.0, -2.0))
    vb, tb = grid_mesh(50, 1, extent=(2.0, 0.1), z=0.5, origin=(-1.0, -0.05))
    va = va + rng.normal(0.0, 0.01, va.shape)
    v = np.vstack([va, vb])
    t = np.vstack([ta, tb + len(va)]).astype(np.int32)
    assert len(t) == 22998
    return SurfaceMesh(1, v, t, triangle_normals(v, t))
