"""Compiled kernels for the triangulation, carving, and proximity hot paths.

Everything here operates on flat struct-of-arrays state owned by the
wrapper classes in :mod:`telecarve.delaunay` and :mod:`telecarve.carving`.
Geometric decisions are exact: each kernel runs a floating-point filter
first and escalates to the exact integer predicates (through an objmode
call into :mod:`telecarve.predicates`) only when the filter cannot certify
the answer.

Set ``TELECARVE_NO_JIT=1`` to run every kernel as plain Python.  The
objmode blocks are written so the interpreted path takes the same code
shape; this is the debugging mode for kernel logic.

Conventions shared with the wrappers:

* ``tets[t]`` holds four vertex slots in positive orientation
  (``orient3d(a, b, c, d) > 0``).
* ``neigh[t, i]`` is the tet across the facet opposite vertex ``i`` of
  ``t``, or ``-1`` on the outer boundary of the bounding box.
* ``FOPP[i]`` lists the local slots of facet ``i`` ordered so the facet
  normal points away from vertex ``i`` (outward for a positive tet);
  interior points therefore see a negative orient3d against any facet.
* Tet slots are allocated monotonically and never reused, so a slot id
  stays meaningful (as "that dead tet") for the life of the structure.
"""

from __future__ import annotations

import os

import numpy as np

from .predicates import (
    INS_BOUND_A,
    O3D_BOUND_A,
    centroid_orient_exact_cb,
    conflict_exact_cb,
    orient_exact_cb,
    segment_tet_touch_exact_cb,
)

NO_JIT = os.environ.get("TELECARVE_NO_JIT", "") not in ("", "0")

if not NO_JIT:
    try:
        from numba import njit, objmode
    except ImportError:  # pragma: no cover - numba is a hard dependency
        NO_JIT = True

if NO_JIT:  # pragma: no cover - exercised only in TELECARVE_NO_JIT runs
    import contextlib

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap

    @contextlib.contextmanager
    def objmode(**kwargs):
        yield


# Facet i is opposite vertex i; orderings are outward for a positive tet.
FOPP = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]], dtype=np.int64)

# Status codes shared by kernels and wrappers.
OK = 0
GROW_CAVITY = 1
GROW_BOUNDARY = 2
GROW_TETS = 3
WALK_OUTSIDE = 4
FLAT_TET = 5
GROW_EDGE_TABLE = 6
GROW_SCRATCH = 7
GROW_RT = 8
GROW_CHAIN = 9
WALK_STUCK = 10


@njit(cache=True)
def _o3d_det(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz):
    """Float orient3d determinant plus its coefficient permanent.

    Same row convention as predicates.orient3d_float (rows b-a, c-a,
    d-a), so the filtered value and the exact escalation agree in sign.
    """
    bax = bx - ax
    bay = by - ay
    baz = bz - az
    cax = cx - ax
    cay = cy - ay
    caz = cz - az
    dax = dx - ax
    day = dy - ay
    daz = dz - az
    m1 = cay * daz - caz * day
    m2 = cax * daz - caz * dax
    m3 = cax * day - cay * dax
    det = bax * m1 - bay * m2 + baz * m3
    perm = (
        abs(bax) * (abs(cay * daz) + abs(caz * day))
        + abs(bay) * (abs(cax * daz) + abs(caz * dax))
        + abs(baz) * (abs(cax * day) + abs(cay * dax))
    )
    return det, perm


@njit(cache=True)
def _o3d(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz):
    """Exact sign of orient3d, filter first."""
    det, perm = _o3d_det(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz)
    bound = O3D_BOUND_A * perm
    if det > bound:
        return 1
    if det < -bound:
        return -1
    if perm == 0.0:
        return 0
    s = 0
    with objmode(s="int64"):
        s = orient_exact_cb(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz)
    return s


@njit(cache=True)
def _conflict(
    ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz, ex, ey, ez,
    ia, ib, ic, id_, ie,
):
    """1 if e conflicts with tet (a,b,c,d) under the perturbed predicate."""
    aex = ax - ex
    aey = ay - ey
    aez = az - ez
    bex = bx - ex
    bey = by - ey
    bez = bz - ez
    cex = cx - ex
    cey = cy - ey
    cez = cz - ez
    dex = dx - ex
    dey = dy - ey
    dez = dz - ez

    ab = aex * bey - bex * aey
    bc = bex * cey - cex * bey
    cd = cex * dey - dex * cey
    da = dex * aey - aex * dey
    ac = aex * cey - cex * aey
    bd = bex * dey - dex * bey

    abc = aez * bc - bez * ac + cez * ab
    bcd = bez * cd - cez * bd + dez * bc
    cda = cez * da + dez * ac + aez * cd
    dab = dez * ab + aez * bd + bez * da

    alift = aex * aex + aey * aey + aez * aez
    blift = bex * bex + bey * bey + bez * bez
    clift = cex * cex + cey * cey + cez * cez
    dlift = dex * dex + dey * dey + dez * dez

    det = (dlift * abc - clift * dab) + (blift * cda - alift * bcd)

    aezp = abs(aez)
    bezp = abs(bez)
    cezp = abs(cez)
    dezp = abs(dez)
    axby = abs(aex * bey)
    bxay = abs(bex * aey)
    bxcy = abs(bex * cey)
    cxby = abs(cex * bey)
    cxdy = abs(cex * dey)
    dxcy = abs(dex * cey)
    dxay = abs(dex * aey)
    axdy = abs(aex * dey)
    axcy = abs(aex * cey)
    cxay = abs(cex * aey)
    bxdy = abs(bex * dey)
    dxby = abs(dex * bey)
    # Permanent of the uncancelled products, as the stage-A bound requires.
    perm = (
        ((cxdy + dxcy) * bezp + (dxby + bxdy) * cezp + (bxcy + cxby) * dezp) * alift
        + ((dxay + axdy) * cezp + (axcy + cxay) * dezp + (cxdy + dxcy) * aezp) * blift
        + ((axby + bxay) * dezp + (bxdy + dxby) * aezp + (dxay + axdy) * bezp) * clift
        + ((bxcy + cxby) * aezp + (cxay + axcy) * bezp + (axby + bxay) * cezp) * dlift
    )
    bound = INS_BOUND_A * perm
    if det > bound:
        return 1
    if det < -bound:
        return -1
    s = 0
    with objmode(s="int64"):
        s = conflict_exact_cb(
            ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz, ex, ey, ez,
            ia, ib, ic, id_, ie,
        )
    return s


@njit(cache=True)
def _facet_sign(pts, tets, t, i, px, py, pz):
    """Sign of orient3d(facet i of t, p): negative on the inside."""
    q0 = tets[t, FOPP[i, 0]]
    q1 = tets[t, FOPP[i, 1]]
    q2 = tets[t, FOPP[i, 2]]
    return _o3d(
        pts[q0, 0], pts[q0, 1], pts[q0, 2],
        pts[q1, 0], pts[q1, 1], pts[q1, 2],
        pts[q2, 0], pts[q2, 1], pts[q2, 2],
        px, py, pz,
    )


@njit(cache=True)
def walk_locate(pts, tets, neigh, start, px, py, pz):
    """Visibility walk to a tet whose closed hull contains p.

    Returns the tet id, -1 if the walk exits the bounding box, or -2 if
    the step guard trips (which would indicate corrupted adjacency).
    """
    t = start
    steps = 0
    while steps < 10_000_000:
        steps += 1
        crossed = False
        for i in range(4):
            if _facet_sign(pts, tets, t, i, px, py, pz) > 0:
                nb = neigh[t, i]
                if nb < 0:
                    return -1
                t = nb
                crossed = True
                break
        if not crossed:
            return t
    return -2


@njit(cache=True)
def collect_containing(pts, tets, neigh, t0, px, py, pz, out, stamp, sval):
    """All tets whose closed hull contains p, starting from one of them.

    Containment can be shared across a facet, edge, or vertex; the set is
    connected through zero-sign facets, so a local flood suffices.
    Returns the count, or -1 if `out` is too small.
    """
    n = 0
    head = 0
    out[n] = t0
    n += 1
    stamp[t0] = sval
    while head < n:
        t = out[head]
        head += 1
        for i in range(4):
            if _facet_sign(pts, tets, t, i, px, py, pz) != 0:
                continue
            nb = neigh[t, i]
            if nb < 0 or stamp[nb] == sval:
                continue
            stamp[nb] = sval
            inside = True
            for j in range(4):
                if _facet_sign(pts, tets, nb, j, px, py, pz) > 0:
                    inside = False
                    break
            if inside:
                if n >= out.shape[0]:
                    return -1
                out[n] = nb
                n += 1
    return n


@njit(cache=True)
def bw_insert(
    pts, pid, tets, neigh, alive, v2t,
    n_t, vslot, hint,
    stamp, sval,
    cav, bnd_tet, bnd_facet,
    edge_keys, edge_vals,
):
    """Insert vertex `vslot` by cavity carving.

    Phase one walks to the containing tet and floods the conflict region
    read-only; phase two retriangulates.  Any GROW_* status is returned
    before mutation, so the caller can enlarge the named buffer and call
    again with a fresh stamp value.

    Returns (status, n_cavity, n_created); new tets occupy slots
    n_t .. n_t + n_created - 1.
    """
    px = pts[vslot, 0]
    py = pts[vslot, 1]
    pz = pts[vslot, 2]

    t0 = walk_locate(pts, tets, neigh, hint, px, py, pz)
    if t0 == -1:
        return WALK_OUTSIDE, 0, 0
    if t0 == -2:
        return WALK_STUCK, 0, 0

    # Conflict flood.  Only cavity members are stamped; a tet outside the
    # cavity may be re-tested once per adjacent boundary facet, which is
    # bounded and cheaper than a second mark array.
    n_cav = 0
    n_bnd = 0
    head = 0
    cav[n_cav] = t0
    n_cav += 1
    stamp[t0] = sval
    while head < n_cav:
        t = cav[head]
        head += 1
        for i in range(4):
            nb = neigh[t, i]
            if nb < 0:
                # Box-wall facet of a conflict tet: cavity boundary with
                # no outside neighbour.
                if n_bnd >= bnd_tet.shape[0]:
                    return GROW_BOUNDARY, 0, 0
                bnd_tet[n_bnd] = t
                bnd_facet[n_bnd] = i
                n_bnd += 1
                continue
            if stamp[nb] == sval:
                continue
            va = tets[nb, 0]
            vb = tets[nb, 1]
            vc = tets[nb, 2]
            vd = tets[nb, 3]
            s = _conflict(
                pts[va, 0], pts[va, 1], pts[va, 2],
                pts[vb, 0], pts[vb, 1], pts[vb, 2],
                pts[vc, 0], pts[vc, 1], pts[vc, 2],
                pts[vd, 0], pts[vd, 1], pts[vd, 2],
                px, py, pz,
                pid[va], pid[vb], pid[vc], pid[vd], pid[vslot],
            )
            if s < 0:
                if n_cav >= cav.shape[0]:
                    return GROW_CAVITY, 0, 0
                cav[n_cav] = nb
                n_cav += 1
                stamp[nb] = sval
            else:
                if n_bnd >= bnd_tet.shape[0]:
                    return GROW_BOUNDARY, 0, 0
                bnd_tet[n_bnd] = t
                bnd_facet[n_bnd] = i
                n_bnd += 1

    if n_t + n_bnd > tets.shape[0]:
        return GROW_TETS, n_cav, n_bnd

    ht_size = 64
    while ht_size < 8 * n_bnd:
        ht_size <<= 1
    if ht_size > edge_keys.shape[0]:
        return GROW_EDGE_TABLE, n_cav, n_bnd
    for h in range(ht_size):
        edge_keys[h] = -1

    # Build one new tet per boundary facet.  The facet ordering FOPP is
    # outward for the cavity tet, and the new vertex lies on its inner
    # side, so swapping two facet vertices yields positive orientation.
    for k in range(n_bnd):
        t = bnd_tet[k]
        i = bnd_facet[k]
        q0 = tets[t, FOPP[i, 0]]
        q1 = tets[t, FOPP[i, 1]]
        q2 = tets[t, FOPP[i, 2]]
        s = _o3d(
            pts[q0, 0], pts[q0, 1], pts[q0, 2],
            pts[q2, 0], pts[q2, 1], pts[q2, 2],
            pts[q1, 0], pts[q1, 1], pts[q1, 2],
            px, py, pz,
        )
        if s <= 0:
            return FLAT_TET, n_cav, n_bnd
        slot = n_t + k
        tets[slot, 0] = q0
        tets[slot, 1] = q2
        tets[slot, 2] = q1
        tets[slot, 3] = vslot
        alive[slot] = 1

        nb = neigh[t, i]
        neigh[slot, 3] = nb
        if nb >= 0:
            for j in range(4):
                if neigh[nb, j] == t:
                    neigh[nb, j] = slot
                    break

        v2t[q0] = slot
        v2t[q1] = slot
        v2t[q2] = slot
        v2t[vslot] = slot

        # Facets 0..2 of the new tet each contain the new vertex and one
        # edge of the boundary facet; matching edges pair up new tets.
        for fi in range(3):
            if fi == 0:
                ea = q2
                eb = q1
            elif fi == 1:
                ea = q0
                eb = q1
            else:
                ea = q0
                eb = q2
            if ea > eb:
                tmp = ea
                ea = eb
                eb = tmp
            key = (np.int64(ea) << 32) | np.int64(eb)
            h = (key ^ (key >> 32) ^ (key >> 17)) & (ht_size - 1)
            while True:
                if edge_keys[h] == -1:
                    edge_keys[h] = key
                    edge_vals[h] = slot * 4 + fi
                    break
                if edge_keys[h] == key:
                    other = edge_vals[h]
                    oslot = other >> 2
                    ofi = other & 3
                    neigh[slot, fi] = oslot
                    neigh[oslot, ofi] = slot
                    break
                h = (h + 1) & (ht_size - 1)

    for k in range(n_cav):
        alive[cav[k]] = 0

    return OK, n_cav, n_bnd


@njit(cache=True)
def collect_star(tets, neigh, v, t0, out, stamp, sval):
    """All alive tets incident to vertex v, flooding from one of them.

    Every visited tet is stamped with `sval`.  Returns the count or -1
    if `out` is too small.
    """
    n = 0
    head = 0
    out[n] = t0
    n += 1
    stamp[t0] = sval
    while head < n:
        t = out[head]
        head += 1
        vi = -1
        for i in range(4):
            if tets[t, i] == v:
                vi = i
                break
        for i in range(4):
            if i == vi:
                continue
            nb = neigh[t, i]
            if nb < 0 or stamp[nb] == sval:
                continue
            stamp[nb] = sval
            if n >= out.shape[0]:
                return -1
            out[n] = nb
            n += 1
    return n


@njit(cache=True)
def _cone_touched(pts, tets, t, v, cx, cy, cz):
    """Does the open segment (camera, v) enter the closed tet incident at v?

    By convexity that holds exactly when the direction camera - v lies in
    the closed vertex cone, i.e. all barycentric direction coordinates
    are non-negative.  Signs come from orient3d with v's slot permuted to
    the front, which flips parity for odd slots.
    """
    vi = -1
    for i in range(4):
        if tets[t, i] == v:
            vi = i
            break
    u = np.empty(3, dtype=np.int64)
    k = 0
    for i in range(4):
        if i != vi:
            u[k] = tets[t, i]
            k += 1
    flip = 1 if (vi & 1) == 0 else -1
    vx = pts[v, 0]
    vy = pts[v, 1]
    vz = pts[v, 2]
    u1 = u[0]
    u2 = u[1]
    u3 = u[2]
    s1 = _o3d(
        vx, vy, vz, cx, cy, cz,
        pts[u2, 0], pts[u2, 1], pts[u2, 2],
        pts[u3, 0], pts[u3, 1], pts[u3, 2],
    ) * flip
    if s1 < 0:
        return 0
    s2 = _o3d(
        vx, vy, vz,
        pts[u1, 0], pts[u1, 1], pts[u1, 2],
        cx, cy, cz,
        pts[u3, 0], pts[u3, 1], pts[u3, 2],
    ) * flip
    if s2 < 0:
        return 0
    s3 = _o3d(
        vx, vy, vz,
        pts[u1, 0], pts[u1, 1], pts[u1, 2],
        pts[u2, 0], pts[u2, 1], pts[u2, 2],
        cx, cy, cz,
    ) * flip
    if s3 < 0:
        return 0
    return 1


@njit(cache=True)
def _tet_seg_touch(pts, tets, t, ax, ay, az, bx, by, bz):
    """Does the closed tet meet the open segment (a, b)?  Exact answer.

    Clips the segment parameter against the four facet halfspaces using
    certified float intervals; any facet whose endpoint signs cannot be
    certified, or an inconclusive final interval, escalates to the exact
    rational clip.
    """
    lo_l = 0.0
    lo_h = 0.0
    hi_l = 1.0
    hi_h = 1.0
    need_exact = False
    for i in range(4):
        q0 = tets[t, FOPP[i, 0]]
        q1 = tets[t, FOPP[i, 1]]
        q2 = tets[t, FOPP[i, 2]]
        dA, pA = _o3d_det(
            pts[q0, 0], pts[q0, 1], pts[q0, 2],
            pts[q1, 0], pts[q1, 1], pts[q1, 2],
            pts[q2, 0], pts[q2, 1], pts[q2, 2],
            ax, ay, az,
        )
        dB, pB = _o3d_det(
            pts[q0, 0], pts[q0, 1], pts[q0, 2],
            pts[q1, 0], pts[q1, 1], pts[q1, 2],
            pts[q2, 0], pts[q2, 1], pts[q2, 2],
            bx, by, bz,
        )
        eA = O3D_BOUND_A * pA
        eB = O3D_BOUND_A * pB
        # Inside value is -det; build certified bounds for both endpoints.
        gAl = -dA - eA
        gAh = -dA + eA
        gBl = -dB - eB
        gBh = -dB + eB
        if gAl >= 0.0 and gBl >= 0.0:
            continue
        if gAh < 0.0 and gBh < 0.0:
            return 0
        if gAl >= 0.0 and gBh < 0.0:
            # Exit crossing: t* = gA / (gA - gB), increasing in both.
            tn = gAl / (gAl - gBl)
            tx = gAh / (gAh - gBh)
            tn = tn * (1.0 - 4e-12)
            tx = tx * (1.0 + 4e-12) + 1e-15
            if tn < hi_l:
                hi_l = tn
            if tx < hi_h:
                hi_h = tx
        elif gAh < 0.0 and gBl >= 0.0:
            # Entry crossing: t* = -gA / (gB - gA), decreasing in both.
            tn = (-gAh) / (gBh - gAh)
            tx = (-gAl) / (gBl - gAl)
            tn = tn * (1.0 - 4e-12)
            tx = tx * (1.0 + 4e-12) + 1e-15
            if tn > lo_l:
                lo_l = tn
            if tx > lo_h:
                lo_h = tx
        else:
            need_exact = True
            break
    if not need_exact:
        if lo_h <= hi_l and lo_h < 1.0 and hi_l > 0.0:
            return 1
        if lo_l > hi_h or lo_l >= 1.0 or hi_h <= 0.0:
            return 0
    p0 = tets[t, 0]
    p1 = tets[t, 1]
    p2 = tets[t, 2]
    p3 = tets[t, 3]
    r = 0
    with objmode(r="int64"):
        r = segment_tet_touch_exact_cb(
            pts[p0, 0], pts[p0, 1], pts[p0, 2],
            pts[p1, 0], pts[p1, 1], pts[p1, 2],
            pts[p2, 0], pts[p2, 1], pts[p2, 2],
            pts[p3, 0], pts[p3, 1], pts[p3, 2],
            ax, ay, az, bx, by, bz,
        )
    return r


@njit(cache=True)
def _carve_walk_one(
    pts, tets, neigh, v2t,
    cx, cy, cz, tv,
    stamp, stamp2, sval,
    queue, touched,
):
    """Collect every alive tet touched by the open segment (camera, target).

    The target is a triangulation vertex, so its incident tets are
    classified by the exact vertex-cone test; the camera's containing
    tets are found by a walk from the target star; everything in between
    comes from a flood across facets, testing each candidate with the
    certified segment clip.  Touched tets land in `touched`.

    Returns (count, status): GROW_SCRATCH means retry with bigger
    queue/touched buffers, WALK-* are integrity failures.
    """
    cap_q = queue.shape[0]
    cap_t = touched.shape[0]

    # Zero-length segment: the open segment is empty, nothing is touched.
    if cx == pts[tv, 0] and cy == pts[tv, 1] and cz == pts[tv, 2]:
        return 0, OK

    # Target star: classify incident tets by the vertex cone.
    ns = collect_star(tets, neigh, tv, v2t[tv], queue, stamp, sval)
    if ns < 0:
        return 0, GROW_SCRATCH
    nt = 0
    for k in range(ns):
        t = queue[k]
        if _cone_touched(pts, tets, t, tv, cx, cy, cz) == 1:
            if nt >= cap_t:
                return 0, GROW_SCRATCH
            touched[nt] = t
            nt += 1

    # Camera containing set; walking from the star is about as long as
    # the segment itself.
    tc = walk_locate(pts, tets, neigh, v2t[tv], cx, cy, cz)
    if tc == -1:
        return 0, WALK_OUTSIDE
    if tc == -2:
        return 0, WALK_STUCK
    ncc = collect_containing(pts, tets, neigh, tc, cx, cy, cz, queue[ns:], stamp2, sval)
    if ncc < 0:
        return 0, GROW_SCRATCH
    for k in range(ncc):
        t = queue[ns + k]
        if stamp[t] == sval:
            continue  # target-incident, already classified
        stamp[t] = sval
        if _tet_seg_touch(pts, tets, t, cx, cy, cz, pts[tv, 0], pts[tv, 1], pts[tv, 2]) == 1:
            if nt >= cap_t:
                return 0, GROW_SCRATCH
            touched[nt] = t
            nt += 1

    # Flood outward from the seeds; the touched set is facet-connected.
    for k in range(nt):
        queue[k] = touched[k]
    qh = 0
    qt = nt
    tx = pts[tv, 0]
    ty = pts[tv, 1]
    tz = pts[tv, 2]
    while qh < qt:
        t = queue[qh]
        qh += 1
        for i in range(4):
            nb = neigh[t, i]
            if nb < 0 or stamp[nb] == sval:
                continue
            stamp[nb] = sval
            if _tet_seg_touch(pts, tets, nb, cx, cy, cz, tx, ty, tz) == 1:
                if nt >= cap_t or qt >= cap_q:
                    return 0, GROW_SCRATCH
                touched[nt] = nb
                nt += 1
                queue[qt] = nb
                qt += 1
    return nt, OK


@njit(cache=True)
def carve_rays_batch(
    ids, start_idx, decrement,
    pts, tets, neigh, v2t,
    ray_cam, ray_tgt, ray_epoch,
    rt_start, rt_len, rt_data, rt_top,
    counters, head, ch_ray, ch_epoch, ch_next, ch_top,
    stamp, stamp2, sval,
    queue, touched,
):
    """(Re)walk a batch of rays and commit their footprint bookkeeping.

    For each ray: optionally decrement the counters of its previous
    touched list, walk the current touched set, then commit the new list
    to the rt arena, bump the ray epoch (which lazily invalidates its old
    chain entries), increment counters, and push chain entries onto each
    touched tet.  Commits are per-ray atomic: any GROW_* status is
    returned before that ray mutates anything, with `next_idx` telling
    the caller where to resume after growing the named buffer.

    Returns (status, next_idx, rt_top, ch_top, sval).
    """
    n = ids.shape[0]
    for idx in range(start_idx, n):
        rid = ids[idx]
        sval += 1
        nt, status = _carve_walk_one(
            pts, tets, neigh, v2t,
            ray_cam[rid, 0], ray_cam[rid, 1], ray_cam[rid, 2], ray_tgt[rid],
            stamp, stamp2, sval,
            queue, touched,
        )
        if status != OK:
            return status, idx, rt_top, ch_top, sval
        if rt_top + nt > rt_data.shape[0]:
            return GROW_RT, idx, rt_top, ch_top, sval
        if ch_top + nt > ch_ray.shape[0]:
            return GROW_CHAIN, idx, rt_top, ch_top, sval

        if decrement == 1:
            s = rt_start[rid]
            for j in range(rt_len[rid]):
                counters[rt_data[s + j]] -= 1
        ray_epoch[rid] += 1
        ep = ray_epoch[rid]
        rt_start[rid] = rt_top
        rt_len[rid] = nt
        for j in range(nt):
            t = touched[j]
            rt_data[rt_top + j] = t
            counters[t] += 1
            ch_ray[ch_top] = rid
            ch_epoch[ch_top] = ep
            ch_next[ch_top] = head[t]
            head[t] = ch_top
            ch_top += 1
        rt_top += nt
    return OK, n, rt_top, ch_top, sval


@njit(cache=True)
def affected_rays(dest, head, ch_ray, ch_epoch, ch_next, ray_epoch, ray_alive, rstamp, rsval, out):
    """Unique live rays whose last walk touched any of the given tets.

    Chain entries are lazily invalidated: an entry only counts when its
    stored epoch matches the ray's current epoch.  Returns the count or
    -1 if `out` is too small.
    """
    n = 0
    for k in range(dest.shape[0]):
        e = head[dest[k]]
        while e >= 0:
            r = ch_ray[e]
            if ch_epoch[e] == ray_epoch[r] and ray_alive[r] == 1 and rstamp[r] != rsval:
                rstamp[r] = rsval
                if n >= out.shape[0]:
                    return -1
                out[n] = r
                n += 1
            e = ch_next[e]
    return n


@njit(cache=True)
def kill_rays(ids, rt_start, rt_len, rt_data, counters, ray_epoch, ray_alive):
    """Retract rays: remove their counter contributions and mark them dead."""
    for k in range(ids.shape[0]):
        rid = ids[k]
        s = rt_start[rid]
        for j in range(rt_len[rid]):
            counters[rt_data[s + j]] -= 1
        rt_len[rid] = 0
        ray_epoch[rid] += 1
        ray_alive[rid] = 0


@njit(cache=True)
def compact_rt(n_rays, rt_start, rt_len, rt_data, new_data):
    """Copy every ray's live footprint segment to the front of a fresh
    arena, updating rt_start in place.  Returns the new arena top."""
    top = 0
    for rid in range(n_rays):
        s = rt_start[rid]
        n = rt_len[rid]
        for j in range(n):
            new_data[top + j] = rt_data[s + j]
        rt_start[rid] = top
        top += n
    return top


@njit(cache=True)
def rebuild_chains(n_rays, ray_epoch, rt_start, rt_len, rt_data, head,
                   ch_ray, ch_epoch, ch_next):
    """Rebuild the inverted index over live footprint entries from
    scratch, shedding stale-epoch entries.  Returns the new chain top."""
    for t in range(head.shape[0]):
        head[t] = -1
    top = 0
    for rid in range(n_rays):
        ep = ray_epoch[rid]
        s = rt_start[rid]
        for j in range(rt_len[rid]):
            t = rt_data[s + j]
            ch_ray[top] = rid
            ch_epoch[top] = ep
            ch_next[top] = head[t]
            head[t] = top
            top += 1
    return top


@njit(cache=True)
def scan_flips(alive, n_t, counters, forced, k, free_state, out):
    """Update the cached free/occupied label of every alive tet.

    Emits the slots whose label changed since the previous scan; the
    caller turns these into the flip list of a delta, filtering slots it
    knows were just created.
    """
    n = 0
    for t in range(n_t):
        if alive[t] == 0:
            continue
        st = 1 if (forced[t] == 1 or counters[t] >= k) else 0
        if st != free_state[t]:
            free_state[t] = st
            out[n] = t
            n += 1
    return n


@njit(cache=True)
def extract_surface(
    pts, tets, neigh, alive, n_t,
    counters, forced, k,
    vmap, vstamp, vsval,
    out_tris, out_vsl,
):
    """Collect the oriented facets separating occupied tets from free ones.

    Each boundary facet is emitted once, from its occupied side, using
    that tet's outward ordering, so triangle normals point from occupied
    into free space.  Vertices are compacted; `out_vsl` maps compact
    index back to the triangulation slot.

    Returns (status, n_tris, n_verts).
    """
    ntri = 0
    nv = 0
    for t in range(n_t):
        if alive[t] == 0:
            continue
        if forced[t] == 1 or counters[t] >= k:
            continue  # free side emits nothing
        for i in range(4):
            nb = neigh[t, i]
            if nb < 0:
                continue
            if not (forced[nb] == 1 or counters[nb] >= k):
                continue
            if ntri >= out_tris.shape[0]:
                return GROW_SCRATCH, 0, 0
            for j in range(3):
                v = tets[t, FOPP[i, j]]
                if vstamp[v] != vsval:
                    vstamp[v] = vsval
                    if nv >= out_vsl.shape[0]:
                        return GROW_SCRATCH, 0, 0
                    vmap[v] = nv
                    out_vsl[nv] = v
                    nv += 1
                out_tris[ntri, j] = vmap[v]
            ntri += 1
    return OK, ntri, nv


@njit(cache=True)
def _o3d_centroid(
    f0x, f0y, f0z, f1x, f1y, f1z, f2x, f2y, f2z,
    p0x, p0y, p0z, p1x, p1y, p1z, p2x, p2y, p2z, p3x, p3y, p3z,
):
    """Exact sign of orient3d(facet, centroid of four points).

    The centroid only enters the last determinant row, so its rounding
    error e shifts the determinant by exactly -e . cross(f1-f0, f2-f0);
    that term widens the usual filter bound.
    """
    cx = (p0x + p1x + p2x + p3x) / 4.0
    cy = (p0y + p1y + p2y + p3y) / 4.0
    cz = (p0z + p1z + p2z + p3z) / 4.0
    dx = 5e-16 * (abs(p0x) + abs(p1x) + abs(p2x) + abs(p3x)) * 0.25
    dy = 5e-16 * (abs(p0y) + abs(p1y) + abs(p2y) + abs(p3y)) * 0.25
    dz = 5e-16 * (abs(p0z) + abs(p1z) + abs(p2z) + abs(p3z)) * 0.25

    ux = f1x - f0x
    uy = f1y - f0y
    uz = f1z - f0z
    vx = f2x - f0x
    vy = f2y - f0y
    vz = f2z - f0z
    det, perm = _o3d_det(f0x, f0y, f0z, f1x, f1y, f1z, f2x, f2y, f2z, cx, cy, cz)
    lip = (
        dx * abs(uy * vz - uz * vy)
        + dy * abs(uz * vx - ux * vz)
        + dz * abs(ux * vy - uy * vx)
    )
    bound = O3D_BOUND_A * perm + 1.125 * lip
    if det > bound:
        return 1
    if det < -bound:
        return -1
    s = 0
    with objmode(s="int64"):
        s = centroid_orient_exact_cb(
            f0x, f0y, f0z, f1x, f1y, f1z, f2x, f2y, f2z,
            p0x, p0y, p0z, p1x, p1y, p1z, p2x, p2y, p2z, p3x, p3y, p3z,
        )
    return s


@njit(cache=True)
def select_fill(lpts, ltets, lalive, ln_t, star_pts, out_mask):
    """Mark scratch tets whose centroid lies inside the union of star tets.

    Used by vertex removal: the scratch Delaunay structure over the link
    tiles the star cavity with exactly the tets selected here.
    """
    ns = star_pts.shape[0]
    for t in range(ln_t):
        out_mask[t] = 0
        if lalive[t] == 0:
            continue
        a = ltets[t, 0]
        b = ltets[t, 1]
        c = ltets[t, 2]
        d = ltets[t, 3]
        for s in range(ns):
            inside = True
            for i in range(4):
                f0 = FOPP[i, 0]
                f1 = FOPP[i, 1]
                f2 = FOPP[i, 2]
                sgn = _o3d_centroid(
                    star_pts[s, f0, 0], star_pts[s, f0, 1], star_pts[s, f0, 2],
                    star_pts[s, f1, 0], star_pts[s, f1, 1], star_pts[s, f1, 2],
                    star_pts[s, f2, 0], star_pts[s, f2, 1], star_pts[s, f2, 2],
                    lpts[a, 0], lpts[a, 1], lpts[a, 2],
                    lpts[b, 0], lpts[b, 1], lpts[b, 2],
                    lpts[c, 0], lpts[c, 1], lpts[c, 2],
                    lpts[d, 0], lpts[d, 1], lpts[d, 2],
                )
                if sgn > 0:
                    inside = False
                    break
            if inside:
                out_mask[t] = 1
                break


@njit(cache=True)
def count_alive(alive, n_t):
    n = 0
    for t in range(n_t):
        if alive[t] == 1:
            n += 1
    return n


# ---------------------------------------------------------------------------
# BVH over triangles: median split on the longest centroid axis, built and
# queried iteratively so the kernels stay allocation-free.


@njit(cache=True)
def bvh_build(
    tmin, tmax, tcent, order,
    node_lo, node_hi, node_left, node_right, node_start, node_count,
    stack_start, stack_count, stack_slot,
    axbuf, ixbuf,
):
    """Build the tree over triangles [0, n); returns the node count.

    `order` starts as arange(n) and is permuted in place; leaves hold
    ranges of it.  Node buffers must hold at least 2n entries.
    """
    n = order.shape[0]
    nn = 0
    sp = 0
    stack_start[sp] = 0
    stack_count[sp] = n
    stack_slot[sp] = 0
    nn = 1
    sp += 1
    while sp > 0:
        sp -= 1
        start = stack_start[sp]
        count = stack_count[sp]
        slot = stack_slot[sp]

        lx = np.inf
        ly = np.inf
        lz = np.inf
        hx = -np.inf
        hy = -np.inf
        hz = -np.inf
        clx = np.inf
        cly = np.inf
        clz = np.inf
        chx = -np.inf
        chy = -np.inf
        chz = -np.inf
        for u in range(start, start + count):
            tri = order[u]
            if tmin[tri, 0] < lx:
                lx = tmin[tri, 0]
            if tmin[tri, 1] < ly:
                ly = tmin[tri, 1]
            if tmin[tri, 2] < lz:
                lz = tmin[tri, 2]
            if tmax[tri, 0] > hx:
                hx = tmax[tri, 0]
            if tmax[tri, 1] > hy:
                hy = tmax[tri, 1]
            if tmax[tri, 2] > hz:
                hz = tmax[tri, 2]
            cx = tcent[tri, 0]
            cy = tcent[tri, 1]
            cz = tcent[tri, 2]
            if cx < clx:
                clx = cx
            if cy < cly:
                cly = cy
            if cz < clz:
                clz = cz
            if cx > chx:
                chx = cx
            if cy > chy:
                chy = cy
            if cz > chz:
                chz = cz
        node_lo[slot, 0] = lx
        node_lo[slot, 1] = ly
        node_lo[slot, 2] = lz
        node_hi[slot, 0] = hx
        node_hi[slot, 1] = hy
        node_hi[slot, 2] = hz

        if count <= 4:
            node_left[slot] = -1
            node_right[slot] = -1
            node_start[slot] = start
            node_count[slot] = count
            continue

        ex = chx - clx
        ey = chy - cly
        ez = chz - clz
        axis = 0
        if ey > ex and ey >= ez:
            axis = 1
        elif ez > ex and ez > ey:
            axis = 2

        for u in range(count):
            axbuf[u] = tcent[order[start + u], axis]
        ord_idx = np.argsort(axbuf[:count], kind="mergesort")
        for u in range(count):
            ixbuf[u] = order[start + ord_idx[u]]
        for u in range(count):
            order[start + u] = ixbuf[u]

        mid = count // 2
        left = nn
        right = nn + 1
        nn += 2
        node_left[slot] = left
        node_right[slot] = right
        node_start[slot] = 0
        node_count[slot] = 0

        stack_start[sp] = start
        stack_count[sp] = mid
        stack_slot[sp] = left
        sp += 1
        stack_start[sp] = start + mid
        stack_count[sp] = count - mid
        stack_slot[sp] = right
        sp += 1
    return nn


@njit(cache=True)
def _box_d2(lo, hi, slot, qx, qy, qz):
    d2 = 0.0
    v = lo[slot, 0] - qx
    if v > 0.0:
        d2 += v * v
    v = qx - hi[slot, 0]
    if v > 0.0:
        d2 += v * v
    v = lo[slot, 1] - qy
    if v > 0.0:
        d2 += v * v
    v = qy - hi[slot, 1]
    if v > 0.0:
        d2 += v * v
    v = lo[slot, 2] - qz
    if v > 0.0:
        d2 += v * v
    v = qz - hi[slot, 2]
    if v > 0.0:
        d2 += v * v
    return d2


@njit(cache=True)
def _tri_closest(
    ax, ay, az, bx, by, bz, cx, cy, cz, px, py, pz,
):
    """Closest point on a triangle (Ericson's region walk)."""
    abx = bx - ax
    aby = by - ay
    abz = bz - az
    acx = cx - ax
    acy = cy - ay
    acz = cz - az
    apx = px - ax
    apy = py - ay
    apz = pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    bpx = px - bx
    bpy = py - by
    bpz = pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        w = d1 / (d1 - d3)
        return ax + w * abx, ay + w * aby, az + w * abz
    cpx = px - cx
    cpy = py - cy
    cpz = pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return (
            bx + w * (cx - bx),
            by + w * (cy - by),
            bz + w * (cz - bz),
        )
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (
        ax + v * abx + w * acx,
        ay + v * aby + w * acy,
        az + v * abz + w * acz,
    )


@njit(cache=True)
def bvh_query(
    verts, tris, order,
    node_lo, node_hi, node_left, node_right, node_start, node_count,
    qx, qy, qz,
    stack,
):
    """Nearest triangle to a point; ties break to the lowest triangle id.

    Returns (d2, tri, wx, wy, wz) where w is the witness point.  Boxes at
    exactly the current best distance are still explored so the id tie
    rule is honoured deterministically.
    """
    best_d2 = np.inf
    best_tri = -1
    wx = 0.0
    wy = 0.0
    wz = 0.0
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        slot = stack[sp]
        if _box_d2(node_lo, node_hi, slot, qx, qy, qz) > best_d2:
            continue
        left = node_left[slot]
        if left < 0:
            s = node_start[slot]
            for u in range(s, s + node_count[slot]):
                tri = order[u]
                va = tris[tri, 0]
                vb = tris[tri, 1]
                vc = tris[tri, 2]
                cxp, cyp, czp = _tri_closest(
                    verts[va, 0], verts[va, 1], verts[va, 2],
                    verts[vb, 0], verts[vb, 1], verts[vb, 2],
                    verts[vc, 0], verts[vc, 1], verts[vc, 2],
                    qx, qy, qz,
                )
                dx = qx - cxp
                dy = qy - cyp
                dz = qz - czp
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best_d2 or (d2 == best_d2 and tri < best_tri):
                    best_d2 = d2
                    best_tri = tri
                    wx = cxp
                    wy = cyp
                    wz = czp
            continue
        right = node_right[slot]
        dl = _box_d2(node_lo, node_hi, left, qx, qy, qz)
        dr = _box_d2(node_lo, node_hi, right, qx, qy, qz)
        # Push the farther child first so the nearer one is popped first.
        if dl <= dr:
            stack[sp] = right
            sp += 1
            stack[sp] = left
            sp += 1
        else:
            stack[sp] = left
            sp += 1
            stack[sp] = right
            sp += 1
    return best_d2, best_tri, wx, wy, wz


@njit(cache=True)
def bvh_query_many(
    verts, tris, order,
    node_lo, node_hi, node_left, node_right, node_start, node_count,
    queries, out_d, stack,
):
    """Nearest-triangle distance for each query point."""
    for i in range(queries.shape[0]):
        d2, tri, wx, wy, wz = bvh_query(
            verts, tris, order,
            node_lo, node_hi, node_left, node_right, node_start, node_count,
            queries[i, 0], queries[i, 1], queries[i, 2],
            stack,
        )
        out_d[i] = np.sqrt(d2)
