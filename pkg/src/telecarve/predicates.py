"""Exact-sign geometric predicates: orientation and (perturbed) insphere.

Sign decisions are never made from rounded floating point alone. Each
predicate first evaluates a floating-point determinant together with a
forward error bound (Shewchuk's stage-A filter); if the magnitude does not
clear the bound, the sign is recomputed exactly in integer arithmetic.
Floats convert to integers losslessly via ``as_integer_ratio`` on a common
power-of-two scale, so the fallback is unconditional, not adaptive.

Cospherical degeneracies are resolved by symbolic perturbation of the
lifted heights (a regular-triangulation view): vertex ``i`` gets an
infinitesimal weight ``eps**(i+1)``, so lower vertex ids dominate. The
perturbed insphere sign is therefore never zero for a non-degenerate tet,
and the scheme never manufactures zero-volume tets because the cofactor of
any vertex off the shared facet vanishes exactly in the coplanar case.

Conventions (verified by tests):
  orient3d(a,b,c,d) > 0  for a=(0,0,0), b=(1,0,0), c=(0,1,0), d=(0,0,1);
  tets are stored positively oriented;
  insphere_det(a,b,c,d,e) < 0 when e lies strictly inside the circumsphere
  of a positively oriented tet (a,b,c,d).
"""

from __future__ import annotations

import math

# Stage-A error bound constants (standard bootstrap: epsilon = 2**-53).
_every = 1.0
_eps = 1.0
while 1.0 + _eps / 2.0 > 1.0:
    _eps /= 2.0
EPSILON = _eps
O3D_BOUND_A = (7.0 + 56.0 * EPSILON) * EPSILON
INS_BOUND_A = (10.0 + 96.0 * EPSILON) * EPSILON

del _every, _eps


def orient3d_float(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz):
    """Filtered orientation determinant.

    Returns (det, reliable): ``det`` is the rounded determinant value and
    ``reliable`` is True when its sign is certified by the error bound.
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
    return det, abs(det) > O3D_BOUND_A * perm


def _scaled_ints(values):
    """Convert floats to exact integers on a common power-of-two scale."""
    ratios = [float(v).as_integer_ratio() for v in values]
    common = 1
    for _, den in ratios:
        if den > common:
            common = den
    return [num * (common // den) for num, den in ratios]


def orient3d_exact(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz):
    """Exact integer orientation determinant (arbitrary magnitude)."""
    xs = _scaled_ints((ax, bx, cx, dx))
    ys = _scaled_ints((ay, by, cy, dy))
    zs = _scaled_ints((az, bz, cz, dz))
    bax = xs[1] - xs[0]
    bay = ys[1] - ys[0]
    baz = zs[1] - zs[0]
    cax = xs[2] - xs[0]
    cay = ys[2] - ys[0]
    caz = zs[2] - zs[0]
    dax = xs[3] - xs[0]
    day = ys[3] - ys[0]
    daz = zs[3] - zs[0]
    return (
        bax * (cay * daz - caz * day)
        - bay * (cax * daz - caz * dax)
        + baz * (cax * day - cay * dax)
    )


def _sign(v) -> int:
    if v > 0:
        return 1
    if v < 0:
        return -1
    return 0


def orient3d_sign(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz) -> int:
    """Exact sign of orient3d: +1, -1, or 0 (coplanar)."""
    det, ok = orient3d_float(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz)
    if ok:
        return 1 if det > 0.0 else -1
    return _sign(orient3d_exact(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz))


def insphere_float(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz, ex, ey, ez):
    """Filtered insphere determinant; returns (det, reliable)."""
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
    perm = (
        ((cxdy + dxcy) * bezp + (dxby + bxdy) * cezp + (bxcy + cxby) * dezp) * alift
        + ((dxay + axdy) * cezp + (axcy + cxay) * dezp + (cxdy + dxcy) * aezp) * blift
        + ((axby + bxay) * dezp + (bxdy + dxby) * aezp + (dxay + axdy) * bezp) * clift
        + ((bxcy + cxby) * aezp + (cxay + axcy) * bezp + (axby + bxay) * cezp) * dlift
    )
    return det, abs(det) > INS_BOUND_A * perm


def _insphere_exact_parts(coords):
    """Exact insphere determinant plus the orientation cofactors.

    coords is a flat tuple (ax..az, bx..bz, cx..cz, dx..dz, ex..ez).
    Returns (det, (coef_a, coef_b, coef_c, coef_d, coef_e)) where the
    perturbed determinant is det + sum_i w_i * coef_i for lifted weights
    w_i = eps**(id_i + 1) subtracted from the heights.

    All 15 coordinates share one integer scale: the lift column mixes
    axes, so per-axis scaling would change the determinant's sign.
    """
    ints = _scaled_ints(coords)
    xs = ints[0::3]
    ys = ints[1::3]
    zs = ints[2::3]
    # Differences from e (row reduction of the 5x5 lifted determinant).
    rows = []
    for i in range(4):
        px = xs[i] - xs[4]
        py = ys[i] - ys[4]
        pz = zs[i] - zs[4]
        rows.append((px, py, pz, px * px + py * py + pz * pz))

    def det3(r0, r1, r2, cols):
        a, b, c = cols
        return (
            r0[a] * (r1[b] * r2[c] - r1[c] * r2[b])
            - r0[b] * (r1[a] * r2[c] - r1[c] * r2[a])
            + r0[c] * (r1[a] * r2[b] - r1[b] * r2[a])
        )

    xyz = (0, 1, 2)
    m_a = det3(rows[1], rows[2], rows[3], xyz)   # orient3d(e,b,c,d)
    m_b = det3(rows[0], rows[2], rows[3], xyz)   # orient3d(e,a,c,d)
    m_c = det3(rows[0], rows[1], rows[3], xyz)   # orient3d(e,a,b,d)
    m_d = det3(rows[0], rows[1], rows[2], xyz)   # orient3d(e,a,b,c)

    # Full 4x4 determinant, expanding along the lift column.
    det = -rows[0][3] * m_a + rows[1][3] * m_b - rows[2][3] * m_c + rows[3][3] * m_d

    # orient3d(a,b,c,d) from the same integer grid.
    oa = (
        (xs[1] - xs[0]) * ((ys[2] - ys[0]) * (zs[3] - zs[0]) - (zs[2] - zs[0]) * (ys[3] - ys[0]))
        - (ys[1] - ys[0]) * ((xs[2] - xs[0]) * (zs[3] - zs[0]) - (zs[2] - zs[0]) * (xs[3] - xs[0]))
        + (zs[1] - zs[0]) * ((xs[2] - xs[0]) * (ys[3] - ys[0]) - (ys[2] - ys[0]) * (xs[3] - xs[0]))
    )

    # Perturbed det = det + w_a*m_a - w_b*m_b + w_c*m_c - w_d*m_d - w_e*oa.
    return det, (m_a, -m_b, m_c, -m_d, -oa)


def insphere_exact(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz, ex, ey, ez):
    """Exact integer insphere determinant (no perturbation)."""
    det, _ = _insphere_exact_parts(
        (ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz, ex, ey, ez)
    )
    return det


def insphere_perturbed_sign(coords, ids) -> int:
    """Sign of the symbolically perturbed insphere determinant.

    coords: flat tuple/list of 15 floats (a, b, c, d, e positions);
    ids: 5 integer vertex ids (e is the query point). Never returns 0 for
    a tet (a,b,c,d) with nonzero volume: the cascade terminates at e's
    term, whose coefficient is the tet's orientation determinant.

    A negative result means e is inside the perturbed circumsphere of a
    positively oriented (a,b,c,d).
    """
    det, coefs = _insphere_exact_parts(tuple(coords))
    if det:
        return 1 if det > 0 else -1
    order = sorted(range(5), key=lambda i: ids[i])
    for i in order:
        c = coefs[i]
        if c:
            return 1 if c > 0 else -1
    return 0


def insphere_sign(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz, ex, ey, ez) -> int:
    """Exact sign of the unperturbed insphere determinant."""
    det, ok = insphere_float(
        ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz, ex, ey, ez
    )
    if ok:
        return 1 if det > 0.0 else -1
    return _sign(
        insphere_exact(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz, ex, ey, ez)
    )


def conflict_sign(coords, ids) -> int:
    """Perturbed conflict test used by Bowyer-Watson.

    Returns -1 when the query point (last of the five) lies inside the
    perturbed circumsphere of the positively oriented tet, +1 otherwise.
    The float filter handles the overwhelmingly common certain case.
    """
    det, ok = insphere_float(*coords)
    if ok:
        return 1 if det > 0.0 else -1
    return insphere_perturbed_sign(coords, ids)


# Scalar-argument callbacks for the jitted kernels (objmode escapes).

def orient_exact_cb(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz) -> int:
    """Exact orientation sign, scalar signature for kernel escalation."""
    return _sign(orient3d_exact(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz))


def conflict_exact_cb(
    ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz, ex, ey, ez,
    ia, ib, ic, id_, ie,
) -> int:
    """Perturbed insphere sign, scalar signature for kernel escalation."""
    return insphere_perturbed_sign(
        (ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz, ex, ey, ez),
        (ia, ib, ic, id_, ie),
    )


# Facet opposite vertex i of a positively oriented tet, ordered so the
# facet normal (right-hand rule) points out of the tet: the opposite
# vertex then satisfies orient3d(facet, v_i) < 0.
FACET_OPP = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))


def segment_tet_touch_exact(tet_coords, a, b) -> bool:
    """Does the open segment (a, b) meet the closed tetrahedron?

    tet_coords: flat tuple of 12 floats (4 positively oriented vertices);
    a, b: segment endpoint triples. Exact integer parametric clipping:
    the segment x(t) = a + t(b - a) is clipped against the four inward
    half-spaces; per facet the inside value is linear in t with endpoint
    values A (t=0) and B (t=1) computed as exact integers on a shared
    scale. Bounds are compared as integer fractions, so grazing contacts
    (touching a facet, edge, or vertex) are decided exactly.
    """
    # lo/hi as fractions (num, den) with den > 0; interval [lo, hi].
    lo_n, lo_d = 0, 1
    hi_n, hi_d = 1, 1
    for f in FACET_OPP:
        coords = []
        for vi in f:
            coords.extend(tet_coords[3 * vi : 3 * vi + 3])
        coords.extend(a)
        coords.extend(b)
        ints = _scaled_ints(coords)
        xs = ints[0::3]
        ys = ints[1::3]
        zs = ints[2::3]
        qx, qy, qz = xs[1] - xs[0], ys[1] - ys[0], zs[1] - zs[0]
        rx, ry, rz = xs[2] - xs[0], ys[2] - ys[0], zs[2] - zs[0]

        def odet(i):
            wx, wy, wz = xs[i] - xs[0], ys[i] - ys[0], zs[i] - zs[0]
            return (
                qx * (ry * wz - rz * wy)
                - qy * (rx * wz - rz * wx)
                + qz * (rx * wy - ry * wx)
            )

        # Inside value g(x) = -orient3d(p, q, r, x); positive inside.
        av = -odet(3)
        bv = -odet(4)
        if av >= 0 and bv >= 0:
            continue
        if av < 0 and bv < 0:
            return False
        if av >= 0:  # bv < 0: upper bound t <= av / (av - bv)
            n, d = av, av - bv
            if n * hi_d < hi_n * d:
                hi_n, hi_d = n, d
        else:  # av < 0 <= bv: lower bound t >= (-av) / (bv - av)
            n, d = -av, bv - av
            if n * lo_d > lo_n * d:
                lo_n, lo_d = n, d
    # Nonempty closed [lo, hi] intersected with open (0, 1).
    if lo_n * hi_d > hi_n * lo_d:
        return False
    if lo_n >= lo_d:  # lo >= 1
        return False
    if hi_n <= 0:  # hi <= 0
        return False
    return True


def segment_tet_touch_exact_cb(
    t0x, t0y, t0z, t1x, t1y, t1z, t2x, t2y, t2z, t3x, t3y, t3z,
    ax, ay, az, bx, by, bz,
) -> int:
    """Scalar-signature wrapper for kernel escalation; returns 0/1."""
    return int(
        segment_tet_touch_exact(
            (t0x, t0y, t0z, t1x, t1y, t1z, t2x, t2y, t2z, t3x, t3y, t3z),
            (ax, ay, az),
            (bx, by, bz),
        )
    )


def centroid_orient_exact(facet, quad) -> int:
    """Exact sign of orient3d(f0, f1, f2, centroid(quad)).

    The centroid of four float points is not a float; multiplying the
    whole determinant by 4 turns it into the integer row p0+p1+p2+p3
    against rows 4*f_i, which per-axis common scaling makes exact.
    """
    f0, f1, f2 = facet
    p0, p1, p2, p3 = quad
    rows = []
    for k in range(3):
        iq0, iq1, iq2, i0, i1, i2, i3 = _scaled_ints(
            (f0[k], f1[k], f2[k], p0[k], p1[k], p2[k], p3[k])
        )
        s = i0 + i1 + i2 + i3
        rows.append((4 * iq1 - 4 * iq0, 4 * iq2 - 4 * iq0, s - 4 * iq0))
    ux, vx, wx = rows[0]
    uy, vy, wy = rows[1]
    uz, vz, wz = rows[2]
    det = (
        ux * (vy * wz - vz * wy)
        - vx * (uy * wz - uz * wy)
        + wx * (uy * vz - uz * vy)
    )
    return _sign(det)


def centroid_orient_exact_cb(
    f0x, f0y, f0z, f1x, f1y, f1z, f2x, f2y, f2z,
    p0x, p0y, p0z, p1x, p1y, p1z, p2x, p2y, p2z, p3x, p3y, p3z,
) -> int:
    """Scalar-signature wrapper for kernel escalation."""
    return centroid_orient_exact(
        ((f0x, f0y, f0z), (f1x, f1y, f1z), (f2x, f2y, f2z)),
        ((p0x, p0y, p0z), (p1x, p1y, p1z), (p2x, p2y, p2z), (p3x, p3y, p3z)),
    )


def volumes6_scaled(coords_by_axis, quads):
    """Signed 6*volume of each vertex quad, as integers on one shared scale.

    ``coords_by_axis`` is (xs, ys, zs) float sequences indexed by the ids
    in ``quads``.  All x values share one power-of-two scale (likewise y
    and z), so the returned integers are mutually comparable and sum
    exactly; the anisotropic scale multiplies every volume by the same
    positive constant.
    """
    xs = _scaled_ints(coords_by_axis[0])
    ys = _scaled_ints(coords_by_axis[1])
    zs = _scaled_ints(coords_by_axis[2])
    out = []
    for a, b, c, d in quads:
        ux = xs[b] - xs[a]
        uy = ys[b] - ys[a]
        uz = zs[b] - zs[a]
        vx = xs[c] - xs[a]
        vy = ys[c] - ys[a]
        vz = zs[c] - zs[a]
        wx = xs[d] - xs[a]
        wy = ys[d] - ys[a]
        wz = zs[d] - zs[a]
        out.append(
            ux * (vy * wz - vz * wy)
            - uy * (vx * wz - vz * wx)
            + uz * (vx * wy - vy * wx)
        )
    return out
