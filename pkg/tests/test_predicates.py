"""Exact predicate tests: sign conventions, filter soundness, perturbation.

The perturbed-insphere oracle here is intentionally a different derivation
from the implementation: it evaluates the lifted 4x4 determinant with the
weights substituted as a concrete tiny rational, rather than walking the
cofactor cascade.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from telecarve.predicates import (
    FACET_OPP,
    centroid_orient_exact,
    conflict_sign,
    insphere_exact,
    insphere_float,
    insphere_perturbed_sign,
    orient3d_exact,
    orient3d_float,
    orient3d_sign,
    segment_tet_touch_exact,
    volumes6_scaled,
)

from helpers import exact_orient_fraction


def _exact_insphere_fraction(coords):
    """Rational insphere determinant: rows [p_i - e, |p_i - e|^2]."""
    pts = [coords[3 * i : 3 * i + 3] for i in range(5)]
    e = pts[4]
    rows = []
    for p in pts[:4]:
        d = [Fraction(float(p[k])) - Fraction(float(e[k])) for k in range(3)]
        rows.append(d + [d[0] * d[0] + d[1] * d[1] + d[2] * d[2]])
    return _det4(rows)


def _det4(rows):
    def det3(m):
        return (
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        )

    total = Fraction(0)
    for j in range(4):
        minor = [[rows[i][k] for k in range(4) if k != j] for i in range(1, 4)]
        term = rows[0][j] * det3(minor)
        total += term if j % 2 == 0 else -term
    return total


def _perturbed_oracle(coords, ids):
    """Perturbed insphere sign via direct substitution of a tiny weight.

    Vertex i carries weight eps**(id_i + 1) subtracted from its lifted
    height; for small enough eps the sign of the substituted determinant
    equals the symbolic limit.  eps = 2**-800 dwarfs every coefficient
    gap reachable from double coordinates of modest magnitude.
    """
    eps = Fraction(1, 2**800)
    pts = [coords[3 * i : 3 * i + 3] for i in range(5)]
    e = pts[4]
    we = eps ** (ids[4] + 1)
    rows = []
    for p, pid in zip(pts[:4], ids[:4]):
        d = [Fraction(float(p[k])) - Fraction(float(e[k])) for k in range(3)]
        lift = d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
        rows.append(d + [lift - eps ** (pid + 1) + we])
    det = _det4(rows)
    return (det > 0) - (det < 0)


# -- orientation -------------------------------------------------------------


def test_orient_canonical_sign():
    s = orient3d_sign(0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1)
    assert s == 1
    s = orient3d_sign(0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, -1)
    assert s == -1


def test_orient_coplanar_is_zero():
    assert orient3d_sign(0, 0, 0, 1, 0, 0, 0, 1, 0, 0.25, 0.25, 0) == 0
    assert orient3d_sign(0, 0, 0, 2, 1, 0, 4, 2, 0, 6, 3, 0) == 0


def test_orient_filter_agrees_with_exact_near_coplanar():
    rng = np.random.default_rng(42)
    for _ in range(2000):
        a, b, c = rng.uniform(-1, 1, (3, 3))
        u, v = rng.uniform(-1, 1, 2)
        d = a + u * (b - a) + v * (c - a)  # numerically near the plane
        d[2] += rng.choice([0.0, 1e-18, -1e-18, 1e-30])
        args = (*a, *b, *c, *d)
        det, reliable = orient3d_float(*args)
        s = orient3d_sign(*args)
        assert s == exact_orient_fraction(a, b, c, d)
        if reliable:
            assert s == (1 if det > 0 else -1)


def test_orient_exact_scale_invariance():
    # The per-axis scaling in orient3d_exact must preserve signs.
    rng = np.random.default_rng(3)
    for _ in range(200):
        pts = rng.uniform(-1, 1, (4, 3)) * [1e-8, 1.0, 1e8]
        det = orient3d_exact(*pts.ravel())
        s = (det > 0) - (det < 0)
        assert s == exact_orient_fraction(*pts)


# -- insphere ----------------------------------------------------------------


def _canonical_tet():
    return np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    )


def test_insphere_sign_convention():
    tet = _canonical_tet()
    inside = np.array([0.25, 0.25, 0.25])
    outside = np.array([10.0, 10.0, 10.0])
    det_in = insphere_exact(*tet.ravel(), *inside)
    det_out = insphere_exact(*tet.ravel(), *outside)
    assert det_in < 0, "interior point must give a negative determinant"
    assert det_out > 0


def test_insphere_filter_soundness_random():
    rng = np.random.default_rng(11)
    for _ in range(1500):
        pts = rng.uniform(-1, 1, (5, 3))
        args = tuple(pts.ravel())
        det, reliable = insphere_float(*args)
        exact = _exact_insphere_fraction(args)
        if reliable:
            assert (det > 0) == (exact > 0) and (det < 0) == (exact < 0)
        assert ((insphere_exact(*args) > 0) - (insphere_exact(*args) < 0)) == (
            (exact > 0) - (exact < 0)
        )


def test_insphere_filter_soundness_near_cospherical():
    # Points on a sphere, one nudged by scattered tiny amounts: the filter
    # must either refuse to certify or agree with the exact sign.
    rng = np.random.default_rng(12)
    for _ in range(800):
        q = rng.normal(size=(5, 3))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        q[4] *= 1.0 + rng.choice([0.0, 1e-16, -1e-16, 1e-13, -1e-13])
        args = tuple(q.ravel())
        det, reliable = insphere_float(*args)
        exact = _exact_insphere_fraction(args)
        if reliable:
            assert det * exact > 0


# -- symbolic perturbation ---------------------------------------------------

_CUBE = [
    (x, y, z) for z in (0.0, 1.0) for y in (0.0, 1.0) for x in (0.0, 1.0)
]


def test_perturbed_sign_matches_substitution_oracle_on_cube():
    # All 8 cube corners are cospherical: every unperturbed determinant is
    # exactly zero, so the outcome is decided purely by the perturbation.
    combos = list(itertools.combinations(range(8), 5))
    rng = np.random.default_rng(5)
    for combo in combos[:40]:
        ids = [int(i) for i in combo]
        rng.shuffle(ids)
        coords = tuple(float(v) for i in combo for v in _CUBE[i])
        got = insphere_perturbed_sign(coords, tuple(ids))
        want = _perturbed_oracle(coords, tuple(ids))
        assert want != 0
        assert got == want


def test_perturbed_sign_matches_oracle_mixed_degenerate():
    # Mix of cospherical, coplanar-cocircular, and generic quintuples.
    rng = np.random.default_rng(6)
    for _ in range(250):
        mode = rng.integers(0, 3)
        if mode == 0:
            q = rng.normal(size=(5, 3))
            q /= np.linalg.norm(q, axis=1, keepdims=True)
            q = np.round(q * 8) / 8  # dyadic, frequently degenerate
        elif mode == 1:
            ang = rng.integers(0, 8, size=5) * (np.pi / 4)
            q = np.stack([np.round(np.cos(ang) * 4) / 4,
                          np.round(np.sin(ang) * 4) / 4,
                          np.zeros(5)], axis=1)
        else:
            q = rng.uniform(-1, 1, (5, 3))
        ids = rng.permutation(16)[:5]
        coords = tuple(float(v) for p in q for v in p)
        got = conflict_sign(coords, tuple(int(i) for i in ids))
        want = _perturbed_oracle(coords, tuple(int(i) for i in ids))
        if want == 0:
            # Geometrically degenerate beyond the weights (repeated points
            # or a flat tet); the library never asks about those.
            continue
        assert got == want


def test_perturbed_never_zero_for_distinct_points_on_sphere():
    # Octahedron vertices plus any two others: always decided.
    octa = np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
        dtype=float,
    )
    for combo in itertools.permutations(range(6), 5):
        coords = tuple(float(v) for i in combo for v in octa[i])
        quad = [octa[i] for i in combo[:4]]
        if exact_orient_fraction(*quad) == 0:
            continue  # flat tet: not a valid query
        s = insphere_perturbed_sign(coords, tuple(combo))
        assert s in (-1, 1)


# -- segment vs tet ----------------------------------------------------------


def _seg_oracle_fraction(tet, a, b) -> bool:
    """Rational clip of the open segment (a, b) against the closed tet."""
    lo, hi = Fraction(0), Fraction(1)
    fa = [Fraction(float(x)) for x in a]
    fb = [Fraction(float(x)) for x in b]
    for f in FACET_OPP:
        p0 = [Fraction(float(x)) for x in tet[f[0]]]
        p1 = [Fraction(float(x)) for x in tet[f[1]]]
        p2 = [Fraction(float(x)) for x in tet[f[2]]]

        def inside_val(q):
            u = [p1[k] - p0[k] for k in range(3)]
            v = [p2[k] - p0[k] for k in range(3)]
            w = [q[k] - p0[k] for k in range(3)]
            det = (
                u[0] * (v[1] * w[2] - v[2] * w[1])
                - u[1] * (v[0] * w[2] - v[2] * w[0])
                + u[2] * (v[0] * w[1] - v[1] * w[0])
            )
            return -det

        ga, gb = inside_val(fa), inside_val(fb)
        if ga >= 0 and gb >= 0:
            continue
        if ga < 0 and gb < 0:
            return False
        tstar = ga / (ga - gb)
        if ga >= 0:
            hi = min(hi, tstar)
        else:
            lo = max(lo, tstar)
    return lo <= hi and lo < 1 and hi > 0


def test_segment_tet_basic_cases():
    tet = _canonical_tet()
    coords = tuple(tet.ravel())
    thru = segment_tet_touch_exact(coords, (-1, 0.2, 0.2), (1, 0.2, 0.2))
    assert thru
    miss = segment_tet_touch_exact(coords, (-1, 2, 2), (1, 2, 2))
    assert not miss
    # Endpoint exactly at a vertex, open segment leaving outward: no touch.
    away = segment_tet_touch_exact(coords, (-1.0, -1.0, -1.0), (0.0, 0.0, 0.0))
    assert not away
    # Endpoint at a vertex, segment entering through the interior: touch.
    into = segment_tet_touch_exact(coords, (0.5, 0.5, 0.5), (0.0, 0.0, 0.0))
    assert into
    # Grazing exactly along the z=0 facet plane: closed semantics, touch.
    graze = segment_tet_touch_exact(coords, (-1.0, 0.25, 0.0), (1.0, 0.25, 0.0))
    assert graze
    # Through a single vertex transversally: the closed tet is met at one
    # interior parameter, which counts.
    vert = segment_tet_touch_exact(coords, (-1.0, -1.0, 2.0), (1.0, 1.0, 0.0))
    assert vert == _seg_oracle_fraction(tet, (-1.0, -1.0, 2.0), (1.0, 1.0, 0.0))


def test_segment_tet_matches_fraction_oracle_random():
    rng = np.random.default_rng(21)
    n_checked = 0
    while n_checked < 600:
        tet = rng.uniform(-1, 1, (4, 3))
        if exact_orient_fraction(*tet) <= 0:
            continue
        if rng.random() < 0.5:
            a, b = rng.uniform(-2, 2, (2, 3))
        else:
            # Bias towards degeneracy: endpoints snapped to facet planes,
            # vertices, or edge midpoints.
            choice = rng.integers(0, 3)
            if choice == 0:
                a = tet[rng.integers(0, 4)].copy()
            elif choice == 1:
                i, j = rng.choice(4, size=2, replace=False)
                a = (tet[i] + tet[j]) / 2
            else:
                a = rng.uniform(-2, 2, 3)
            b = tet[rng.integers(0, 4)] if rng.random() < 0.5 else rng.uniform(-2, 2, 3)
            if np.allclose(a, b):
                continue
        got = segment_tet_touch_exact(tuple(tet.ravel()), tuple(a), tuple(b))
        want = _seg_oracle_fraction(tet, a, b)
        assert got == want
        n_checked += 1


# -- auxiliary exact helpers ---------------------------------------------------


def test_centroid_orient_exact_matches_fraction():
    rng = np.random.default_rng(31)
    for _ in range(300):
        f = rng.uniform(-1, 1, (3, 3))
        quad = rng.uniform(-1, 1, (4, 3))
        if rng.random() < 0.3:
            # Centroid exactly on the facet plane: put the quad symmetric
            # about a point of the plane.
            base = f[0] * 0.5 + f[1] * 0.25 + f[2] * 0.25
            quad[2] = 2 * base - quad[0]
            quad[3] = 2 * base - quad[1]
        cen = [
            sum(Fraction(float(quad[i][k])) for i in range(4)) / 4 for k in range(3)
        ]
        u = [Fraction(float(f[1][k])) - Fraction(float(f[0][k])) for k in range(3)]
        v = [Fraction(float(f[2][k])) - Fraction(float(f[0][k])) for k in range(3)]
        w = [cen[k] - Fraction(float(f[0][k])) for k in range(3)]
        det = (
            u[0] * (v[1] * w[2] - v[2] * w[1])
            - u[1] * (v[0] * w[2] - v[2] * w[0])
            + u[2] * (v[0] * w[1] - v[1] * w[0])
        )
        want = (det > 0) - (det < 0)
        got = centroid_orient_exact(tuple(map(tuple, f)), tuple(map(tuple, quad)))
        assert got == want


def test_volumes6_scaled_matches_fraction():
    rng = np.random.default_rng(32)
    pts = rng.uniform(-1, 1, (10, 3))
    quads = [tuple(rng.choice(10, 4, replace=False)) for _ in range(20)]
    axes = (list(pts[:, 0]), list(pts[:, 1]), list(pts[:, 2]))
    vols = volumes6_scaled(axes, quads)
    # Signs must match the rational determinant; ratios must be exact.
    fracs = []
    for (a, b, c, d), v6 in zip(quads, vols):
        u = [Fraction(float(pts[b][k])) - Fraction(float(pts[a][k])) for k in range(3)]
        vv = [Fraction(float(pts[c][k])) - Fraction(float(pts[a][k])) for k in range(3)]
        w = [Fraction(float(pts[d][k])) - Fraction(float(pts[a][k])) for k in range(3)]
        det = (
            u[0] * (vv[1] * w[2] - vv[2] * w[1])
            - u[1] * (vv[0] * w[2] - vv[2] * w[0])
            + u[2] * (vv[0] * w[1] - vv[1] * w[0])
        )
        fracs.append(det)
        assert (v6 > 0) == (det > 0) and (v6 < 0) == (det < 0)
    nz = [(v6, fr) for v6, fr in zip(vols, fracs) if fr != 0]
    v0, f0 = nz[0]
    for v6, fr in nz[1:]:
        assert Fraction(v6, v0) == fr / f0


@settings(max_examples=150, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4)
        ),
        min_size=4,
        max_size=4,
        unique=True,
    ),
    st.tuples(st.integers(-8, 8), st.integers(-8, 8), st.integers(-8, 8)),
)
def test_orient_sign_total_consistency(quad, e):
    # Swapping any two arguments must flip the sign; exactness on a grid.
    pts = [np.array(p, dtype=float) for p in quad]
    s = orient3d_sign(*pts[0], *pts[1], *pts[2], *pts[3])
    assert s == exact_orient_fraction(*pts)
    s_swapped = orient3d_sign(*pts[1], *pts[0], *pts[2], *pts[3])
    assert s_swapped == -s
