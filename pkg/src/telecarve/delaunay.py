"""Incremental 3D Delaunay triangulation over a fixed bounding box.

The vertex set always contains eight synthetic corner vertices (ids 0-7)
spanning the domain box, so every point of the domain lies in some tet and
every carving ray stays finite.  Finite (non-corner) vertices are inserted
by Bowyer-Watson cavity carving and removed by retriangulating the star
locally; both paths keep the structure exactly Delaunay under a symbolic
perturbation ordered by vertex id, so degenerate inputs (grids, cospherical
clusters) are deterministic and never produce flat tets.

Storage is struct-of-arrays (see :mod:`telecarve._kernels` for the layout
conventions); vertex and tet slots are allocated monotonically and never
reused, which is what makes the ids stable handles and keeps the carving
module's per-slot ray bookkeeping valid across mutations.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from .predicates import volumes6_scaled


class DuplicatePoint(Exception):
    """Raised when an inserted point lands within merge tolerance of an
    existing vertex.  ``existing`` is that vertex's id."""

    def __init__(self, existing: int):
        super().__init__(f"duplicate of vertex {existing}")
        self.existing = existing


class IntegrityError(RuntimeError):
    """Internal structure violated an invariant; state must be discarded."""


MERGE_TOL = 1e-7

# Kuhn decomposition of a box whose corners are indexed by the bit mask
# (x | y<<1 | z<<2): six tets sharing the 0-7 diagonal, one per monotone
# corner path, with vertex pairs swapped where needed so every stored
# tet is positively oriented.  This is the triangulation the id-ordered
# perturbation itself selects for these eight cospherical vertices, so
# the initial complex is already Delaunay under it.
_KUHN = ((0, 1, 3, 7), (0, 5, 1, 7), (0, 3, 2, 7),
         (0, 2, 6, 7), (0, 4, 5, 7), (0, 6, 4, 7))


def _grow(arr: np.ndarray, newcap: int) -> np.ndarray:
    out = np.zeros((newcap,) + arr.shape[1:], dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out


class Triangulation:
    """Mutable tetrahedralization; construct through :func:`init_bounding`.

    Single-writer: callers must not mutate concurrently with reads.
    After every mutation, ``last_destroyed`` / ``last_created`` hold the
    tet slots killed and born by that operation; the carving layer uses
    them to keep its per-slot state in step.
    """

    def __init__(self, box_min, box_max, *, _cap_v: int = 1024, _cap_t: int = 16384):
        box_min = np.asarray(box_min, dtype=np.float64)
        box_max = np.asarray(box_max, dtype=np.float64)
        if box_min.shape != (3,) or box_max.shape != (3,):
            raise ValueError("box corners must be 3-vectors")
        if not np.all(np.isfinite(box_min)) or not np.all(np.isfinite(box_max)):
            raise ValueError("box corners must be finite")
        if not np.all(box_min < box_max):
            raise ValueError("degenerate box: need box_min < box_max componentwise")
        self.box_min = box_min.copy()
        self.box_max = box_max.copy()

        cap_v = max(_cap_v, 16)
        self.pts = np.zeros((cap_v, 3), dtype=np.float64)
        self.src = np.full(cap_v, -1, dtype=np.int64)
        self.pid = np.zeros(cap_v, dtype=np.int64)
        self.alive_v = np.zeros(cap_v, dtype=np.uint8)
        self.v2t = np.full(cap_v, -1, dtype=np.int32)
        for i in range(8):
            self.pts[i, 0] = box_max[0] if (i & 1) else box_min[0]
            self.pts[i, 1] = box_max[1] if (i & 2) else box_min[1]
            self.pts[i, 2] = box_max[2] if (i & 4) else box_min[2]
            self.pid[i] = i
            self.alive_v[i] = 1
        self.n_v = 8

        cap_t = max(_cap_t, 64)
        self.tets = np.zeros((cap_t, 4), dtype=np.int32)
        self.neigh = np.full((cap_t, 4), -1, dtype=np.int32)
        self.alive_t = np.zeros(cap_t, dtype=np.uint8)
        self.stamp = np.zeros(cap_t, dtype=np.int64)
        self.stamp2 = np.zeros(cap_t, dtype=np.int64)
        for t, quad in enumerate(_KUHN):
            self.tets[t] = quad
            self.alive_t[t] = 1
        self.n_t = 6
        self._wire_initial_adjacency()
        for t in range(6):
            for v in self.tets[t]:
                self.v2t[v] = t

        self.free_tets: list[int] = []
        self.epoch = 0
        self.merge_tol = MERGE_TOL
        self.last_destroyed: list[int] = []
        self.last_created: list[int] = list(range(6))

        self._sval = 0
        self._hint = 0
        self._cell = 1e-7
        self._hash: dict[tuple[int, int, int], list[int]] = {}

        self._cav = np.zeros(4096, dtype=np.int32)
        self._bnd_t = np.zeros(4096, dtype=np.int32)
        self._bnd_f = np.zeros(4096, dtype=np.int32)
        self._ek = np.full(1 << 14, -1, dtype=np.int64)
        self._ev = np.zeros(1 << 14, dtype=np.int64)
        self._loc = np.zeros(1024, dtype=np.int32)
        self._star = np.zeros(8192, dtype=np.int32)

    # -- construction helpers ------------------------------------------------

    def _wire_initial_adjacency(self) -> None:
        facets: dict[tuple[int, int, int], tuple[int, int]] = {}
        for t in range(self.n_t):
            for i in range(4):
                tri = tuple(sorted(int(self.tets[t, j]) for j in range(4) if j != i))
                if tri in facets:
                    ot, oi = facets.pop(tri)
                    self.neigh[t, i] = ot
                    self.neigh[ot, oi] = t
                else:
                    facets[tri] = (t, i)
        # Leftovers are the box hull triangles; they have no neighbour.

    def _next_stamp(self) -> int:
        self._sval += 1
        return self._sval

    def _grow_tets(self, need: int) -> None:
        cap = self.tets.shape[0]
        while cap < need:
            cap *= 2
        self.tets = _grow(self.tets, cap)
        neigh = np.full((cap, 4), -1, dtype=np.int32)
        neigh[: self.neigh.shape[0]] = self.neigh
        self.neigh = neigh
        self.alive_t = _grow(self.alive_t, cap)
        self.stamp = _grow(self.stamp, cap)
        self.stamp2 = _grow(self.stamp2, cap)

    def _grow_verts(self, need: int) -> None:
        cap = self.pts.shape[0]
        while cap < need:
            cap *= 2
        self.pts = _grow(self.pts, cap)
        src = np.full(cap, -1, dtype=np.int64)
        src[: self.src.shape[0]] = self.src
        self.src = src
        self.pid = _grow(self.pid, cap)
        self.alive_v = _grow(self.alive_v, cap)
        v2t = np.full(cap, -1, dtype=np.int32)
        v2t[: self.v2t.shape[0]] = self.v2t
        self.v2t = v2t

    # -- spatial hash for merge tolerance ------------------------------------

    def _cell_of(self, p) -> tuple[int, int, int]:
        c = self._cell
        return (int(np.floor(p[0] / c)), int(np.floor(p[1] / c)), int(np.floor(p[2] / c)))

    def _nearest_within_tol(self, p) -> int:
        ci, cj, ck = self._cell_of(p)
        best = -1
        best_d = np.inf
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                for dk in (-1, 0, 1):
                    for v in self._hash.get((ci + di, cj + dj, ck + dk), ()):
                        d = float(np.linalg.norm(self.pts[v] - p))
                        if d < best_d or (d == best_d and v < best):
                            best_d = d
                            best = v
        if best >= 0 and best_d <= self.merge_tol:
            return best
        return -1

    def _hash_add(self, v: int) -> None:
        self._hash.setdefault(self._cell_of(self.pts[v]), []).append(v)

    def _hash_remove(self, v: int) -> None:
        cell = self._cell_of(self.pts[v])
        bucket = self._hash.get(cell)
        if bucket and v in bucket:
            bucket.remove(v)
            if not bucket:
                del self._hash[cell]

    # -- queries --------------------------------------------------------------

    @property
    def tet_capacity(self) -> int:
        return self.tets.shape[0]

    def alive_tets(self) -> np.ndarray:
        return np.nonzero(self.alive_t[: self.n_t])[0]

    def finite_vertices(self) -> np.ndarray:
        ids = np.nonzero(self.alive_v[: self.n_v])[0]
        return ids[ids >= 8]

    def point_of(self, v: int) -> np.ndarray:
        return self.pts[v].copy()

    def source_of(self, v: int) -> int:
        return int(self.src[v])

    def is_corner_tet(self, t: int) -> bool:
        return bool((self.tets[t] < 8).any())

    def nearby_vertex(self, p) -> int | None:
        """Live vertex within merge tolerance of p, or None.

        Lets callers validate a batch of candidate positions up front so
        a multi-point operation can fail before mutating anything.
        """
        v = self._nearest_within_tol(np.asarray(p, dtype=np.float64))
        return None if v < 0 else v

    def locate(self, p) -> int:
        """Lowest-id tet whose closed hull contains p."""
        p = np.asarray(p, dtype=np.float64)
        if not (np.all(self.box_min <= p) and np.all(p <= self.box_max)):
            raise ValueError("point outside bounding box")
        t0 = K.walk_locate(self.pts, self.tets, self.neigh, self._hint,
                           float(p[0]), float(p[1]), float(p[2]))
        if t0 == -1:
            raise ValueError("point outside bounding box")
        if t0 == -2:
            raise IntegrityError("point location walk did not terminate")
        n = self._locate_all(t0, p)
        return int(min(self._loc[:n]))

    def _locate_all(self, t0: int, p) -> int:
        while True:
            n = K.collect_containing(
                self.pts, self.tets, self.neigh, t0,
                float(p[0]), float(p[1]), float(p[2]),
                self._loc, self.stamp2, self._next_stamp(),
            )
            if n >= 0:
                return n
            self._loc = np.zeros(self._loc.shape[0] * 2, dtype=np.int32)

    # -- mutation -------------------------------------------------------------

    def insert_point(self, p, source_id: int = -1, *, _pid: int | None = None) -> int:
        """Insert a point; returns the new vertex id.

        Raises DuplicatePoint with the existing id when p is within merge
        tolerance of a live vertex, and ValueError when p is not strictly
        inside the bounding box.
        """
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise ValueError("point must be a finite 3-vector")
        if not (np.all(self.box_min < p) and np.all(p < self.box_max)):
            raise ValueError("point outside bounding box")
        dup = self._nearest_within_tol(p)
        if dup >= 0:
            raise DuplicatePoint(dup)

        if self.n_v + 1 > self.pts.shape[0]:
            self._grow_verts(self.n_v + 1)
        slot = self.n_v
        self.pts[slot] = p
        self.src[slot] = source_id
        self.pid[slot] = slot if _pid is None else _pid
        self.alive_v[slot] = 1

        while True:
            status, n_cav, n_new = K.bw_insert(
                self.pts, self.pid, self.tets, self.neigh, self.alive_t, self.v2t,
                self.n_t, slot, self._hint,
                self.stamp, self._next_stamp(),
                self._cav, self._bnd_t, self._bnd_f,
                self._ek, self._ev,
            )
            if status == K.OK:
                break
            if status == K.GROW_CAVITY:
                self._cav = np.zeros(self._cav.shape[0] * 2, dtype=np.int32)
            elif status == K.GROW_BOUNDARY:
                n = self._bnd_t.shape[0] * 2
                self._bnd_t = np.zeros(n, dtype=np.int32)
                self._bnd_f = np.zeros(n, dtype=np.int32)
            elif status == K.GROW_EDGE_TABLE:
                n = self._ek.shape[0] * 2
                self._ek = np.full(n, -1, dtype=np.int64)
                self._ev = np.zeros(n, dtype=np.int64)
            elif status == K.GROW_TETS:
                self._grow_tets(self.n_t + n_new)
            elif status == K.WALK_OUTSIDE:
                self.alive_v[slot] = 0
                raise ValueError("point outside bounding box")
            else:
                self.alive_v[slot] = 0
                raise IntegrityError(f"insert failed with kernel status {status}")

        destroyed = [int(x) for x in self._cav[:n_cav]]
        created = list(range(self.n_t, self.n_t + n_new))
        self.n_t += n_new
        self.n_v += 1
        self._hint = created[0]
        self._hash_add(slot)
        self.free_tets.extend(destroyed)
        self.epoch += 1
        self.last_destroyed = destroyed
        self.last_created = created
        return slot

    def remove_point(self, v: int) -> None:
        """Remove a finite vertex and retriangulate its star.

        The star cavity is refilled with the Delaunay tets of its link
        vertices, computed in a scratch triangulation that shares this
        one's corner vertices and perturbation ids so the two structures
        decide degeneracies identically.
        """
        v = int(v)
        if v < 8:
            raise ValueError("cannot remove a bounding-box vertex")
        if v < 0 or v >= self.n_v or not self.alive_v[v]:
            raise KeyError(f"unknown vertex id {v}")

        star = self._collect_star(v)
        star_set = set(star)
        link: set[int] = set()
        for t in star:
            for j in range(4):
                u = int(self.tets[t, j])
                if u != v:
                    link.add(u)

        # Scratch triangulation over the same box corners; finite link
        # vertices keep their global perturbation ids.
        local = Triangulation(self.box_min, self.box_max,
                              _cap_v=len(link) + 16, _cap_t=max(64, 16 * len(link)))
        glob_of = {i: i for i in range(8)}
        for u in sorted(w for w in link if w >= 8):
            lu = local.insert_point(self.pts[u], _pid=int(self.pid[u]))
            glob_of[lu] = u

        # Hole boundary: each star tet contributes its facet opposite v.
        hole: dict[tuple[int, int, int], tuple[int, int]] = {}
        for t in star:
            vi = int(np.nonzero(self.tets[t] == v)[0][0])
            tri = tuple(sorted(int(self.tets[t, j]) for j in range(4) if j != vi))
            hole[tri] = (t, int(self.neigh[t, vi]))

        # Select scratch tets whose centroid lies inside the old star.
        star_pts = self.pts[self.tets[star]].astype(np.float64)
        mask = np.zeros(local.n_t, dtype=np.uint8)
        K.select_fill(local.pts, local.tets, local.alive_t, local.n_t,
                      star_pts, mask)
        fill = [
            tuple(glob_of[int(q)] for q in local.tets[lt])
            for lt in range(local.n_t)
            if mask[lt]
        ]

        # The fill must tile the cavity exactly; compare signed volumes
        # as integers on one shared scale so the sums are exact.
        part = sorted({q for quad in fill for q in quad} | link | {v})
        idx = {g: i for i, g in enumerate(part)}
        axes = (
            [self.pts[g, 0] for g in part],
            [self.pts[g, 1] for g in part],
            [self.pts[g, 2] for g in part],
        )
        star_quads = [tuple(idx[int(q)] for q in self.tets[t]) for t in star]
        fill_quads = [tuple(idx[q] for q in quad) for quad in fill]
        vols = volumes6_scaled(axes, star_quads + fill_quads)
        if sum(vols[: len(star_quads)]) != sum(vols[len(star_quads):]):
            raise IntegrityError("star refill does not tile the removal cavity")

        # Glue: allocate global slots, wire interior facets pairwise and
        # boundary facets to the old outside neighbours.
        if self.n_t + len(fill) > self.tets.shape[0]:
            self._grow_tets(self.n_t + len(fill))
        created = list(range(self.n_t, self.n_t + len(fill)))
        pending: dict[tuple[int, int, int], tuple[int, int]] = {}
        for slot, quad in zip(created, fill):
            self.tets[slot] = quad
            self.alive_t[slot] = 1
            for j in range(4):
                self.v2t[quad[j]] = slot
            for i in range(4):
                tri = tuple(sorted(quad[j] for j in range(4) if j != i))
                if tri in hole:
                    t_old, nb = hole.pop(tri)
                    self.neigh[slot, i] = nb
                    if nb >= 0:
                        for j in range(4):
                            if self.neigh[nb, j] == t_old:
                                self.neigh[nb, j] = slot
                                break
                elif tri in pending:
                    oslot, oi = pending.pop(tri)
                    self.neigh[slot, i] = oslot
                    self.neigh[oslot, oi] = slot
                else:
                    pending[tri] = (slot, i)
        if hole or pending:
            raise IntegrityError("star refill boundary does not close")

        for t in star:
            self.alive_t[t] = 0
        self.alive_v[v] = 0
        self._hash_remove(v)
        self.n_t += len(fill)
        self._hint = created[0] if created else int(self.alive_tets()[0])
        self.free_tets.extend(int(t) for t in star)
        self.epoch += 1
        self.last_destroyed = [int(t) for t in star]
        self.last_created = created

    def _collect_star(self, v: int) -> list[int]:
        t0 = int(self.v2t[v])
        if t0 < 0 or not self.alive_t[t0] or v not in self.tets[t0]:
            raise IntegrityError(f"stale vertex-to-tet pointer for vertex {v}")
        while True:
            n = K.collect_star(self.tets, self.neigh, v, t0,
                               self._star, self.stamp, self._next_stamp())
            if n >= 0:
                return [int(x) for x in self._star[:n]]
            self._star = np.zeros(self._star.shape[0] * 2, dtype=np.int32)

def init_bounding(box_min, box_max) -> Triangulation:
    """Triangulation of the eight corners of the given box.

    The caller chooses the box; the surface engine scales it to 10x the
    scene diameter so all observed geometry stays strictly interior.
    """
    return Triangulation(box_min, box_max)
