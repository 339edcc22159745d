"""Free-space carving: visibility rays label tets, their boundary is the surface.

Every camera-to-point observation defines an open segment that must cross
empty space, so each tet it touches collects one unit of free-space
evidence.  A tet is FREE when its evidence counter reaches the threshold
``k`` (default 1) or when it touches a bounding-box corner (the unobserved
exterior); everything else is OCCUPIED.  The reconstructed surface is the
set of facets between an occupied tet and a free one, oriented so normals
point out of the occupied side.

Incremental maintenance: rays record the tet slots they traversed, and
each slot keeps a chain of the rays that crossed it.  When insertions or
point moves destroy tets, the rays whose footprints intersected the
destroyed region are replayed against the new triangulation; everything
else keeps its counters.  Chain entries are invalidated lazily by epoch,
so destruction itself costs nothing per ray.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .delaunay import IntegrityError, Triangulation


@dataclass(frozen=True)
class ReconstructionDelta:
    """Tet slots destroyed and created by one event, plus the slots of
    surviving tets whose FREE/OCCUPIED label flipped."""

    destroyed: tuple[int, ...] = ()
    created: tuple[int, ...] = ()
    flips: tuple[int, ...] = ()

    def is_empty(self) -> bool:
        return not (self.destroyed or self.created or self.flips)


@dataclass(frozen=True)
class SurfaceMesh:
    """Immutable snapshot of the carved surface.

    ``triangles`` indexes into ``vertices``; ``normals`` holds one unit
    vector per triangle pointing from the occupied side into free space.
    Texture fields are filled by the mesh serialization layer when a
    textured submesh is built; they stay None on raw snapshots.
    """

    version: int
    vertices: np.ndarray  # (n, 3) float64
    triangles: np.ndarray  # (m, 3) int32
    normals: np.ndarray  # (m, 3) float64
    uv: np.ndarray | None = None  # (n, 2) float64 in [0,1]^2
    image_ref: str | None = None

    def __post_init__(self):
        for arr in (self.vertices, self.triangles, self.normals):
            arr.setflags(write=False)
        if self.uv is not None:
            self.uv.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]


class _NetChange:
    """Folds per-operation destroyed/created slot lists into the net
    effect of a whole event: slots both created and destroyed inside the
    event vanish, slots destroyed and then recreated appear in both sets
    (the slot hosts a different tet afterwards)."""

    def __init__(self):
        self.destroyed: set[int] = set()
        self.created: set[int] = set()
        self.all_destroyed: list[int] = []

    def apply(self, tri: Triangulation) -> None:
        for t in tri.last_destroyed:
            self.all_destroyed.append(t)
            if t in self.created:
                self.created.discard(t)
            else:
                self.destroyed.add(t)
        for t in tri.last_created:
            self.created.add(t)


def _grow_1d(arr: np.ndarray, cap: int, fill) -> np.ndarray:
    out = np.full((cap,) + arr.shape[1:], fill, dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out


class CarvedLabeling:
    """Free-space evidence for one triangulation, plus the ray registry.

    Single-writer, like the triangulation it wraps.  All mutation goes
    through :meth:`integrate_keyframe`, :meth:`handle_point_update`,
    :meth:`handle_point_removal`, or :meth:`carve_ray`; surface snapshots
    from :meth:`extract_surface` are immutable and safe to share.
    """

    def __init__(self, tri: Triangulation, k: int = 1):
        if k < 1:
            raise ValueError("evidence threshold k must be >= 1")
        self.tri = tri
        self.k = int(k)

        cap_t = tri.tet_capacity
        self.counters = np.zeros(cap_t, dtype=np.int32)
        self.head = np.full(cap_t, -1, dtype=np.int64)
        self.forced = np.zeros(cap_t, dtype=np.uint8)
        self.free_state = np.zeros(cap_t, dtype=np.uint8)

        cap_r = 256
        self.ray_cam = np.zeros((cap_r, 3), dtype=np.float64)
        self.ray_tgt = np.zeros(cap_r, dtype=np.int32)
        self.ray_alive = np.zeros(cap_r, dtype=np.uint8)
        self.ray_epoch = np.zeros(cap_r, dtype=np.int32)
        self.rt_start = np.zeros(cap_r, dtype=np.int64)
        self.rt_len = np.zeros(cap_r, dtype=np.int32)
        self._rstamp = np.zeros(cap_r, dtype=np.int64)
        self._rsval = 0
        self.n_rays = 0

        self.rt_data = np.zeros(4096, dtype=np.int32)
        self.rt_top = 0
        self.ch_ray = np.zeros(4096, dtype=np.int32)
        self.ch_epoch = np.zeros(4096, dtype=np.int32)
        self.ch_next = np.zeros(4096, dtype=np.int64)
        self.ch_top = 0

        self.rays_by_kf: dict[int, list[int]] = {}
        self.rays_by_point: dict[int, list[int]] = {}
        self.vid_of_point: dict[int, int] = {}
        self.seen_keyframes: set[int] = set()
        self.surface_version = 0

        cap_v = tri.pts.shape[0]
        self._vmap = np.zeros(cap_v, dtype=np.int64)
        self._vstamp = np.zeros(cap_v, dtype=np.int64)
        self._vsval = 0

        self._queue = np.zeros(8192, dtype=np.int32)
        self._touched = np.zeros(4096, dtype=np.int32)
        self._out_tris = np.zeros((4096, 3), dtype=np.int32)
        self._out_vsl = np.zeros(4096, dtype=np.int64)

        self._set_forced(tri.alive_tets())
        self._scan_flips()  # establish the label baseline

    # -- state queries ---------------------------------------------------

    def is_free(self, t: int) -> bool:
        return bool(self.forced[t]) or int(self.counters[t]) >= self.k

    def counter_of(self, t: int) -> int:
        return int(self.counters[t])

    def free_tets(self) -> np.ndarray:
        """Slots of all alive FREE tets."""
        alive = self.tri.alive_tets()
        free = (self.forced[alive] == 1) | (self.counters[alive] >= self.k)
        return alive[free]

    def ray_footprint(self, rid: int) -> frozenset[int]:
        """Tet slots the ray traversed at its last walk."""
        s = int(self.rt_start[rid])
        return frozenset(int(x) for x in self.rt_data[s : s + int(self.rt_len[rid])])

    def live_rays(self) -> list[int]:
        return [r for r in range(self.n_rays) if self.ray_alive[r]]

    # -- capacity management ----------------------------------------------

    def _sync_capacity(self) -> None:
        cap_t = self.tri.tet_capacity
        if self.counters.shape[0] < cap_t:
            self.counters = _grow_1d(self.counters, cap_t, 0)
            self.head = _grow_1d(self.head, cap_t, -1)
            self.forced = _grow_1d(self.forced, cap_t, 0)
            self.free_state = _grow_1d(self.free_state, cap_t, 0)
        cap_v = self.tri.pts.shape[0]
        if self._vmap.shape[0] < cap_v:
            self._vmap = _grow_1d(self._vmap, cap_v, 0)
            self._vstamp = _grow_1d(self._vstamp, cap_v, 0)

    def _grow_rays(self) -> None:
        cap = self.ray_cam.shape[0] * 2
        self.ray_cam = _grow_1d(self.ray_cam, cap, 0.0)
        self.ray_tgt = _grow_1d(self.ray_tgt, cap, 0)
        self.ray_alive = _grow_1d(self.ray_alive, cap, 0)
        self.ray_epoch = _grow_1d(self.ray_epoch, cap, 0)
        self.rt_start = _grow_1d(self.rt_start, cap, 0)
        self.rt_len = _grow_1d(self.rt_len, cap, 0)
        self._rstamp = _grow_1d(self._rstamp, cap, 0)

    def _compact_rt(self, need: int) -> None:
        # Rewalks leak their old footprint segments; compaction copies the
        # live segment of every ray into a fresh arena.
        total = int(self.rt_len[: self.n_rays].sum())
        new = np.zeros(max(4096, 4 * (total + need)), dtype=np.int32)
        self.rt_top = int(
            K.compact_rt(self.n_rays, self.rt_start, self.rt_len, self.rt_data, new)
        )
        self.rt_data = new

    def _rebuild_chains(self, need: int) -> None:
        # The chains are exactly the inverted index of the live footprint
        # segments, so they can be rebuilt from scratch, shedding every
        # stale entry.  4x headroom keeps rebuilds off the steady-state
        # keyframe path.
        total = int(self.rt_len[: self.n_rays].sum())
        cap = max(4096, 4 * (total + need))
        self.ch_ray = np.zeros(cap, dtype=np.int32)
        self.ch_epoch = np.zeros(cap, dtype=np.int32)
        self.ch_next = np.zeros(cap, dtype=np.int64)
        self.ch_top = int(
            K.rebuild_chains(
                self.n_rays, self.ray_epoch, self.rt_start, self.rt_len,
                self.rt_data, self.head, self.ch_ray, self.ch_epoch, self.ch_next,
            )
        )

    # -- ray machinery -----------------------------------------------------

    def _alloc_ray(self, cam: np.ndarray, target: int, point_id: int) -> int:
        if self.n_rays >= self.ray_cam.shape[0]:
            self._grow_rays()
        rid = self.n_rays
        self.n_rays += 1
        self.ray_cam[rid] = cam
        self.ray_tgt[rid] = target
        self.ray_alive[rid] = 1
        self.ray_epoch[rid] = 0
        self.rt_start[rid] = 0
        self.rt_len[rid] = 0
        if point_id >= 0:
            self.rays_by_point.setdefault(point_id, []).append(rid)
        return rid

    def _walk_rays(self, ids: np.ndarray, decrement: bool) -> None:
        if ids.shape[0] == 0:
            return
        tri = self.tri
        start = 0
        while True:
            status, nxt, rt_top, ch_top, sval = K.carve_rays_batch(
                ids, start, 1 if decrement else 0,
                tri.pts, tri.tets, tri.neigh, tri.v2t,
                self.ray_cam, self.ray_tgt, self.ray_epoch,
                self.rt_start, self.rt_len, self.rt_data, self.rt_top,
                self.counters, self.head,
                self.ch_ray, self.ch_epoch, self.ch_next, self.ch_top,
                tri.stamp, tri.stamp2, tri._sval,
                self._queue, self._touched,
            )
            tri._sval = sval
            self.rt_top = rt_top
            self.ch_top = ch_top
            start = nxt
            if status == K.OK:
                return
            if status == K.GROW_SCRATCH:
                self._queue = np.zeros(self._queue.shape[0] * 2, dtype=np.int32)
                self._touched = np.zeros(self._touched.shape[0] * 2, dtype=np.int32)
            elif status == K.GROW_RT:
                self._compact_rt(self._touched.shape[0])
            elif status == K.GROW_CHAIN:
                self._rebuild_chains(self._touched.shape[0])
            else:
                raise IntegrityError(f"ray walk failed with kernel status {status}")

    def _affected_rays(self, destroyed: list[int]) -> np.ndarray:
        if not destroyed or self.n_rays == 0:
            return np.zeros(0, dtype=np.int64)
        self._rsval += 1
        dest = np.asarray(destroyed, dtype=np.int64)
        out = np.zeros(self.n_rays, dtype=np.int64)
        n = K.affected_rays(
            dest, self.head, self.ch_ray, self.ch_epoch, self.ch_next,
            self.ray_epoch, self.ray_alive, self._rstamp, self._rsval, out,
        )
        if n < 0:
            raise IntegrityError("affected-ray scan overflowed its output")
        return out[:n]

    def _set_forced(self, slots) -> None:
        slots = np.asarray(slots, dtype=np.int64)
        if slots.shape[0] == 0:
            return
        live = slots[self.tri.alive_t[slots] == 1]
        if live.shape[0]:
            self.forced[live] = (self.tri.tets[live] < 8).any(axis=1)

    def _scan_flips(self) -> np.ndarray:
        tri = self.tri
        out = np.zeros(max(1, tri.n_t), dtype=np.int64)
        n = K.scan_flips(tri.alive_t, tri.n_t, self.counters, self.forced,
                         self.k, self.free_state, out)
        return out[:n]

    def _finish_event(self, net: _NetChange) -> ReconstructionDelta:
        self._set_forced(sorted(net.created))
        changed = self._scan_flips()
        flips = tuple(int(t) for t in changed if int(t) not in net.created)
        return ReconstructionDelta(
            destroyed=tuple(sorted(net.destroyed)),
            created=tuple(sorted(net.created)),
            flips=flips,
        )

    # -- validation helpers --------------------------------------------------

    def _check_inside(self, p: np.ndarray, what: str) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise ValueError(f"{what} must be a finite 3-vector")
        if not (np.all(self.tri.box_min < p) and np.all(p < self.tri.box_max)):
            raise ValueError(f"{what} outside the bounding box")
        return p

    def _validate_new_points(self, new_pts: list[tuple[int, np.ndarray]]) -> None:
        # All-or-nothing: every position must be insertable before any
        # insertion happens, including pairwise collisions inside the batch.
        cell = self.tri._cell
        batch_cells: dict[tuple[int, int, int], list[np.ndarray]] = {}
        for pid, p in new_pts:
            hit = self.tri.nearby_vertex(p)
            if hit is not None:
                raise ValueError(
                    f"point {pid} lands within merge tolerance of vertex {hit}"
                )
            ci = tuple(int(np.floor(p[i] / cell)) for i in range(3))
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    for dk in (-1, 0, 1):
                        for q in batch_cells.get(
                            (ci[0] + di, ci[1] + dj, ci[2] + dk), ()
                        ):
                            if np.linalg.norm(q - p) <= self.tri.merge_tol:
                                raise ValueError(
                                    f"point {pid} collides with another new point"
                                )
            batch_cells.setdefault(ci, []).append(p)

    # -- public operations ----------------------------------------------------

    def carve_ray(self, camera_center, target: int, kf_id: int | None = None) -> frozenset[int]:
        """Register one visibility ray and return the tet slots it touched.

        The footprint is every alive tet whose closed hull meets the open
        segment from the camera to the target vertex's position; each one
        gains one unit of evidence.  A zero-length segment (camera exactly
        at the vertex) touches nothing and registers nothing.
        """
        cam = self._check_camera(camera_center)
        target = int(target)
        if (
            target < 8
            or target >= self.tri.n_v
            or not self.tri.alive_v[target]
        ):
            raise ValueError(f"target {target} is not a live finite vertex")
        if np.array_equal(cam, self.tri.pts[target]):
            return frozenset()
        self._sync_capacity()
        rid = self._alloc_ray(cam, target, self.tri.source_of(target))
        if kf_id is not None:
            self.rays_by_kf.setdefault(kf_id, []).append(rid)
        self._walk_rays(np.array([rid], dtype=np.int64), decrement=False)
        return self.ray_footprint(rid)

    def _check_camera(self, camera_center) -> np.ndarray:
        cam = np.asarray(camera_center, dtype=np.float64)
        if cam.shape != (3,) or not np.all(np.isfinite(cam)):
            raise ValueError("camera center must be a finite 3-vector")
        if not (np.all(self.tri.box_min <= cam) and np.all(cam <= self.tri.box_max)):
            raise ValueError("camera center outside the bounding box")
        return cam

    def integrate_keyframe(
        self,
        kf_id: int,
        camera_center,
        observations,
    ) -> ReconstructionDelta:
        """Fold one keyframe into the model.

        ``observations`` is an iterable of ``(point_id, position)`` pairs;
        unseen point ids are inserted into the triangulation (in id order),
        already-known ids keep their current position (their pair may carry
        ``None``).  One ray is carved per distinct observed point.  Rays
        whose footprints intersected tets destroyed by the insertions are
        replayed first, so counters stay exact.
        """
        kf_id = int(kf_id)
        if kf_id in self.seen_keyframes:
            raise ValueError(f"keyframe {kf_id} already integrated")
        cam = self._check_camera(camera_center)

        seen: dict[int, np.ndarray | None] = {}
        for pid, pos in observations:
            pid = int(pid)
            if pid not in seen:
                seen[pid] = None if pos is None else np.asarray(pos, dtype=np.float64)
        obs = sorted(seen.items())
        for pid, pos in obs:
            if pos is None and pid not in self.vid_of_point:
                raise ValueError(f"first observation of point {pid} needs a position")
        new_pts = [
            (pid, self._check_inside(pos, f"point {pid}"))
            for pid, pos in obs
            if pid not in self.vid_of_point
        ]
        self._validate_new_points(new_pts)
        self.seen_keyframes.add(kf_id)

        net = _NetChange()
        for pid, pos in new_pts:
            self.vid_of_point[pid] = self.tri.insert_point(pos, source_id=pid)
            net.apply(self.tri)
        self._sync_capacity()

        self._walk_rays(self._affected_rays(net.all_destroyed), decrement=True)

        new_rays = []
        for pid, _ in obs:
            vid = self.vid_of_point[pid]
            if np.array_equal(cam, self.tri.pts[vid]):
                continue  # zero-length observation carves nothing
            rid = self._alloc_ray(cam, vid, pid)
            self.rays_by_kf.setdefault(kf_id, []).append(rid)
            new_rays.append(rid)
        self._walk_rays(np.asarray(new_rays, dtype=np.int64), decrement=False)

        return self._finish_event(net)

    def handle_point_update(self, point_id: int, new_position) -> ReconstructionDelta:
        """Move a map point: remove + reinsert its vertex and replay every
        ray that targeted it or crossed the modified region."""
        point_id = int(point_id)
        if point_id not in self.vid_of_point:
            raise KeyError(f"unknown point id {point_id}")
        pos = self._check_inside(new_position, f"point {point_id}")
        vid = self.vid_of_point[point_id]
        hit = self.tri.nearby_vertex(pos)
        if hit is not None and hit != vid:
            raise ValueError(
                f"moved point {point_id} lands within merge tolerance of vertex {hit}"
            )

        net = _NetChange()
        self.tri.remove_point(vid)
        net.apply(self.tri)
        new_vid = self.tri.insert_point(pos, source_id=point_id)
        net.apply(self.tri)
        self.vid_of_point[point_id] = new_vid
        self._sync_capacity()

        targeting = [
            r for r in self.rays_by_point.get(point_id, ()) if self.ray_alive[r]
        ]
        if targeting:
            self.ray_tgt[np.asarray(targeting)] = new_vid
        affected = set(int(r) for r in self._affected_rays(net.all_destroyed))
        affected.update(targeting)
        self._walk_rays(
            np.asarray(sorted(affected), dtype=np.int64), decrement=True
        )
        return self._finish_event(net)

    def handle_point_removal(self, point_id: int) -> ReconstructionDelta:
        """Drop a map point: its rays are retracted (their evidence is
        removed) and its vertex is deleted from the triangulation."""
        point_id = int(point_id)
        if point_id not in self.vid_of_point:
            raise KeyError(f"unknown point id {point_id}")
        vid = self.vid_of_point.pop(point_id)

        rays = [r for r in self.rays_by_point.pop(point_id, ()) if self.ray_alive[r]]
        if rays:
            K.kill_rays(np.asarray(rays, dtype=np.int64), self.rt_start,
                        self.rt_len, self.rt_data, self.counters,
                        self.ray_epoch, self.ray_alive)

        net = _NetChange()
        self.tri.remove_point(vid)
        net.apply(self.tri)
        self._sync_capacity()
        self._walk_rays(self._affected_rays(net.all_destroyed), decrement=True)
        return self._finish_event(net)

    def extract_surface(self) -> SurfaceMesh:
        """Snapshot the boundary between occupied and free tets.

        Each facet is emitted once, wound so its normal points from the
        occupied tet into the free one.  Positions are copied: the snapshot
        is independent of later mutation.  Versions strictly increase.
        """
        tri = self.tri
        self._sync_capacity()
        while True:
            self._vsval += 1
            status, ntri, nv = K.extract_surface(
                tri.pts, tri.tets, tri.neigh, tri.alive_t, tri.n_t,
                self.counters, self.forced, self.k,
                self._vmap, self._vstamp, self._vsval,
                self._out_tris, self._out_vsl,
            )
            if status == K.OK:
                break
            self._out_tris = np.zeros(
                (self._out_tris.shape[0] * 2, 3), dtype=np.int32
            )
            self._out_vsl = np.zeros(self._out_vsl.shape[0] * 2, dtype=np.int64)

        vertices = tri.pts[self._out_vsl[:nv]].copy()
        triangles = self._out_tris[:ntri].copy()
        if ntri:
            e1 = vertices[triangles[:, 1]] - vertices[triangles[:, 0]]
            e2 = vertices[triangles[:, 2]] - vertices[triangles[:, 0]]
            normals = np.cross(e1, e2)
            normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        else:
            normals = np.zeros((0, 3), dtype=np.float64)
        self.surface_version += 1
        return SurfaceMesh(
            version=self.surface_version,
            vertices=vertices,
            triangles=triangles,
            normals=normals,
        )
