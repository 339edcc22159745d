"""Simulated SLAM frontend: keyframe/point event streams for the carver.

Stands in for a live tracking system. Produces the same event vocabulary a
real pipeline would: new keyframes observing map points, bundle-adjustment
position updates, and point removals. Streams come from either a synthetic
generator (ray-cast sampling of ground-truth meshes) or a scene-stream text
file.

Scene-stream format, one whitespace-separated ASCII record per line,
'#' starts a comment:

    KF  <id> <tx> <ty> <tz> <qx> <qy> <qz> <qw> <fx> <fy> <cx> <cy> <w> <h> [image_path]
    PT  <id> <x> <y> <z>
    OBS <kf_id> <pt_id>
    UPD <pt_id> <x> <y> <z>
    DEL <pt_id>

A PT line declares a point position; the first OBS naming it folds it into
that keyframe's event. DEL retracts a point; producers that never model
removals simply never emit it. Floats are written with shortest round-trip
precision and poses are canonicalized through their quaternion, so
serialize/load is lossless for generated streams.

Conventions: right-handed world frame, meters, camera looks down +Z in its
own frame.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .geometry import look_at, quat_to_rot, rot_to_quat

DEFAULT_WINDOW = 50
DEFAULT_HFOV = 1.57


class StreamFormatError(ValueError):
    """A scene-stream file violated the line grammar or its referential rules."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _frozen(a, shape=None) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    if shape is not None and out.shape != shape:
        raise ValueError(f"expected shape {shape}, got {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def hfov(self) -> float:
        """Horizontal field of view in radians."""
        return 2.0 * math.atan(self.width / (2.0 * self.fx))

    @classmethod
    def default(cls, width: int = 640, height: int = 480,
                hfov: float = DEFAULT_HFOV) -> "CameraIntrinsics":
        fx = width / (2.0 * math.tan(hfov / 2.0))
        return cls(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0,
                   width=width, height=height)


@dataclass(frozen=True, eq=False)
class Pose:
    """Camera pose: rotation maps camera to world, translation is the
    camera center in world coordinates."""

    rotation: np.ndarray
    translation: np.ndarray
    _quat: tuple | None = None

    def __post_init__(self):
        r = _frozen(self.rotation, (3, 3))
        t = _frozen(self.translation, (3,))
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        if not math.isclose(float(np.linalg.det(r)), 1.0, abs_tol=1e-9):
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_quat(cls, qx: float, qy: float, qz: float, qw: float,
                  translation) -> "Pose":
        return cls(quat_to_rot(qx, qy, qz, qw), translation,
                   (float(qx), float(qy), float(qz), float(qw)))

    @classmethod
    def looking_at(cls, eye, target, up=(0.0, 0.0, 1.0)) -> "Pose":
        """Pose at eye facing target, canonicalized through its quaternion
        so it serializes losslessly."""
        return cls(look_at(eye, target, up), eye).canonical()

    def quaternion(self) -> tuple[float, float, float, float]:
        return self._quat if self._quat is not None else rot_to_quat(self.rotation)

    def canonical(self) -> "Pose":
        """Equivalent pose whose rotation went through the quaternion
        representation, making matrix bits a pure function of the quat."""
        q = rot_to_quat(self.rotation)
        return Pose.from_quat(*q, self.translation)

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[:, 2]

    def world_to_camera(self, p) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p, dtype=np.float64) - self.translation)

    def __eq__(self, other):
        return (
            isinstance(other, Pose)
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )


@dataclass(eq=False)
class MapPoint:
    """A sparse map landmark and the keyframes that observed it."""

    id: int
    position: np.ndarray
    observers: set[int]

    def __post_init__(self):
        self.position = np.array(self.position, dtype=np.float64)
        if self.position.shape != (3,) or not np.isfinite(self.position).all():
            raise ValueError("position must be a finite 3-vector")
        self.observers = set(self.observers)

    def __eq__(self, other):
        return (
            isinstance(other, MapPoint)
            and self.id == other.id
            and np.array_equal(self.position, other.position)
            and self.observers == other.observers
        )


@dataclass(frozen=True, eq=False)
class Keyframe:
    id: int
    pose: Pose
    intrinsics: CameraIntrinsics
    observations: frozenset[int]
    image_ref: str | None = None

    def __eq__(self, other):
        return (
            isinstance(other, Keyframe)
            and self.id == other.id
            and self.pose == other.pose
            and self.intrinsics == other.intrinsics
            and self.observations == other.observations
            and self.image_ref == other.image_ref
        )


@dataclass(frozen=True, eq=False)
class NewKeyframe:
    """A keyframe entered the map; new_points are the landmarks it
    introduced (first observations), in creation order."""

    keyframe: Keyframe
    new_points: tuple[MapPoint, ...]

    def __eq__(self, other):
        return (
            isinstance(other, NewKeyframe)
            and self.keyframe == other.keyframe
            and self.new_points == other.new_points
        )


@dataclass(frozen=True, eq=False)
class PointUpdate:
    """Bundle adjustment moved a landmark."""

    point_id: int
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen(self.position, (3,)))

    def __eq__(self, other):
        return (
            isinstance(other, PointUpdate)
            and self.point_id == other.point_id
            and np.array_equal(self.position, other.position)
        )


@dataclass(frozen=True)
class PointRemoval:
    """A landmark was culled from the map."""

    point_id: int


FrontendEvent = Union[NewKeyframe, PointUpdate, PointRemoval]


def project_pixel(pose: Pose, intr: CameraIntrinsics, p) -> tuple[float, float, float]:
    """Project a world point; returns (u, v, depth) in pixels and meters."""
    q = pose.world_to_camera(p)
    if q[2] <= 0.0:
        return math.nan, math.nan, float(q[2])
    return (
        float(intr.fx * q[0] / q[2] + intr.cx),
        float(intr.fy * q[1] / q[2] + intr.cy),
        float(q[2]),
    )


# -- scene state ---------------------------------------------------------------


class StreamState:
    """Folds a frontend event stream into the current map."""

    def __init__(self):
        self.keyframes: list[Keyframe] = []
        self.points: dict[int, MapPoint] = {}

    @classmethod
    def replay(cls, events: Iterable[FrontendEvent]) -> "StreamState":
        state = cls()
        for ev in events:
            state.apply(ev)
        return state

    def apply(self, event: FrontendEvent) -> None:
        if isinstance(event, NewKeyframe):
            kf = event.keyframe
            if self.keyframes and kf.id <= self.keyframes[-1].id:
                raise ValueError(f"keyframe id {kf.id} does not increase")
            for mp in event.new_points:
                if mp.id in self.points:
                    raise ValueError(f"point id {mp.id} already exists")
                self.points[mp.id] = MapPoint(mp.id, mp.position, set(mp.observers))
            for pid in kf.observations:
                if pid not in self.points:
                    raise ValueError(f"keyframe {kf.id} observes unknown point {pid}")
                self.points[pid].observers.add(kf.id)
            self.keyframes.append(kf)
        elif isinstance(event, PointUpdate):
            if event.point_id not in self.points:
                raise ValueError(f"update of unknown point {event.point_id}")
            self.points[event.point_id].position = np.array(event.position)
        elif isinstance(event, PointRemoval):
            if event.point_id not in self.points:
                raise ValueError(f"removal of unknown point {event.point_id}")
            del self.points[event.point_id]
        else:
            raise TypeError(f"not a frontend event: {event!r}")


def windowed_observations(state: StreamState, window: int = DEFAULT_WINDOW) -> set[int]:
    """Ids of live points observed by any of the most recent `window` keyframes."""
    if window < 1:
        raise ValueError("window must be at least 1")
    out: set[int] = set()
    for kf in state.keyframes[-window:]:
        out |= kf.observations
    return {pid for pid in out if pid in state.points}


# -- synthetic generation ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """Ground truth: one or more closed triangle meshes (vertices, triangles)."""

    meshes: tuple[tuple[np.ndarray, np.ndarray], ...]

    @classmethod
    def from_mesh(cls, vertices, triangles) -> "SceneSpec":
        return cls(((np.asarray(vertices, dtype=np.float64),
                     np.asarray(triangles, dtype=np.int32)),))

    def combined(self) -> tuple[np.ndarray, np.ndarray]:
        verts, tris, base = [], [], 0
        for v, t in self.meshes:
            verts.append(np.asarray(v, dtype=np.float64))
            tris.append(np.asarray(t, dtype=np.int64) + base)
            base += len(v)
        if not verts:
            raise ValueError("scene has no meshes")
        return np.vstack(verts), np.vstack(tris)


# Fixed irrational-ish direction so parity rays never graze axis-aligned edges.
_PARITY_DIR = np.array([0.5773502691896258, 0.21132486540518713, 0.7886751345948129])


def point_in_mesh(vertices: np.ndarray, triangles: np.ndarray, p) -> bool:
    """Crossing-parity containment test for a closed mesh."""
    o = np.asarray(p, dtype=np.float64)
    a = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - a
    e2 = vertices[triangles[:, 2]] - a
    pvec = np.cross(_PARITY_DIR, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-12
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = o - a
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = np.einsum("j,ij->i", _PARITY_DIR, qvec) * inv
    t = np.einsum("ij,ij->i", e2, qvec) * inv
    hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 1e-12)
    return bool(hit.sum() % 2 == 1)


def _first_hits(origin, dirs, vertices, triangles):
    """Nearest hit of every ray (one origin, many directions) against a mesh.

    Returns (t, triangle index) arrays; misses get (inf, -1). Chunked so the
    broadcast stays within a fixed memory budget.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(dirs, dtype=np.float64)
    a = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - a
    e2 = vertices[triangles[:, 2]] - a
    tvec = o - a
    qvec = np.cross(tvec, e1)
    tnum = np.einsum("ij,ij->i", e2, qvec)
    n, m = len(d), len(triangles)
    out_t = np.full(n, np.inf)
    out_i = np.full(n, -1, dtype=np.int64)
    if m == 0:
        return out_t, out_i
    step = max(1, 1_000_000 // m)
    for s in range(0, n, step):
        dd = d[s:s + step]
        pvec = np.cross(dd[:, None, :], e2[None, :, :])
        det = np.einsum("mj,bmj->bm", e1, pvec)
        ok = np.abs(det) > 1e-12
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        u = np.einsum("mj,bmj->bm", tvec, pvec) * inv
        v = np.einsum("bj,mj->bm", dd, qvec) * inv
        t = tnum[None, :] * inv
        hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 1e-12)
        t = np.where(hit, t, np.inf)
        j = np.argmin(t, axis=1)
        rows = np.arange(len(dd))
        tb = t[rows, j]
        out_t[s:s + len(dd)] = tb
        out_i[s:s + len(dd)] = np.where(np.isfinite(tb), j, -1)
    return out_t, out_i


def _project_many(pose: Pose, intr: CameraIntrinsics, pts: np.ndarray):
    """(u, v, depth) arrays for world points; u/v are NaN behind the camera."""
    q = (pts - pose.translation) @ pose.rotation  # row-wise R^T (p - t)
    z = q[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(z > 0, intr.fx * q[:, 0] / z + intr.cx, np.nan)
        v = np.where(z > 0, intr.fy * q[:, 1] / z + intr.cy, np.nan)
    return u, v, z


def _in_view_mask(pose, intr, pts) -> np.ndarray:
    u, v, z = _project_many(pose, intr, pts)
    with np.errstate(invalid="ignore"):
        return (z > 0) & (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)


def orbit_poses(center, radius: float, count: int,
                heights: Sequence[float] = (1.0, 2.0),
                start_angle: float = 0.0) -> list[Pose]:
    """Poses on a circle around center, alternating through `heights`,
    all looking at center."""
    c = np.asarray(center, dtype=np.float64)
    out = []
    for i in range(count):
        ang = start_angle + 2.0 * math.pi * i / max(count, 1)
        h = heights[i % len(heights)]
        eye = c + np.array([radius * math.cos(ang), radius * math.sin(ang), h])
        out.append(Pose.looking_at(eye, c))
    return out


def synth_scene(
    scene_spec: SceneSpec,
    trajectory_spec: Sequence[Pose],
    noise_sigma: float,
    seed: int,
    *,
    intrinsics: CameraIntrinsics | None = None,
    points_per_keyframe: int = 300,
    ba_fraction: float = 0.05,
    ba_sigma: float = 0.005,
    ba_interval: int = 4,
    window: int = DEFAULT_WINDOW,
    image_refs: Sequence[str | None] | None = None,
) -> list[FrontendEvent]:
    """Generate a deterministic event stream by ray-casting a ground-truth scene.

    Each keyframe samples up to points_per_keyframe new surface points
    through uniformly random pixels (first ray hit wins), perturbs them by
    isotropic Gaussian noise_sigma, and re-observes every still-visible,
    unoccluded point introduced within the last `window` keyframes. Every
    ba_interval keyframes, a ba_fraction share of window points is jittered
    by ba_sigma and emitted as PointUpdate events.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    if window < 1:
        raise ValueError("window must be at least 1")
    if not 0.0 <= ba_fraction <= 1.0:
        raise ValueError("ba_fraction must be in [0, 1]")
    intr = intrinsics if intrinsics is not None else CameraIntrinsics.default()
    poses = [p.canonical() for p in trajectory_spec]
    vertices, triangles = scene_spec.combined()
    for i, pose in enumerate(poses):
        for mv, mt in scene_spec.meshes:
            if point_in_mesh(np.asarray(mv, float), np.asarray(mt), pose.translation):
                raise ValueError(f"trajectory pose {i} lies inside a scene mesh")

    rng = np.random.default_rng(seed)
    events: list[FrontendEvent] = []
    positions: dict[int, np.ndarray] = {}
    recent: deque[tuple[int, frozenset[int]]] = deque(maxlen=window)
    next_pid = 0

    for kf_id, pose in enumerate(poses):
        cam = pose.translation
        hits: list[np.ndarray] = []
        attempts = 0
        budget = max(64 * points_per_keyframe, 4096)
        while len(hits) < points_per_keyframe and attempts < budget:
            # Batch size adapts to the observed hit rate so small targets
            # still fill the requested count within the attempt budget.
            need = points_per_keyframe - len(hits)
            rate = (len(hits) / attempts) if attempts else 1.0
            batch = min(math.ceil(need / max(rate, 0.02)), budget - attempts)
            u = rng.uniform(0.0, intr.width, batch)
            v = rng.uniform(0.0, intr.height, batch)
            dirs_cam = np.column_stack(
                [(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones(batch)]
            )
            dirs = dirs_cam @ pose.rotation.T
            t, idx = _first_hits(cam, dirs, vertices, triangles)
            good = idx >= 0
            hits.extend(cam + t[good, None] * dirs[good])
            attempts += batch
        del hits[points_per_keyframe:]

        new_ids: list[int] = []
        new_points: list[MapPoint] = []
        if hits:
            raw = np.asarray(hits)
            noisy = raw + rng.normal(0.0, noise_sigma, raw.shape)
            # Noise can push a sample out of view; the keyframe only keeps
            # observations that still project into its own image.
            keep = _in_view_mask(pose, intr, noisy)
            for p in noisy[keep]:
                pid = next_pid
                next_pid += 1
                positions[pid] = p
                new_ids.append(pid)
                new_points.append(MapPoint(pid, p, {kf_id}))

        # Re-observe window points that are in view and not occluded by the
        # ground truth (ray from the camera reaches the stored position).
        window_ids = sorted(set().union(*(obs for _, obs in recent))) if recent else []
        window_ids = [pid for pid in window_ids if pid in positions]
        reobserved: list[int] = []
        if window_ids:
            pts = np.array([positions[pid] for pid in window_ids])
            vis = _in_view_mask(pose, intr, pts)
            if vis.any():
                rel = pts[vis] - cam
                dist = np.linalg.norm(rel, axis=1)
                t, _ = _first_hits(cam, rel, vertices, triangles)
                clear = t >= dist * (1.0 - 1e-9)
                chosen = np.flatnonzero(vis)[clear]
                reobserved = [window_ids[j] for j in chosen]

        obs = frozenset(new_ids) | frozenset(reobserved)
        if not obs:
            warnings.warn(f"keyframe {kf_id} observes nothing", stacklevel=2)
        image_ref = image_refs[kf_id] if image_refs is not None else None
        kf = Keyframe(kf_id, pose, intr, obs, image_ref)
        events.append(NewKeyframe(kf, tuple(new_points)))
        recent.append((kf_id, obs))

        if ba_interval > 0 and (kf_id + 1) % ba_interval == 0 and ba_fraction > 0:
            cands = sorted(set().union(*(o for _, o in recent)))
            n_move = int(round(ba_fraction * len(cands)))
            if n_move > 0:
                picked = rng.choice(len(cands), size=n_move, replace=False)
                for j in np.sort(picked):
                    pid = cands[int(j)]
                    moved = positions[pid] + rng.normal(0.0, ba_sigma, 3)
                    positions[pid] = moved
                    events.append(PointUpdate(pid, moved))
    return events


# -- serialization ------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def save_stream(events: Iterable[FrontendEvent], path) -> None:
    """Write events in the scene-stream format (lossless float round-trip).

    Image paths must not contain whitespace; the format is space-separated.
    """
    with open(path, "w", encoding="ascii") as f:
        for ev in events:
            if isinstance(ev, NewKeyframe):
                kf = ev.keyframe
                q = kf.pose.quaternion()
                t = kf.pose.translation
                intr = kf.intrinsics
                fields = [
                    "KF", str(kf.id),
                    _fmt(t[0]), _fmt(t[1]), _fmt(t[2]),
                    _fmt(q[0]), _fmt(q[1]), _fmt(q[2]), _fmt(q[3]),
                    _fmt(intr.fx), _fmt(intr.fy), _fmt(intr.cx), _fmt(intr.cy),
                    str(intr.width), str(intr.height),
                ]
                if kf.image_ref is not None:
                    if any(ch.isspace() for ch in kf.image_ref):
                        raise ValueError("image_ref must not contain whitespace")
                    fields.append(kf.image_ref)
                f.write(" ".join(fields) + "\n")
                seen = set()
                for mp in ev.new_points:
                    p = mp.position
                    f.write(f"PT {mp.id} {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}\n")
                    f.write(f"OBS {kf.id} {mp.id}\n")
                    seen.add(mp.id)
                for pid in sorted(kf.observations - seen):
                    f.write(f"OBS {kf.id} {pid}\n")
            elif isinstance(ev, PointUpdate):
                p = ev.position
                f.write(f"UPD {ev.point_id} {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}\n")
            elif isinstance(ev, PointRemoval):
                f.write(f"DEL {ev.point_id}\n")
            else:
                raise TypeError(f"not a frontend event: {ev!r}")


class _PendingKeyframe:
    __slots__ = ("kf_id", "pose", "intr", "image_ref", "obs", "new_points")

    def __init__(self, kf_id, pose, intr, image_ref):
        self.kf_id = kf_id
        self.pose = pose
        self.intr = intr
        self.image_ref = image_ref
        self.obs: set[int] = set()
        self.new_points: list[MapPoint] = []


def load_trajectory(path) -> list[FrontendEvent]:
    """Parse a scene-stream file into an event list (file order).

    Raises StreamFormatError with the offending line number for grammar
    violations, and names the point id for referential ones (unknown OBS/UPD
    targets, PT records never observed by any keyframe).
    """
    events: list[FrontendEvent] = []
    positions: dict[int, np.ndarray] = {}   # declared via PT, current value
    introduced: set[int] = set()             # folded into some NewKeyframe
    removed: set[int] = set()
    all_pids: set[int] = set()
    last_kf_id: int | None = None
    pending: _PendingKeyframe | None = None

    def flush():
        nonlocal pending
        if pending is None:
            return
        kf = Keyframe(pending.kf_id, pending.pose, pending.intr,
                      frozenset(pending.obs), pending.image_ref)
        events.append(NewKeyframe(kf, tuple(pending.new_points)))
        pending = None

    with open(path, "r", encoding="ascii") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == "KF":
                    if len(parts) not in (15, 16):
                        raise ValueError("KF takes 14 or 15 fields")
                    kf_id = int(parts[1])
                    nums = [float(x) for x in parts[2:13]]
                    w, h = int(parts[13]), int(parts[14])
                    image_ref = parts[15] if len(parts) == 16 else None
                    if last_kf_id is not None and kf_id <= last_kf_id:
                        raise ValueError(f"keyframe id {kf_id} does not increase")
                    flush()
                    pose = Pose.from_quat(nums[3], nums[4], nums[5], nums[6],
                                          nums[0:3])
                    intr = CameraIntrinsics(nums[7], nums[8], nums[9], nums[10],
                                            w, h)
                    pending = _PendingKeyframe(kf_id, pose, intr, image_ref)
                    last_kf_id = kf_id
                elif tag == "PT":
                    if len(parts) != 5:
                        raise ValueError("PT takes 4 fields")
                    pid = int(parts[1])
                    if pid in all_pids:
                        raise ValueError(f"point id {pid} redeclared")
                    all_pids.add(pid)
                    positions[pid] = np.array([float(x) for x in parts[2:5]])
                elif tag == "OBS":
                    if len(parts) != 3:
                        raise ValueError("OBS takes 2 fields")
                    kf_id, pid = int(parts[1]), int(parts[2])
                    if pending is None or kf_id != pending.kf_id:
                        raise ValueError(
                            f"observation for keyframe {kf_id} outside its record"
                        )
                    if pid in removed or pid not in positions:
                        raise ValueError(f"unknown point id {pid}")
                    pending.obs.add(pid)
                    if pid not in introduced:
                        introduced.add(pid)
                        pending.new_points.append(
                            MapPoint(pid, positions[pid], {kf_id})
                        )
                elif tag == "UPD":
                    if len(parts) != 5:
                        raise ValueError("UPD takes 4 fields")
                    pid = int(parts[1])
                    if pid in removed or pid not in introduced:
                        raise ValueError(f"unknown point id {pid}")
                    flush()
                    pos = np.array([float(x) for x in parts[2:5]])
                    positions[pid] = pos
                    events.append(PointUpdate(pid, pos))
                elif tag == "DEL":
                    if len(parts) != 2:
                        raise ValueError("DEL takes 1 field")
                    pid = int(parts[1])
                    if pid in removed or pid not in introduced:
                        raise ValueError(f"unknown point id {pid}")
                    flush()
                    removed.add(pid)
                    del positions[pid]
                    events.append(PointRemoval(pid))
                else:
                    raise ValueError(f"unknown record tag {tag!r}")
            except StreamFormatError:
                raise
            except (ValueError, IndexError) as exc:
                raise StreamFormatError(lineno, str(exc)) from None
    flush()
    dangling = sorted(set(positions) - introduced)
    if dangling:
        raise ValueError(f"dangling point id {dangling[0]} (never observed)")
    return events
