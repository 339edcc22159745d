"""Sphere-proxy contact queries against a surface mesh snapshot.

A serial revolute arm is reduced to a handful of bounding spheres (one
per link plus the end effector).  Each haptic tick runs forward
kinematics, finds the nearest surface triangle for every sphere through
a BVH, and turns near-or-penetrating gaps into contact events whose
force points along the triangle normal, i.e. out of the occupied region.

Detection is discrete: gaps are sampled at tick instants with no sweep
in between, so a proxy moving more than its radius per tick can tunnel
through thin geometry, and penetration is always measured to the
nearest surface point (a sphere buried deeper than its radius reads as
separated again).  The BVH is tied to one mesh version and is rebuilt
from scratch when a new snapshot is published; there is no refitting.
The bundled seven-joint arm is a generic reach-scale chain chosen for
plausible proportions, not a model of any particular manipulator.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import _kernels as K
from .carving import SurfaceMesh
from .geometry import rotation_about_axis


class _NoMesh:
    """Falsy singleton returned by queries before any mesh exists."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __bool__(self) -> bool:
        return False

    def __repr__(self) -> str:
        return "NO_MESH"


NO_MESH = _NoMesh()


def _vec3(value, name: str) -> np.ndarray:
    v = np.asarray(value, dtype=np.float64).reshape(-1)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be 3 finite numbers")
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class RevoluteJoint:
    """One revolute joint: translate by ``offset`` in the parent frame,
    then rotate about ``axis``.  Limits are a closed interval."""

    axis: np.ndarray
    offset: np.ndarray
    limits: tuple[float, float] = (-np.pi, np.pi)

    def __post_init__(self):
        axis = _vec3(self.axis, "joint axis")
        if np.linalg.norm(axis) == 0.0:
            raise ValueError("joint axis must be nonzero")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "offset", _vec3(self.offset, "joint offset"))
        lo, hi = float(self.limits[0]), float(self.limits[1])
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            raise ValueError(f"joint limits ({lo}, {hi}) must satisfy lo <= hi")
        object.__setattr__(self, "limits", (lo, hi))


@dataclass(frozen=True, eq=False)
class LinkSphere:
    """Collision sphere fixed in a link frame.  ``link`` is 1-based: the
    frame reached after applying joint ``link``."""

    link: int
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center, "sphere center"))
        if not (self.radius > 0.0):
            raise ValueError(f"sphere radius {self.radius} must be positive")


@dataclass(frozen=True, eq=False)
class ArmModel:
    """Serial chain of revolute joints with sphere collision proxies.

    Proxy ids are the index into ``spheres`` for link spheres, and
    ``len(spheres)`` for the implicit end-effector sphere placed at
    ``ee_offset`` in the last link frame.
    """

    joints: tuple[RevoluteJoint, ...]
    spheres: tuple[LinkSphere, ...]
    ee_offset: np.ndarray
    ee_radius: float = 0.05

    def __post_init__(self):
        if len(self.joints) < 1:
            raise ValueError("arm needs at least one joint")
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "spheres", tuple(self.spheres))
        object.__setattr__(self, "ee_offset", _vec3(self.ee_offset, "ee_offset"))
        if not (self.ee_radius > 0.0):
            raise ValueError(f"ee_radius {self.ee_radius} must be positive")
        for s in self.spheres:
            if not 1 <= s.link <= len(self.joints):
                raise ValueError(
                    f"sphere link {s.link} out of range 1..{len(self.joints)}"
                )

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_proxies(self) -> int:
        return len(self.spheres) + 1

    def clamp(self, q) -> np.ndarray:
        """Joint positions clipped into their closed limit intervals."""
        q = np.asarray(q, dtype=np.float64).reshape(-1)
        if q.shape != (self.n_joints,):
            raise ValueError(
                f"expected {self.n_joints} joint positions, got {q.shape[0]}"
            )
        lo = np.array([j.limits[0] for j in self.joints])
        hi = np.array([j.limits[1] for j in self.joints])
        return np.clip(q, lo, hi)

    @classmethod
    def from_config(cls, path) -> "ArmModel":
        """Load an arm description from an INI file.

        Schema::

            [arm]
            joints = <n>               ; number of revolute joints
            ee_offset = <x y z>        ; end-effector sphere, last link frame
            ee_radius = <r>

            [joint1] .. [jointN]       ; one section per joint, in order
            axis = <x y z>             ; rotation axis in the parent frame
            offset = <x y z>           ; translation applied before the turn
            limits = <lo hi>           ; closed interval, radians

            [sphere1] .. [sphereM]     ; consecutive, any count >= 0
            link = <k>                 ; 1-based owning joint/link
            center = <x y z>           ; in that link frame
            radius = <r>
        """
        cp = configparser.ConfigParser()
        read = cp.read(path)
        if not read:
            raise ValueError(f"cannot read arm config {path!r}")

        def floats(section: str, key: str, n: int) -> list[float]:
            try:
                raw = cp.get(section, key)
            except (configparser.NoSectionError, configparser.NoOptionError):
                raise ValueError(f"{path}: missing [{section}] {key}") from None
            parts = raw.split()
            if len(parts) != n:
                raise ValueError(
                    f"{path}: [{section}] {key} needs {n} values, got {len(parts)}"
                )
            return [float(p) for p in parts]

        n = int(cp.get("arm", "joints", fallback="0"))
        if n < 1:
            raise ValueError(f"{path}: [arm] joints must be >= 1")
        joints = []
        for i in range(1, n + 1):
            sec = f"joint{i}"
            lo, hi = floats(sec, "limits", 2)
            joints.append(
                RevoluteJoint(
                    axis=floats(sec, "axis", 3),
                    offset=floats(sec, "offset", 3),
                    limits=(lo, hi),
                )
            )
        spheres = []
        i = 1
        while cp.has_section(f"sphere{i}"):
            sec = f"sphere{i}"
            spheres.append(
                LinkSphere(
                    link=int(cp.get(sec, "link")),
                    center=floats(sec, "center", 3),
                    radius=float(cp.get(sec, "radius")),
                )
            )
            i += 1
        return cls(
            joints=tuple(joints),
            spheres=tuple(spheres),
            ee_offset=floats("arm", "ee_offset", 3),
            ee_radius=float(cp.get("arm", "ee_radius", fallback="0.05")),
        )

    @classmethod
    def default(cls) -> "ArmModel":
        """The bundled seven-joint arm (eight proxies total)."""
        ref = resources.files("telecarve").joinpath("data/arm7.ini")
        with resources.as_file(ref) as path:
            return cls.from_config(path)


@dataclass
class ArmState:
    """Joint-space state at one instant of the simulation clock."""

    positions: np.ndarray
    velocities: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1)
        self.velocities = np.asarray(self.velocities, dtype=np.float64).reshape(-1)
        if self.positions.shape != self.velocities.shape:
            raise ValueError(
                f"positions {self.positions.shape} and velocities "
                f"{self.velocities.shape} must match"
            )
        self.timestamp = float(self.timestamp)


@dataclass(frozen=True, eq=False)
class ProxySphere:
    """A proxy sphere placed in the world by forward kinematics."""

    id: int
    center: np.ndarray
    radius: float


def forward_kinematics(model: ArmModel, q) -> list[ProxySphere]:
    """World-space proxy spheres for joint positions ``q``.

    Pure kinematics: ``q`` is used as given (callers clamp on ingest).
    Proxies come back ordered by id, the end effector last.
    """
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.shape != (model.n_joints,):
        raise ValueError(
            f"expected {model.n_joints} joint positions, got {q.shape[0]}"
        )
    rot = np.eye(3)
    pos = np.zeros(3)
    frames = []
    for joint, qi in zip(model.joints, q):
        pos = pos + rot @ joint.offset
        rot = rot @ rotation_about_axis(joint.axis, float(qi))
        frames.append((rot, pos))
    out = []
    for pid, s in enumerate(model.spheres):
        r, t = frames[s.link - 1]
        out.append(ProxySphere(pid, t + r @ s.center, s.radius))
    r, t = frames[-1]
    out.append(ProxySphere(len(model.spheres), t + r @ model.ee_offset, model.ee_radius))
    return out


# ---------------------------------------------------------------------------
# BVH over the surface triangles.

_LEAF_SIZE = 4  # fixed in the build kernel
_STACK_DEPTH = 64  # splits halve the count, so depth <= log2(n) + 1


@dataclass(eq=False)
class Bvh:
    """Static bounding-volume tree over one surface mesh snapshot.

    Tied to ``mesh.version``; build a new tree for a new snapshot.  The
    query scratch stack is reused across calls, so one tree must not be
    queried from two threads at once (the haptic loop is the single
    consumer).
    """

    mesh: SurfaceMesh
    order: np.ndarray
    node_lo: np.ndarray
    node_hi: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    n_nodes: int
    _stack: np.ndarray = field(
        default_factory=lambda: np.empty(_STACK_DEPTH, dtype=np.int64), repr=False
    )

    @property
    def version(self) -> int:
        return self.mesh.version

    @property
    def n_triangles(self) -> int:
        return self.mesh.n_triangles


def build_bvh(mesh: SurfaceMesh) -> Bvh:
    """Median-split tree on the longest centroid axis, leaves of <= 4."""
    m = mesh.n_triangles
    if m == 0:
        empty_f = np.empty((0, 3), dtype=np.float64)
        empty_i = np.empty(0, dtype=np.int64)
        return Bvh(mesh, empty_i, empty_f, empty_f.copy(), empty_i.copy(),
                   empty_i.copy(), empty_i.copy(), empty_i.copy(), 0)
    tv = mesh.vertices[mesh.triangles]  # (m, 3, 3)
    tmin = np.ascontiguousarray(tv.min(axis=1))
    tmax = np.ascontiguousarray(tv.max(axis=1))
    tcent = np.ascontiguousarray((tmin + tmax) * 0.5)
    order = np.arange(m, dtype=np.int64)
    cap = 2 * m
    node_lo = np.empty((cap, 3), dtype=np.float64)
    node_hi = np.empty((cap, 3), dtype=np.float64)
    node_left = np.empty(cap, dtype=np.int64)
    node_right = np.empty(cap, dtype=np.int64)
    node_start = np.empty(cap, dtype=np.int64)
    node_count = np.empty(cap, dtype=np.int64)
    n_nodes = K.bvh_build(
        tmin, tmax, tcent, order,
        node_lo, node_hi, node_left, node_right, node_start, node_count,
        np.empty(_STACK_DEPTH, dtype=np.int64),
        np.empty(_STACK_DEPTH, dtype=np.int64),
        np.empty(_STACK_DEPTH, dtype=np.int64),
        np.empty(m, dtype=np.float64),
        np.empty(m, dtype=np.int64),
    )
    return Bvh(mesh, order, node_lo, node_hi, node_left, node_right,
               node_start, node_count, int(n_nodes))


@dataclass(frozen=True, eq=False)
class ProximityResult:
    """Nearest surface point for one sphere.  ``gap`` is the signed
    surface-to-sphere clearance: negative means penetration, bounded
    below by ``-radius`` since distances are measured to the nearest
    surface point."""

    triangle: int
    witness: np.ndarray
    gap: float
    normal: np.ndarray

    def __post_init__(self):
        self.witness.setflags(write=False)


def query_proximity(bvh: Bvh, center, radius: float):
    """Nearest triangle to a sphere; ties go to the lowest triangle id.

    Returns NO_MESH when the tree covers an empty mesh, which is not the
    same as a large positive gap.
    """
    if bvh.n_triangles == 0:
        return NO_MESH
    if not (radius >= 0.0):
        raise ValueError(f"radius {radius} must be >= 0")
    c = np.asarray(center, dtype=np.float64).reshape(-1)
    if c.shape != (3,) or not np.all(np.isfinite(c)):
        raise ValueError("query center must be 3 finite numbers")
    d2, tri, wx, wy, wz = K.bvh_query(
        bvh.mesh.vertices, bvh.mesh.triangles, bvh.order,
        bvh.node_lo, bvh.node_hi, bvh.node_left, bvh.node_right,
        bvh.node_start, bvh.node_count,
        c[0], c[1], c[2],
        bvh._stack,
    )
    tri = int(tri)
    return ProximityResult(
        triangle=tri,
        witness=np.array([wx, wy, wz]),
        gap=float(np.sqrt(d2)) - float(radius),
        normal=bvh.mesh.normals[tri],
    )


@dataclass(frozen=True)
class HapticParams:
    """Contact thresholds and the loop rate the harness should run at.

    A proxy with gap <= ``min_depth`` gets a force event of magnitude
    ``magnitude`` along the surface normal; a gap in
    (``min_depth``, 2 * ``min_depth``] gets a zero-force proximity
    event; larger gaps produce nothing.
    """

    min_depth: float = 0.020
    magnitude: float = 10.0
    rate_hz: float = 250.0

    def __post_init__(self):
        if not (self.min_depth > 0.0):
            raise ValueError(f"min_depth {self.min_depth} must be positive")
        if not (self.magnitude >= 0.0):
            raise ValueError(f"magnitude {self.magnitude} must be >= 0")
        if not (self.rate_hz > 0.0):
            raise ValueError(f"rate_hz {self.rate_hz} must be positive")


@dataclass(frozen=True, eq=False)
class ContactEvent:
    """One proxy/surface interaction at one haptic tick.

    ``force`` is ``magnitude * normal`` when the gap is at or below the
    force threshold and the zero vector for proximity-only events; the
    normal points out of the occupied region, so the force pushes the
    proxy into free space.
    """

    proxy_id: int
    triangle: int
    witness: np.ndarray
    gap: float
    normal: np.ndarray
    force: np.ndarray
    mesh_version: int
    timestamp: float

    def __post_init__(self):
        self.witness.setflags(write=False)
        self.force.setflags(write=False)


def haptic_step(
    model: ArmModel,
    state: ArmState,
    bvh,
    params: HapticParams = HapticParams(),
) -> list[ContactEvent]:
    """One haptic tick: events for every proxy near or inside the surface.

    Joint positions are clamped into their limits on ingest.  With no
    tree yet, or a tree over an empty mesh, there is nothing to touch
    and the result is empty.  All events of one step carry the same
    mesh version: the tree is immutable, so a snapshot swap mid-step
    cannot mix versions.
    """
    if bvh is None or bvh is NO_MESH or bvh.n_triangles == 0:
        return []
    q = model.clamp(state.positions)
    events = []
    for proxy in forward_kinematics(model, q):
        res = query_proximity(bvh, proxy.center, proxy.radius)
        if res.gap <= params.min_depth:
            force = params.magnitude * res.normal
        elif res.gap <= 2.0 * params.min_depth:
            force = np.zeros(3)
        else:
            continue
        events.append(
            ContactEvent(
                proxy_id=proxy.id,
                triangle=res.triangle,
                witness=res.witness,
                gap=res.gap,
                normal=res.normal,
                force=force,
                mesh_version=bvh.version,
                timestamp=state.timestamp,
            )
        )
    return events
