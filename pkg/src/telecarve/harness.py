"""Deterministic teleoperation sessions on a simulated clock.

Two sides share one discrete-event timeline.  The local side applies
operator commands immediately and steps a haptic loop against the
latest carved surface snapshot, so contact is felt the moment the
predicted surface is reached.  A follower receives the same commands
through a delay channel, executes them against the ground-truth scene,
and reports its contacts back through a second channel; the lead of a
local contact over its echoed confirmation is therefore the round trip,
twice the link latency, up to tick quantisation.

Everything runs single-threaded: one loop advances the clock in fixed
haptic ticks and drains every queue in a fixed order, so a scripted
session with a fixed seed replays byte-identically.  All rates (haptic
stepping, pose forwarding, keyframe arrival) count simulated-clock
ticks, never wall time; wall time only enters the real-time-factor
measurement and the optional pacing sleep.
"""

from __future__ import annotations

import configparser
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .carving import CarvedLabeling, ReconstructionDelta, SurfaceMesh
from .contact import ArmModel, ArmState, HapticParams, build_bvh, haptic_step
from .delaunay import init_bounding
from .frontend import (
    NewKeyframe,
    PointRemoval,
    PointUpdate,
    Pose,
    SceneSpec,
    orbit_poses,
    synth_scene,
)
from .geometry import box_mesh, grid_mesh, triangle_normals
from .mesh_io import parse_obj

log = logging.getLogger("telecarve.harness")

POSE_RATE_HZ = 30.0  # operator viewpoint forwarding cap
MAX_JOG = 0.05  # per-command joint delta bound, radians


class DelayChannel:
    """One-way FIFO link with latency and optional non-negative jitter.

    Delivery time is ``max(previous delivery, send + latency + jitter)``
    so messages never overtake each other, and nothing is ever lost.
    """

    def __init__(self, latency: float, jitter: float = 0.0, rng=None):
        if not (latency >= 0.0):
            raise ValueError(f"latency {latency} must be >= 0")
        if not (jitter >= 0.0):
            raise ValueError(f"jitter {jitter} must be >= 0")
        if jitter > 0.0 and rng is None:
            raise ValueError("jitter needs an rng")
        self.latency = float(latency)
        self.jitter = float(jitter)
        self._rng = rng
        self._queue: deque = deque()
        self._last_delivery = -math.inf

    def send(self, now: float, item) -> float:
        """Queue an item at sim time ``now``; returns its delivery time."""
        delay = self.latency
        if self.jitter > 0.0:
            delay += self._rng.uniform(0.0, self.jitter)
        delivery = max(self._last_delivery, now + delay)
        self._last_delivery = delivery
        self._queue.append((delivery, item))
        return delivery

    def poll(self, now: float) -> list:
        """All items whose delivery time has passed, in send order.

        The comparison carries a nanosecond slack: a latency that is an
        exact multiple of the polling tick must not slip a whole tick
        because ``n * tick`` and the latency round differently.
        """
        out = []
        while self._queue and self._queue[0][0] <= now + 1e-9:
            out.append(self._queue.popleft()[1])
        return out

    def __len__(self) -> int:
        return len(self._queue)


# ---------------------------------------------------------------------------
# Operator commands


@dataclass(frozen=True)
class CameraPose:
    """Deliberate viewpoint change (distinct from the capped pose stream)."""

    pose: Pose


@dataclass(frozen=True, eq=False)
class EndEffectorJog:
    """Bounded joint-space delta; large motions are many small jogs."""

    dq: np.ndarray

    def __post_init__(self):
        dq = np.asarray(self.dq, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(dq)):
            raise ValueError("jog delta must be finite")
        if np.max(np.abs(dq), initial=0.0) > MAX_JOG:
            raise ValueError(
                f"jog delta exceeds the per-command bound {MAX_JOG}"
            )
        dq.setflags(write=False)
        object.__setattr__(self, "dq", dq)


@dataclass(frozen=True)
class Stop:
    """Latches the arm: every later jog on that side is discarded."""


OperatorCommand = Union[CameraPose, EndEffectorJog, Stop]


# ---------------------------------------------------------------------------
# Metrics


@dataclass
class ContactRecord:
    """One local contact onset paired with its echoed confirmation.

    ``lead`` is ``echo_time - local_time``; NaN until (or unless) the
    echo arrives before the session ends.
    """

    index: int
    local_time: float
    echo_time: float = math.nan
    lead: float = math.nan


@dataclass
class SessionMetrics:
    contacts: list[ContactRecord] = field(default_factory=list)
    poses_applied: int = 0
    pose_hz: float = 0.0
    keyframes: int = 0
    kf_per_wall_s: float = 0.0
    rejected_meshes: int = 0
    sim_duration: float = 0.0
    wall_duration: float = 0.0
    rtf: float = 0.0

    def write_csv(self, path) -> None:
        """One row per contact record; times in sim seconds.

        Columns: ``contact`` (onset index), ``local_time`` (tick of the
        local force onset), ``echo_time`` (arrival tick of the follower
        confirmation, empty if it never arrived), ``lead`` (their
        difference, empty likewise).  Wall-clock quantities stay out of
        the file so same-seed runs are byte-identical.
        """
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("contact,local_time,echo_time,lead\n")
            for r in self.contacts:
                echo = "" if math.isnan(r.echo_time) else repr(r.echo_time)
                lead = "" if math.isnan(r.lead) else repr(r.lead)
                fh.write(f"{r.index},{r.local_time!r},{echo},{lead}\n")


def measure_rtf(sim_elapsed: float, wall_elapsed: float) -> float:
    """Real-time factor: simulated seconds per wall second.

    The wall denominator is floored at a microsecond-scale epsilon so an
    idle session reports a large finite factor instead of dividing by
    zero; paced sessions land near 1.0.
    """
    if sim_elapsed < 0.0 or wall_elapsed < 0.0:
        raise ValueError("elapsed times must be >= 0")
    return sim_elapsed / max(wall_elapsed, 1e-12)


# ---------------------------------------------------------------------------
# Session configuration


@dataclass(frozen=True)
class ReconstructionConfig:
    """Parameters of the in-session mapping pipeline (orbit capture)."""

    orbit_radius: float = 2.5
    orbit_count: int = 8
    orbit_heights: tuple[float, float] = (1.2, 2.0)
    points_per_keyframe: int = 150
    noise_sigma: float = 0.0
    keyframe_interval: float = 0.25
    window: int = 50

    def __post_init__(self):
        if not (self.orbit_radius > 0.0):
            raise ValueError(f"orbit_radius {self.orbit_radius} must be > 0")
        if self.orbit_count < 1:
            raise ValueError(f"orbit_count {self.orbit_count} must be >= 1")
        if self.points_per_keyframe < 1:
            raise ValueError("points_per_keyframe must be >= 1")
        if not (self.noise_sigma >= 0.0):
            raise ValueError(f"noise_sigma {self.noise_sigma} must be >= 0")
        if not (self.keyframe_interval > 0.0):
            raise ValueError("keyframe_interval must be > 0")


@dataclass(frozen=True)
class SessionConfig:
    """Everything a session needs; every field is validated by name.

    Exactly one of ``carved`` (a static predicted surface) or
    ``reconstruct`` (run the mapping pipeline on the simulated clock)
    supplies the local mesh; with neither, the local side has no mesh
    until one is published by hand.
    """

    scene: SceneSpec
    duration: float
    seed: int = 0
    latency: float = 0.0
    jitter: float = 0.0
    haptic: HapticParams = HapticParams()
    arm: ArmModel | None = None
    script: tuple = ()
    pose_stream: tuple = ()
    carved: SurfaceMesh | None = None
    reconstruct: ReconstructionConfig | None = None
    paced: bool = False
    texture_pose: str = "operator"
    initial_pose: Pose | None = None
    record_events: bool = False

    def __post_init__(self):
        if not (self.duration > 0.0):
            raise ValueError(f"duration {self.duration} must be > 0")
        if not (self.latency >= 0.0):
            raise ValueError(f"latency {self.latency} must be >= 0")
        if not (self.jitter >= 0.0):
            raise ValueError(f"jitter {self.jitter} must be >= 0")
        if self.seed < 0:
            raise ValueError(f"seed {self.seed} must be >= 0")
        if self.texture_pose not in ("operator", "follower"):
            raise ValueError(
                f"texture_pose {self.texture_pose!r} must be "
                "'operator' or 'follower'"
            )
        if self.carved is not None and self.reconstruct is not None:
            raise ValueError("carved and reconstruct are mutually exclusive")
        last = -math.inf
        for t, cmd in self.script:
            if t < last:
                raise ValueError("script times must be non-decreasing")
            last = t
            if not isinstance(cmd, (CameraPose, EndEffectorJog, Stop)):
                raise ValueError(f"script holds a non-command {cmd!r}")


def ramp_script(n_joints: int, joint: int, step: float, t0: float, t1: float,
                tick: float) -> tuple:
    """Jog one joint by ``step`` every tick over [t0, t1): a constant
    approach ramp, the building block of the scripted sessions."""
    out = []
    t = t0
    while t < t1:
        dq = np.zeros(n_joints)
        dq[joint] = step
        out.append((t, EndEffectorJog(dq)))
        t += tick
    return tuple(out)


# ---------------------------------------------------------------------------
# Frontend event feeding


def apply_frontend_event(lab: CarvedLabeling, event) -> ReconstructionDelta:
    """Fold one mapping event into the carving state."""
    if isinstance(event, NewKeyframe):
        kf = event.keyframe
        fresh = {mp.id: mp.position for mp in event.new_points}
        obs = [(pid, fresh.get(pid)) for pid in sorted(kf.observations)]
        return lab.integrate_keyframe(kf.id, kf.pose.translation, obs)
    if isinstance(event, PointUpdate):
        return lab.handle_point_update(event.point_id, event.position)
    if isinstance(event, PointRemoval):
        return lab.handle_point_removal(event.point_id)
    raise TypeError(f"not a frontend event: {event!r}")


def carving_bounds(points, margin: float = 5.0) -> tuple[np.ndarray, np.ndarray]:
    """Carving box for a point cloud: its bounding box inflated to
    ``margin`` times its diagonal, so sight rays never exit the
    tetrahedralized region."""
    pts = np.asarray(points, dtype=np.float64)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    mid = 0.5 * (lo + hi)
    half = margin * max(float(np.linalg.norm(hi - lo)), 1.0)
    return mid - half, mid + half


def carve_stream(events, margin: float = 5.0) -> SurfaceMesh:
    """Replay a recorded mapping stream and extract the carved surface."""
    cloud: list[np.ndarray] = []
    keyframes = 0
    for ev in events:
        if isinstance(ev, NewKeyframe):
            keyframes += 1
            cloud.append(ev.keyframe.pose.translation)
            cloud.extend(mp.position for mp in ev.new_points)
        elif isinstance(ev, PointUpdate):
            cloud.append(ev.position)
    if not keyframes:
        raise ValueError("stream holds no keyframes")
    lo, hi = carving_bounds(np.vstack(cloud), margin)
    lab = CarvedLabeling(init_bounding(lo, hi))
    for ev in events:
        apply_frontend_event(lab, ev)
    return lab.extract_surface()


def _truth_mesh(scene: SceneSpec) -> SurfaceMesh:
    v, t = scene.combined()
    t = t.astype(np.int32)
    return SurfaceMesh(0, v.copy(), t, triangle_normals(v, t))


# ---------------------------------------------------------------------------
# The session


class _Side:
    """Arm state plus contact-onset tracking for one end of the link."""

    def __init__(self, arm: ArmModel):
        self.q = np.zeros(arm.n_joints)
        self.stopped = False
        self.in_contact = False

    def apply(self, arm: ArmModel, cmd) -> None:
        if isinstance(cmd, Stop):
            self.stopped = True
        elif isinstance(cmd, EndEffectorJog) and not self.stopped:
            if cmd.dq.shape != self.q.shape:
                raise ValueError(
                    f"jog has {cmd.dq.shape[0]} joints, arm has {self.q.shape[0]}"
                )
            self.q = arm.clamp(self.q + cmd.dq)


class Session:
    """One teleoperation run; ``run()`` drives it to completion.

    Tick order is fixed and documented so replays are deterministic:
    keyframe integration, script issue, uplink delivery, pose
    forwarding, local haptic step, follower haptic step, echo delivery.
    Mesh snapshots swap between ticks only, so every event of one haptic
    step carries one mesh version.
    """

    def __init__(self, config: SessionConfig):
        self.config = config
        self.arm = config.arm if config.arm is not None else ArmModel.default()
        self.tick = 1.0 / config.haptic.rate_hz
        self.n_ticks = int(round(config.duration / self.tick))
        self.rng = np.random.default_rng(config.seed)
        self.uplink = DelayChannel(config.latency, config.jitter, self.rng)
        self.downlink = DelayChannel(config.latency, config.jitter, self.rng)
        self.now = 0.0
        self.metrics = SessionMetrics()

        self.truth_mesh = _truth_mesh(config.scene)
        self.bvh_truth = build_bvh(self.truth_mesh)
        self.bvh_local = None
        self.mesh_version = -1
        if config.carved is not None:
            self.publish_mesh_update(config.carved)

        self.local = _Side(self.arm)
        self.follower = _Side(self.arm)
        center = self.truth_mesh.vertices.mean(axis=0) if \
            self.truth_mesh.n_vertices else np.zeros(3)
        default_eye = center + np.array([2.5, 0.0, 1.5])
        self.operator_pose = (config.initial_pose or
                              Pose.looking_at(default_eye, center))
        self.follower_pose = self.operator_pose
        self._pending_pose: Pose | None = None
        self._next_pose_time = -math.inf

        self.lab: CarvedLabeling | None = None
        self._kf_slots: list[tuple[float, list]] = []
        if config.reconstruct is not None:
            self._prepare_reconstruction(config.reconstruct)

        self.follower_trajectory: list[bytes] = []
        self._kf_wall = 0.0
        self._script = deque(config.script)
        self._pose_feed = deque(config.pose_stream)
        self._commands: deque = deque()
        self.local_events: tuple = ()
        self.event_log: list[tuple[float, tuple]] = []

    # -- reconstruction pipeline ------------------------------------------

    def _prepare_reconstruction(self, rc: ReconstructionConfig) -> None:
        v, _ = self.config.scene.combined()
        center = 0.5 * (v.min(axis=0) + v.max(axis=0))
        poses = orbit_poses(center, rc.orbit_radius, rc.orbit_count,
                            heights=rc.orbit_heights)
        events = synth_scene(
            self.config.scene, poses, rc.noise_sigma, self.config.seed,
            points_per_keyframe=rc.points_per_keyframe, window=rc.window,
        )
        eyes = np.array([p.translation for p in poses])
        lo, hi = carving_bounds(np.vstack([v, eyes]))
        self.lab = CarvedLabeling(init_bounding(lo, hi))
        slots: list[tuple[float, list]] = []
        for ev in events:
            if isinstance(ev, NewKeyframe) or not slots:
                slots.append((len(slots) * rc.keyframe_interval, [ev]))
            else:
                slots[-1][1].append(ev)
        self._kf_slots = slots

    def _integrate_due_keyframes(self) -> None:
        while self._kf_slots and self._kf_slots[0][0] <= self.now:
            _, events = self._kf_slots.pop(0)
            t0 = time.perf_counter()
            for ev in events:
                apply_frontend_event(self.lab, ev)
            mesh = self.lab.extract_surface()
            self._kf_wall += time.perf_counter() - t0
            self.metrics.keyframes += 1
            self.publish_mesh_update(mesh)

    # -- public ops --------------------------------------------------------

    def publish_mesh_update(self, mesh: SurfaceMesh) -> bool:
        """Swap in a newer surface snapshot; stale versions are refused.

        The swap happens between haptic steps (the loop is single
        threaded), so a step never sees two versions.
        """
        if mesh.version <= self.mesh_version:
            log.warning(
                "rejected stale mesh version %d (current %d)",
                mesh.version, self.mesh_version,
            )
            self.metrics.rejected_meshes += 1
            return False
        self.bvh_local = build_bvh(mesh)
        self.mesh_version = mesh.version
        return True

    def stream_operator_pose(self, pose: Pose) -> None:
        """Feed one viewpoint sample; forwarded at most at 30 Hz,
        latest sample wins, and the final sample is never dropped."""
        self._pending_pose = pose

    def submit_command(self, cmd) -> None:
        """Queue an operator command from outside the script.

        Applied on the next tick, after any script entries due then, so
        interactive input and scripted input share one ordering rule.
        """
        if not isinstance(cmd, (CameraPose, EndEffectorJog, Stop)):
            raise TypeError(f"not an operator command: {cmd!r}")
        self._commands.append(cmd)

    def _forward_pending_pose(self) -> None:
        if self._pending_pose is None or self.now < self._next_pose_time:
            return
        self.operator_pose = self._pending_pose
        self._pending_pose = None
        self._next_pose_time = self.now + 1.0 / POSE_RATE_HZ
        self.metrics.poses_applied += 1

    @property
    def texture_query_pose(self) -> Pose:
        """Viewpoint used to pick texture keyframes (operator wins by
        default; configurable)."""
        if self.config.texture_pose == "operator":
            return self.operator_pose
        return self.follower_pose

    # -- the loop ----------------------------------------------------------

    def _onset(self, side: _Side, bvh, send_echo: bool) -> tuple:
        state = ArmState(side.q, np.zeros_like(side.q), self.now)
        events = haptic_step(self.arm, state, bvh, self.config.haptic)
        forced = any(float(np.linalg.norm(e.force)) > 0.0 for e in events)
        if forced and not side.in_contact:
            if send_echo:
                self.downlink.send(self.now, ("contact", self.now))
            else:
                rec = ContactRecord(len(self.metrics.contacts), self.now)
                self.metrics.contacts.append(rec)
        side.in_contact = forced
        return tuple(events)

    def step(self, n: int) -> None:
        """Advance one haptic tick; order matches the class docstring."""
        self.now = n * self.tick
        if self.lab is not None:
            self._integrate_due_keyframes()
        while self._script and self._script[0][0] <= self.now:
            _, cmd = self._script.popleft()
            self._issue(cmd)
        while self._commands:
            self._issue(self._commands.popleft())
        for cmd in self.uplink.poll(self.now):
            if isinstance(cmd, CameraPose):
                self.follower_pose = cmd.pose
            self.follower.apply(self.arm, cmd)
        while self._pose_feed and self._pose_feed[0][0] <= self.now:
            self.stream_operator_pose(self._pose_feed.popleft()[1])
        self._forward_pending_pose()
        if self.bvh_local is not None:
            self.local_events = self._onset(
                self.local, self.bvh_local, send_echo=False)
        else:
            self.local_events = ()
        if self.config.record_events and self.local_events:
            self.event_log.append((self.now, self.local_events))
        self._onset(self.follower, self.bvh_truth, send_echo=True)
        for _, sent in self.downlink.poll(self.now):
            for rec in self.metrics.contacts:
                if math.isnan(rec.echo_time):
                    rec.echo_time = self.now
                    rec.lead = rec.echo_time - rec.local_time
                    break
        self.follower_trajectory.append(self.follower.q.tobytes())

    def _issue(self, cmd) -> None:
        if isinstance(cmd, CameraPose):
            self.operator_pose = cmd.pose
        self.local.apply(self.arm, cmd)
        self.uplink.send(self.now, cmd)

    def finish(self, wall: float) -> SessionMetrics:
        m = self.metrics
        m.sim_duration = self.n_ticks * self.tick
        m.wall_duration = wall
        m.rtf = measure_rtf(m.sim_duration, wall)
        m.pose_hz = m.poses_applied / m.sim_duration if m.sim_duration else 0.0
        if m.keyframes:
            m.kf_per_wall_s = m.keyframes / max(self._kf_wall, 1e-12)
        if not self.config.paced:
            log.info("real-time factor %.2f (unpaced, no target)", m.rtf)
        return m

    def run(self) -> SessionMetrics:
        wall0 = time.perf_counter()
        for n in range(self.n_ticks):
            self.step(n)
            if self.config.paced:
                target = wall0 + (n + 1) * self.tick
                lag = target - time.perf_counter()
                if lag > 0:
                    time.sleep(lag)
        return self.finish(time.perf_counter() - wall0)


def run_session(config: SessionConfig) -> SessionMetrics:
    """Build a session from the config, run it, return its metrics."""
    return Session(config).run()


# -- session description files ----------------------------------------------

def _cfg_get(cp, sec: str, key: str, default=None) -> str:
    if cp.has_option(sec, key):
        return cp.get(sec, key)
    if default is None:
        raise ValueError(f"[{sec}] {key}: required")
    return default


def _cfg_float(cp, sec: str, key: str, default=None) -> float:
    raw = _cfg_get(cp, sec, key, default)
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"[{sec}] {key}: not a number: {raw!r}") from None


def _cfg_int(cp, sec: str, key: str, default=None) -> int:
    raw = _cfg_get(cp, sec, key, default)
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"[{sec}] {key}: not an integer: {raw!r}") from None


def _cfg_bool(cp, sec: str, key: str, default: str) -> bool:
    raw = _cfg_get(cp, sec, key, default).strip().lower()
    if raw in ("true", "yes", "on", "1"):
        return True
    if raw in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"[{sec}] {key}: not a boolean: {raw!r}")


def _cfg_vec(cp, sec: str, key: str, n: int, default=None) -> tuple:
    raw = _cfg_get(cp, sec, key, default)
    parts = raw.split()
    if len(parts) != n:
        raise ValueError(f"[{sec}] {key}: needs {n} values, got {len(parts)}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ValueError(f"[{sec}] {key}: not numbers: {raw!r}") from None


def _load_scene(cp, base) -> SceneSpec:
    kind = _cfg_get(cp, "scene", "kind")
    if kind == "box":
        v, t = box_mesh(_cfg_vec(cp, "scene", "center", 3, "0 0 0.5"),
                        _cfg_vec(cp, "scene", "extents", 3, "1 1 1"))
        return SceneSpec.from_mesh(v, t)
    if kind == "floor":
        half = _cfg_float(cp, "scene", "half", "3.0")
        z = _cfg_float(cp, "scene", "z", "0.0")
        v, t = grid_mesh(1, 1, extent=(2 * half, 2 * half), z=z,
                         origin=(-half, -half))
        return SceneSpec.from_mesh(v, t)
    if kind == "obj":
        path = base / _cfg_get(cp, "scene", "path")
        if not path.is_file():
            raise ValueError(f"[scene] path: no such file: {path}")
        parsed = parse_obj(path)
        return SceneSpec.from_mesh(parsed.vertices, parsed.triangles)
    raise ValueError(f"[scene] kind: unknown kind {kind!r}")


def _load_script(cp, arm: ArmModel, tick: float) -> tuple:
    kind = _cfg_get(cp, "script", "kind", "none")
    if kind == "none":
        return ()
    if kind != "ramp":
        raise ValueError(f"[script] kind: unknown kind {kind!r}")
    joint = _cfg_int(cp, "script", "joint")
    if not 0 <= joint < arm.n_joints:
        raise ValueError(
            f"[script] joint: index {joint} out of range for "
            f"{arm.n_joints} joints")
    step = _cfg_float(cp, "script", "step")
    t0 = _cfg_float(cp, "script", "start", "0.0")
    t1 = _cfg_float(cp, "script", "stop")
    script = ramp_script(arm.n_joints, joint, step, t0, t1, tick)
    if cp.has_option("script", "stop_at"):
        script = script + ((_cfg_float(cp, "script", "stop_at"), Stop()),)
    return script


def load_session_config(path, *, seed: int | None = None) -> SessionConfig:
    """Parse a session description file (INI) into a SessionConfig.

    Sections: [scene] (required: kind = box | floor | obj plus shape
    keys), [session] (required: duration; seed, paced, texture_pose,
    prior), [link] (latency, jitter), [haptic] (rate_hz, min_depth,
    magnitude), [arm] (config = default or a path), [reconstruct]
    (presence switches the local surface from a pre-scanned copy of the
    scene to live mapping), [script] (kind = none | ramp).  Relative
    paths resolve against the config file's directory.  ``seed``
    overrides the file's seed when given.
    """
    p = Path(path)
    cp = configparser.ConfigParser()
    if not cp.read(p):
        raise ValueError(f"cannot read session config {path}")
    for sec in ("scene", "session"):
        if not cp.has_section(sec):
            raise ValueError(f"[{sec}]: section required")
    base = p.parent

    scene = _load_scene(cp, base)
    haptic = HapticParams(
        min_depth=_cfg_float(cp, "haptic", "min_depth", "0.02"),
        magnitude=_cfg_float(cp, "haptic", "magnitude", "10.0"),
        rate_hz=_cfg_float(cp, "haptic", "rate_hz", "250.0"),
    )
    arm_ref = _cfg_get(cp, "arm", "config", "default")
    arm = ArmModel.default() if arm_ref == "default" \
        else ArmModel.from_config(base / arm_ref)

    reconstruct = None
    if cp.has_section("reconstruct"):
        reconstruct = ReconstructionConfig(
            orbit_radius=_cfg_float(cp, "reconstruct", "orbit_radius", "2.5"),
            orbit_count=_cfg_int(cp, "reconstruct", "orbit_count", "8"),
            orbit_heights=_cfg_vec(
                cp, "reconstruct", "orbit_heights", 2, "1.2 2.0"),
            points_per_keyframe=_cfg_int(
                cp, "reconstruct", "points_per_keyframe", "150"),
            noise_sigma=_cfg_float(cp, "reconstruct", "noise_sigma", "0.0"),
            keyframe_interval=_cfg_float(
                cp, "reconstruct", "keyframe_interval", "0.25"),
            window=_cfg_int(cp, "reconstruct", "window", "50"),
        )

    prior = _cfg_get(cp, "session", "prior",
                     "none" if reconstruct is not None else "exact")
    if prior not in ("exact", "none"):
        raise ValueError(f"[session] prior: unknown prior {prior!r}")
    carved = None
    if prior == "exact":
        if reconstruct is not None:
            raise ValueError(
                "[session] prior: cannot combine 'exact' with [reconstruct]")
        v, t = scene.combined()
        carved = SurfaceMesh(1, v, t.astype(np.int32), triangle_normals(v, t))

    return SessionConfig(
        scene=scene,
        duration=_cfg_float(cp, "session", "duration"),
        seed=seed if seed is not None
        else _cfg_int(cp, "session", "seed", "0"),
        latency=_cfg_float(cp, "link", "latency", "0.0"),
        jitter=_cfg_float(cp, "link", "jitter", "0.0"),
        haptic=haptic,
        arm=arm,
        script=_load_script(cp, arm, 1.0 / haptic.rate_hz),
        carved=carved,
        reconstruct=reconstruct,
        paced=_cfg_bool(cp, "session", "paced", "false"),
        texture_pose=_cfg_get(cp, "session", "texture_pose", "operator"),
        record_events=True,
    )
