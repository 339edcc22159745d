"""Release gate: one end-to-end check per user-facing guarantee.

Every test prints a single ``[PASS]``/``[FAIL]`` line with the measured
values (visible with ``pytest -s`` or on failure), then asserts.  The
checks pin exact tolerances; weakening one is a release decision, not a
test fix.
"""

import math
import os
import subprocess
import sys
import textwrap
import time

import numpy as np
import pytest

from helpers import (
    canon_alive_set,
    canon_free_set,
    check_delaunay,
    check_integrity,
    check_separation,
    large_scene_mesh,
    rebuild_batch,
)
from telecarve.carving import CarvedLabeling, SurfaceMesh
from telecarve.contact import (
    ArmModel,
    ArmState,
    HapticParams,
    RevoluteJoint,
    build_bvh,
    haptic_step,
)
from telecarve.delaunay import init_bounding
from telecarve.evaluation import completeness, precision
from telecarve.frontend import NewKeyframe, SceneSpec, orbit_poses, synth_scene
from telecarve.geometry import box_mesh, triangle_normals
from telecarve.harness import (
    Session,
    SessionConfig,
    ramp_script,
    run_session,
)
from telecarve.mesh_io import export_obj

TICK = 1.0 / 250.0


@pytest.fixture
def report(capsys):
    """Print one verdict line straight to the terminal, bypassing capture."""

    def _report(line: str) -> None:
        with capsys.disabled():
            print(line, flush=True)

    return _report


def _floor_scene(half=3.0, z=0.0):
    v = np.array(
        [[-half, -half, z], [half, -half, z], [half, half, z], [-half, half, z]]
    )
    t = np.array([[0, 1, 2], [0, 2, 3]])
    return SceneSpec.from_mesh(v, t)


def _floor_mesh(half=3.0, z=0.0, version=1):
    v, t = _floor_scene(half, z).combined()
    t = t.astype(np.int32)
    return SurfaceMesh(version, v, t, triangle_normals(v, t))


def _pendulum_arm():
    # End effector at unit distance along +z of a y-axis joint: its
    # height is cos(q), so a positive ramp lowers it onto the floor.
    return ArmModel(
        joints=(RevoluteJoint(axis=(0.0, 1.0, 0.0), offset=(0.0, 0.0, 0.0),
                              limits=(-3.0, 3.0)),),
        spheres=(),
        ee_offset=(0.0, 0.0, 1.0),
        ee_radius=0.05,
    )


def _random_carved_scene(seed: int) -> CarvedLabeling:
    """A seeded multi-keyframe carve with fresh points, re-observations,
    and (on odd seeds) point updates and removals."""
    rng = np.random.default_rng(seed)
    lab = CarvedLabeling(init_bounding((-40.0,) * 3, (40.0,) * 3))
    n_kf = int(rng.integers(3, 21))
    ppk = int(rng.integers(50, 301))
    pid = 0
    for kf in range(n_kf):
        cam = rng.uniform(-3.0, 3.0, 3) + np.array([0.0, 0.0, 4.0])
        obs = []
        for _ in range(ppk):
            obs.append((pid, rng.uniform(-2.5, 2.5, 3)))
            pid += 1
        if kf > 0:
            known = rng.choice(pid - ppk, size=min(30, pid - ppk), replace=False)
            obs.extend((int(p), None) for p in known)
        lab.integrate_keyframe(kf, cam, obs)
    if seed % 2:
        pids = np.array(sorted(lab.vid_of_point))
        for p in rng.choice(pids, size=6, replace=False):
            lab.handle_point_update(int(p), rng.uniform(-2.5, 2.5, 3))
        for p in rng.choice(pids, size=3, replace=False):
            if int(p) in lab.vid_of_point:
                lab.handle_point_removal(int(p))
    return lab


def test_triangulation_stays_delaunay_under_insert_and_remove_churn(report):
    """50 seeded point sets: exhaustive empty-circumsphere and adjacency
    checks hold after the inserts and again after removing a fifth of
    the points, all within a 60 s budget."""
    budget = 60.0
    t0 = time.perf_counter()
    runs = 0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(20, 501))
        tri = init_bounding((-2.0,) * 3, (2.0,) * 3)
        vids = [tri.insert_point(p, source_id=i)
                for i, p in enumerate(rng.uniform(-1.0, 1.0, (n, 3)))]
        check_integrity(tri)
        check_delaunay(tri)
        for v in rng.choice(vids, size=n // 5, replace=False):
            tri.remove_point(int(v))
        check_integrity(tri)
        check_delaunay(tri)
        runs += 1
    elapsed = time.perf_counter() - t0
    ok = runs == 50 and elapsed <= budget
    report(f"[{'PASS' if ok else 'FAIL'}] delaunay churn oracle: {runs} runs of "
           f"<=500 points, insert+remove, all checks clean in {elapsed:.1f}s "
           f"(budget {budget:.0f}s)")
    assert runs == 50
    assert elapsed <= budget, f"delaunay oracle runs took {elapsed:.1f}s"


def test_incremental_carving_matches_batch_rebuild(report):
    """20 seeded scenes: the incremental labeling equals a from-scratch
    rebuild (same alive tets, same FREE set), and no live ray crosses an
    occupied tet, all within a 120 s budget."""
    budget = 120.0
    t0 = time.perf_counter()
    scenes = 0
    for seed in range(20):
        lab = _random_carved_scene(2000 + seed)
        check_separation(lab)
        ref = rebuild_batch(lab)
        assert canon_alive_set(lab.tri) == canon_alive_set(ref.tri), \
            f"scene {seed}: triangulations diverge"
        assert canon_free_set(lab) == canon_free_set(ref), \
            f"scene {seed}: FREE sets diverge"
        scenes += 1
    elapsed = time.perf_counter() - t0
    ok = scenes == 20 and elapsed <= budget
    report(f"[{'PASS' if ok else 'FAIL'}] carving vs batch rebuild: {scenes} "
           f"scenes, FREE sets equal, rays stay in free space, {elapsed:.1f}s "
           f"(budget {budget:.0f}s)")
    assert scenes == 20
    assert elapsed <= budget, f"carving oracle scenes took {elapsed:.1f}s"


def test_every_surface_triangle_separates_free_from_occupied(report, cube_reconstruction):
    """Nudging each triangle centroid along its normal must land in a
    FREE tet, and against the normal in a non-FREE tet, for 100% of the
    triangles on every test scene."""
    mesh, _, lab = cube_reconstruction
    scenes = [(lab, mesh)]
    for seed in (31, 32):
        s = _random_carved_scene(seed)
        scenes.append((s, s.extract_surface()))
    checked = 0
    bad = 0
    for lab_i, mesh_i in scenes:
        eps = 1e-6 * float(np.linalg.norm(np.ptp(mesh_i.vertices, axis=0)))
        for i, tri in enumerate(mesh_i.triangles):
            cen = mesh_i.vertices[tri].mean(axis=0)
            n = mesh_i.normals[i]
            front = lab_i.is_free(lab_i.tri.locate(cen + eps * n))
            back = lab_i.is_free(lab_i.tri.locate(cen - eps * n))
            checked += 1
            if not front or back:
                bad += 1
    ok = bad == 0 and checked > 0
    report(f"[{'PASS' if ok else 'FAIL'}] surface orientation: {checked - bad}/"
           f"{checked} triangles have FREE on the normal side, OCCUPIED behind")
    assert checked > 0
    assert bad == 0, f"{bad} of {checked} triangles fail the side test"


def test_cube_scan_meets_precision_and_completeness_floors(report, cube_reconstruction):
    """The noise-free orbiting-camera cube must reconstruct to >=99%
    precision and >=90% completeness at a 2 cm threshold."""
    recon, truth, _ = cube_reconstruction
    p = precision(recon, truth, 0.02, samples=10000, seed=0)
    c = completeness(recon, truth, 0.02, samples=10000, seed=0)
    ok = p >= 99.0 and c >= 90.0
    report(f"[{'PASS' if ok else 'FAIL'}] cube reconstruction at tau=0.02m: "
           f"precision {p:.2f}% (>=99), completeness {c:.2f}% (>=90)")
    assert p >= 99.0, f"precision {p:.2f}% below 99%"
    assert c >= 90.0, f"completeness {c:.2f}% below 90%"


def test_first_force_event_lands_on_the_threshold_tick(report):
    """Descending onto the floor, the first nonzero-force event fires on
    exactly the tick where the gap first reaches 0.020 m, and its force
    is parallel to the face normal."""
    arm = _pendulum_arm()
    params = HapticParams(min_depth=0.020, magnitude=10.0, rate_hz=250.0)
    start, step, stop = 0.2, 0.004, 2.2
    script = ramp_script(1, 0, step, start, stop, TICK)
    floor = _floor_mesh()
    config = SessionConfig(
        scene=_floor_scene(), duration=2.4, seed=0, haptic=params, arm=arm,
        script=script, carved=floor, record_events=True,
    )
    session = Session(config)

    # Independent onset oracle: replay the script arithmetic and trig.
    times = [t for t, _ in script]
    idx, q, n_star, prev_gap, onset_gap = 0, 0.0, None, math.inf, math.inf
    for n in range(session.n_ticks):
        now = n * TICK
        while idx < len(times) and times[idx] <= now:
            q += step
            idx += 1
        gap = math.cos(q) - arm.ee_radius
        if gap <= params.min_depth:
            n_star, onset_gap = n, gap
            break
        prev_gap = gap
    assert n_star is not None
    # The boundary must be decisively crossed, not grazed within float noise.
    assert prev_gap - params.min_depth > 1e-9
    assert params.min_depth - onset_gap > 1e-9

    metrics = session.run()
    assert metrics.contacts, "descent never produced a contact"
    onset = metrics.contacts[0].local_time
    tick_err = abs(onset - n_star * TICK)

    forces = [ev for t, evs in session.event_log for ev in evs
              if float(np.linalg.norm(ev.force)) > 0.0]
    first = forces[0]
    face_n = floor.normals[first.triangle]
    parallel = np.allclose(first.force, params.magnitude * face_n, atol=1e-12)
    early = [ev for t, evs in session.event_log if t < n_star * TICK
             for ev in evs]
    ok = (tick_err < 1e-9 and parallel and first.gap <= params.min_depth
          and all(float(np.linalg.norm(ev.force)) == 0.0 and ev.gap > params.min_depth
                  for ev in early))
    report(f"[{'PASS' if ok else 'FAIL'}] contact onset: first force event at "
           f"t={onset:.4f}s (expected {n_star * TICK:.4f}s), gap "
           f"{first.gap * 1000:.1f}mm <= 20mm, force parallel to face normal")
    assert tick_err < 1e-9, f"onset at {onset}, expected tick {n_star}"
    assert first.gap <= params.min_depth
    assert parallel, f"force {first.force} vs normal {face_n}"
    assert first.force[2] > 0.0, "floor contact must push the proxy upward"
    for ev in early:
        assert float(np.linalg.norm(ev.force)) == 0.0
        assert ev.gap > params.min_depth


def test_predicted_contact_leads_the_echo_by_twice_the_latency(report):
    """With a one-way latency L the locally predicted contact must lead
    the echoed confirmation by 2L within +-4 ms, across ten seeded runs
    per latency setting."""
    arm = _pendulum_arm()
    params = HapticParams(min_depth=0.020, magnitude=10.0, rate_hz=250.0)
    worst = 0.0
    runs = 0
    for latency in (0.1, 0.5, 2.0):
        for seed in range(10):
            start = 0.1 + seed * 0.0137  # shift the contact phase off-tick
            config = SessionConfig(
                scene=_floor_scene(),
                duration=start + 1.6 + 2.0 * latency + 0.12,
                seed=seed, latency=latency, jitter=0.0,
                haptic=params, arm=arm,
                script=ramp_script(1, 0, 0.004, start, start + 1.6, TICK),
                carved=_floor_mesh(),
            )
            metrics = run_session(config)
            assert metrics.contacts, f"L={latency} seed={seed}: no contact"
            lead = metrics.contacts[0].lead
            assert not math.isnan(lead), f"L={latency} seed={seed}: echo lost"
            dev = abs(lead - 2.0 * latency)
            worst = max(worst, dev)
            assert dev <= 0.004 + 1e-9, \
                f"L={latency} seed={seed}: lead {lead:.4f}s vs 2L"
            runs += 1
    ok = runs == 30 and worst <= 0.004 + 1e-9
    report(f"[{'PASS' if ok else 'FAIL'}] predictive lead: {runs} runs at "
           f"L in {{0.1, 0.5, 2.0}}s, lead = 2L within {worst * 1000:.2f}ms "
           f"(tolerance 4ms)")
    assert runs == 30


def test_performance_budgets_hold_on_the_large_scene(report, tmp_path):
    """On the 22,998-triangle scene: haptic_step p99 <= 4 ms with eight
    proxies, keyframe integration sustains >= 15 keyframes/s at 300
    points each, and OBJ export finishes <= 60 ms at the expected size."""
    mesh = large_scene_mesh(np.random.default_rng(5))
    assert mesh.n_triangles == 22998
    bvh = build_bvh(mesh)
    arm = ArmModel.default()
    assert arm.n_proxies == 8
    rng = np.random.default_rng(9)
    params = HapticParams()
    haptic_step(arm, ArmState(np.zeros(arm.n_joints), np.zeros(arm.n_joints), 0.0),
                bvh, params)  # warm the kernels before timing
    steps_ms = []
    for n in range(300):
        q = arm.clamp(rng.uniform(-1.0, 1.0, arm.n_joints))
        state = ArmState(q, np.zeros(arm.n_joints), n * TICK)
        t0 = time.perf_counter()
        haptic_step(arm, state, bvh, params)
        steps_ms.append((time.perf_counter() - t0) * 1e3)
    p99 = float(np.percentile(steps_ms, 99))

    warm = CarvedLabeling(init_bounding((-40.0,) * 3, (40.0,) * 3))
    warm_rng = np.random.default_rng(1)
    for kf in range(2):
        warm.integrate_keyframe(
            kf, warm_rng.uniform(-1.0, 1.0, 3) + np.array([0.0, 0.0, 4.0]),
            [(kf * 40 + i, warm_rng.uniform(-2.5, 2.5, 3)) for i in range(40)])
    v, t = box_mesh((0.0, 0.0, 0.5), (1.0, 1.0, 1.0))
    poses = orbit_poses((0.0, 0.0, 0.5), 2.5, 16, heights=(1.2, 2.0))
    events = synth_scene(SceneSpec.from_mesh(v, t), poses, 0.0, 11,
                         points_per_keyframe=300)
    lab = CarvedLabeling(init_bounding((-40.0,) * 3, (40.0,) * 3))
    integrate_s = 0.0
    n_kf = 0
    for ev in events:
        if not isinstance(ev, NewKeyframe):
            continue
        fresh = {mp.id for mp in ev.new_points}
        obs = [(mp.id, mp.position) for mp in ev.new_points]
        obs += [(pid, None) for pid in ev.keyframe.observations if pid not in fresh]
        assert len(obs) >= 300
        t0 = time.perf_counter()
        lab.integrate_keyframe(ev.keyframe.id, ev.keyframe.pose.translation, obs)
        integrate_s += time.perf_counter() - t0
        n_kf += 1
    kf_rate = n_kf / integrate_s

    export_obj(_floor_mesh(), tmp_path / "warm.obj")  # warm the export path
    t0 = time.perf_counter()
    n_bytes = export_obj(mesh, tmp_path / "large.obj")
    export_ms = (time.perf_counter() - t0) * 1e3

    ok = (p99 <= 4.0 and kf_rate >= 15.0 and export_ms <= 60.0
          and 0.7e6 <= n_bytes <= 2.8e6)
    report(f"[{'PASS' if ok else 'FAIL'}] performance: haptic_step p99 "
           f"{p99:.2f}ms (<=4), integration {kf_rate:.1f} kf/s (>=15), "
           f"obj export {export_ms:.1f}ms (<=60) at {n_bytes / 1e6:.2f}MB "
           f"(0.7..2.8)")
    assert p99 <= 4.0, f"haptic_step p99 {p99:.2f}ms over budget"
    assert kf_rate >= 15.0, f"integration rate {kf_rate:.1f} kf/s under budget"
    assert export_ms <= 60.0, f"obj export took {export_ms:.1f}ms"
    assert 0.7e6 <= n_bytes <= 2.8e6, f"obj export is {n_bytes} bytes"


def test_same_seed_reruns_write_identical_metrics(report, tmp_path):
    """A jittery scripted session rerun with the same seed must produce a
    byte-identical metrics file."""
    arm = _pendulum_arm()
    script = (ramp_script(1, 0, 0.004, 0.2, 1.8, TICK)
              + ramp_script(1, 0, -0.004, 1.8, 3.4, TICK)
              + ramp_script(1, 0, 0.004, 3.4, 5.0, TICK))
    config = SessionConfig(
        scene=_floor_scene(), duration=6.2, seed=7, latency=0.5, jitter=0.05,
        haptic=HapticParams(min_depth=0.020, magnitude=10.0, rate_hz=250.0),
        arm=arm, script=script, carved=_floor_mesh(),
    )
    paths = []
    counts = []
    for run in range(2):
        metrics = run_session(config)
        counts.append(len(metrics.contacts))
        path = tmp_path / f"metrics_{run}.csv"
        metrics.write_csv(path)
        paths.append(path)
    first, second = (p.read_bytes() for p in paths)
    ok = first == second and counts[0] >= 2
    report(f"[{'PASS' if ok else 'FAIL'}] determinism: two seed-7 runs, "
           f"{counts[0]} contacts each, metrics files byte-identical: "
           f"{first == second}")
    assert counts[0] >= 2, "script should produce repeated contacts"
    assert counts[0] == counts[1]
    assert first == second, "same-seed metrics files differ"


def test_engine_runs_headless_from_a_bare_interpreter(report, tmp_path):
    """A fresh subprocess with no display and an empty working directory
    must import the full stack, run a session, and render the report
    figures to files."""
    workdir = tmp_path / "empty"
    workdir.mkdir()
    inner = textwrap.dedent("""
        import os
        import numpy as np
        import telecarve
        import telecarve.cli
        import telecarve.server
        from telecarve import (HapticParams, Session, SessionConfig,
                               quality_report, ramp_script)
        from telecarve.carving import SurfaceMesh
        from telecarve.contact import ArmModel, RevoluteJoint
        from telecarve.frontend import SceneSpec
        from telecarve.geometry import box_mesh, triangle_normals

        v = np.array([[-3., -3., 0.], [3., -3., 0.], [3., 3., 0.], [-3., 3., 0.]])
        t = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
        floor = SurfaceMesh(1, v, t, triangle_normals(v, t))
        arm = ArmModel(
            joints=(RevoluteJoint(axis=(0., 1., 0.), offset=(0., 0., 0.),
                                  limits=(-3., 3.)),),
            spheres=(), ee_offset=(0., 0., 1.), ee_radius=0.05)
        config = SessionConfig(
            scene=SceneSpec.from_mesh(v, t), duration=2.2, seed=0,
            latency=0.1, arm=arm, carved=floor,
            haptic=HapticParams(min_depth=0.02, magnitude=10.0, rate_hz=250.0),
            script=ramp_script(1, 0, 0.004, 0.1, 1.8, 1.0 / 250.0))
        metrics = Session(config).run()
        assert len(metrics.contacts) == 1, metrics.contacts
        assert not np.isnan(metrics.contacts[0].lead)

        bv, bt = box_mesh((0., 0., 0.5), (1., 1., 1.))
        truth = SurfaceMesh(0, bv, bt.astype(np.int32), triangle_normals(bv, bt))
        rv = bv * 1.001
        recon = SurfaceMesh(1, rv, bt.astype(np.int32), triangle_normals(rv, bt))
        out = quality_report(recon, truth, tau=0.05, samples=500, seed=0,
                             out_dir="qr", label="probe")
        for name in ("quality_vs_tau.png", "distance_histogram.png"):
            path = os.path.join("qr", name)
            assert os.path.getsize(path) > 1000, path
        print("headless-ok")
    """)
    env = {k: v for k, v in os.environ.items()
           if k not in ("DISPLAY", "WAYLAND_DISPLAY", "MPLBACKEND")}
    proc = subprocess.run(
        [sys.executable, "-c", inner], cwd=workdir, env=env,
        capture_output=True, text=True, timeout=300,
    )
    ok = proc.returncode == 0 and "headless-ok" in proc.stdout
    report(f"[{'PASS' if ok else 'FAIL'}] headless stack: bare subprocess "
           f"imported, simulated, and rendered figures (rc {proc.returncode})")
    assert proc.returncode == 0, f"stderr:\n{proc.stderr}"
    assert "headless-ok" in proc.stdout
