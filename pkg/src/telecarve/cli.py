"""Command line entry points: run sessions, evaluate meshes, export surfaces.

``telecarve run`` drives a scripted teleoperation session from a config
file, optionally recording the contact metrics CSV or serving the live
session to a browser UI.  ``telecarve eval`` compares a reconstructed
OBJ against a reference and writes a report directory (text table,
CSV row, figures).  ``telecarve export`` replays a recorded mapping
stream and writes the carved surface as OBJ.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .evaluation import DEFAULT_TAU_ROOM, load_surface, quality_report
from .frontend import load_trajectory
from .harness import Session, carve_stream, load_session_config
from .mesh_io import export_obj


def _parse_addr(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"--serve: expected host:port, got {addr!r}")
    return host or "127.0.0.1", int(port)


def _require_file(flag: str, path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ValueError(f"{flag}: no such file: {path}")
    return p


def _cmd_run(args) -> int:
    _require_file("--config", args.config)
    serve_addr = _parse_addr(args.serve) if args.serve else None
    config = load_session_config(args.config, seed=args.seed)
    session = Session(config)
    if serve_addr is not None:
        from .server import serve_session

        metrics = serve_session(session, host=serve_addr[0],
                                port=serve_addr[1],
                                linger=not args.no_linger)
    else:
        metrics = session.run()
    if args.record:
        metrics.write_csv(args.record)
        print(f"metrics -> {args.record}")
    print(f"sim {metrics.sim_duration:.3f} s  wall "
          f"{metrics.wall_duration:.3f} s  rtf {metrics.rtf:.2f}")
    print(f"contacts {len(metrics.contacts)}  poses "
          f"{metrics.poses_applied}  keyframes {metrics.keyframes}")
    for rec in metrics.contacts:
        if math.isnan(rec.echo_time):
            print(f"contact {rec.index}: local {rec.local_time:.3f} s  "
                  "echo never arrived")
        else:
            print(f"contact {rec.index}: local {rec.local_time:.3f} s  "
                  f"echo {rec.echo_time:.3f} s  lead {rec.lead:.3f} s")
    return 0


def _cmd_eval(args) -> int:
    _require_file("--recon", args.recon)
    _require_file("--gt", args.gt)
    recon = load_surface(args.recon, version=1)
    gt = load_surface(args.gt, version=0)
    out = quality_report(
        recon, gt, tau=args.tau, samples=args.samples, seed=args.seed,
        out_dir=args.out_dir, label=args.label,
    )
    sys.stdout.write(Path(out["report_txt"]).read_text(encoding="ascii"))
    print(f"report -> {out['report_txt']}")
    print(f"csv    -> {out['report_csv']}")
    for fig in out["figures"]:
        print(f"figure -> {fig}")
    return 0


def _cmd_export(args) -> int:
    _require_file("--trajectory", args.trajectory)
    events = load_trajectory(args.trajectory)
    mesh = carve_stream(events, margin=args.margin)
    n = export_obj(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_triangles} triangles, {n} bytes")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="telecarve",
        description="Predictive teleoperation: carve a surface from a "
                    "mapping stream and feel it before the echo returns.",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scripted session")
    run.add_argument("--config", required=True,
                     help="session description file (INI)")
    run.add_argument("--record", metavar="CSV",
                     help="write the contact metrics CSV here")
    run.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    run.add_argument("--serve", metavar="HOST:PORT",
                     help="pace the session to the wall clock and serve "
                          "it to the operator UI")
    run.add_argument("--no-linger", action="store_true",
                     help="with --serve, exit when the session ends "
                          "instead of keeping the final state up")
    run.set_defaults(func=_cmd_run)

    ev = sub.add_parser("eval", help="score a reconstruction against a "
                                     "reference mesh")
    ev.add_argument("--recon", required=True, help="reconstructed OBJ")
    ev.add_argument("--gt", required=True, help="reference OBJ")
    ev.add_argument("--tau", type=float, default=DEFAULT_TAU_ROOM,
                    help="distance threshold in meters "
                         f"(default {DEFAULT_TAU_ROOM})")
    ev.add_argument("--samples", type=int, default=10000,
                    help="surface samples per direction (default 10000)")
    ev.add_argument("--seed", type=int, default=0, help="sampling seed")
    ev.add_argument("--out-dir", default="telecarve_report",
                    help="report directory (default telecarve_report)")
    ev.add_argument("--label", default="scene",
                    help="scene label used in the report rows")
    ev.set_defaults(func=_cmd_eval)

    ex = sub.add_parser("export", help="carve a recorded mapping stream "
                                       "into an OBJ surface")
    ex.add_argument("--trajectory", required=True,
                    help="recorded mapping stream file")
    ex.add_argument("--out", required=True, help="output OBJ path")
    ex.add_argument("--margin", type=float, default=5.0,
                    help="carving box inflation factor (default 5)")
    ex.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
