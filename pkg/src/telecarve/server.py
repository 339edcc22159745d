"""Serve one live session to the operator UI.

The operator socket is a WebSocket at ``/ws`` carrying line-delimited
JSON: every text frame holds whole ``\\n``-terminated lines, one JSON
message per line, so the stream read as text is plain NDJSON.  The
server pushes ``{"t": "mesh", "version": N, "url": ...}`` whenever a
new surface snapshot is published (the OBJ itself is fetched from the
``/mesh/<version>.obj`` endpoint), ``{"t": "contact", ...}`` with the
haptic event fields at every local contact onset, and ``{"t": "state",
"local": ..., "echo": ...}`` joint snapshots at up to 30 Hz.  Clients
send ``{"t": "pose", ...}`` viewpoint samples (rate-capped, latest
wins), ``{"t": "jog", ...}`` and ``{"t": "stop"}`` arm commands.

The session is stepped on the asyncio loop, paced to the wall clock;
client callbacks mutate it only between ticks, so no locking is needed.
"""

from __future__ import annotations

import asyncio
import json
import logging
from pathlib import Path

import numpy as np
from aiohttp import WSMsgType, web

from .frontend import Pose
from .harness import EndEffectorJog, Session, SessionMetrics, Stop
from .mesh_io import obj_bytes

log = logging.getLogger("telecarve.server")

STATE_RATE_HZ = 30.0  # joint-state broadcast cap
MESH_CACHE = 8  # OBJ snapshots kept fetchable; older versions expire

_PLACEHOLDER = """<!doctype html>
<meta charset="utf-8"><title>telecarve</title>
<p>Session is live. The operator socket is at <code>/ws</code>; mesh
snapshots are at <code>/mesh/&lt;version&gt;.obj</code>. Build the UI
(<code>frontend/</code>) and pass its dist directory to get the full
viewer.</p>
"""


def _line(msg: dict) -> str:
    return json.dumps(msg, separators=(",", ":")) + "\n"


def _contact_msg(ev) -> dict:
    return {
        "t": "contact",
        "proxy_id": ev.proxy_id,
        "triangle": ev.triangle,
        "witness": [float(x) for x in ev.witness],
        "gap": float(ev.gap),
        "normal": [float(x) for x in ev.normal],
        "force": [float(x) for x in ev.force],
        "mesh_version": ev.mesh_version,
        "timestamp": float(ev.timestamp),
    }


def _state_msg(session: Session) -> dict:
    now = session.now
    return {
        "t": "state",
        "local": {"q": [float(x) for x in session.local.q], "t": now},
        "echo": {
            "q": [float(x) for x in session.follower.q],
            "t": max(0.0, now - session.config.latency),
        },
        "latency": session.config.latency,
        "mesh_version": session.mesh_version,
    }


class SessionServer:
    """One session, one HTTP server; ``run_paced`` drives both."""

    def __init__(self, session: Session, host: str = "127.0.0.1",
                 port: int = 0, ui_dir=None):
        self.session = session
        self.host = host
        self.port = port
        self.ui_dir = Path(ui_dir) if ui_dir is not None else None
        self._clients: set[web.WebSocketResponse] = set()
        self._objs: dict[int, bytes] = {}
        self._runner: web.AppRunner | None = None
        app = web.Application()
        app.router.add_get("/", self._index)
        app.router.add_get("/ws", self._ws)
        app.router.add_get("/mesh/{version}.obj", self._mesh)
        if self.ui_dir is not None:
            app.router.add_static("/ui/", self.ui_dir)
        self._app = app

    # -- http ---------------------------------------------------------------

    async def _index(self, request) -> web.StreamResponse:
        if self.ui_dir is not None:
            index = self.ui_dir / "index.html"
            if index.is_file():
                return web.FileResponse(index)
        return web.Response(text=_PLACEHOLDER, content_type="text/html")

    async def _mesh(self, request) -> web.Response:
        try:
            version = int(request.match_info["version"])
        except ValueError:
            raise web.HTTPBadRequest(text="version must be an integer")
        data = self._objs.get(version)
        if data is None:
            raise web.HTTPNotFound(text=f"no mesh version {version}")
        return web.Response(body=data, content_type="model/obj")

    def _mesh_msg(self, version: int) -> dict:
        return {"t": "mesh", "version": version,
                "url": f"/mesh/{version}.obj"}

    def _cache_current_mesh(self) -> int:
        """Snapshot the session's current surface for fetching; returns
        its version, or -1 when no surface is published yet."""
        s = self.session
        v = s.mesh_version
        if v < 0 or s.bvh_local is None:
            return -1
        if v not in self._objs:
            self._objs[v] = obj_bytes(s.bvh_local.mesh)
            while len(self._objs) > MESH_CACHE:
                del self._objs[min(self._objs)]
        return v

    # -- websocket ------------------------------------------------------------

    async def _ws(self, request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse(heartbeat=30.0)
        await ws.prepare(request)
        self._clients.add(ws)
        try:
            v = self._cache_current_mesh()
            if v >= 0:
                await ws.send_str(_line(self._mesh_msg(v)))
            await ws.send_str(_line(_state_msg(self.session)))
            async for msg in ws:
                if msg.type == WSMsgType.TEXT:
                    for raw in msg.data.splitlines():
                        if raw.strip():
                            await self._handle(ws, raw)
                elif msg.type == WSMsgType.ERROR:
                    break
        finally:
            self._clients.discard(ws)
        return ws

    async def _handle(self, ws, raw: str) -> None:
        try:
            msg = json.loads(raw)
            kind = msg.get("t")
            if kind == "pose":
                qx, qy, qz, qw = msg["quaternion"]
                pose = Pose.from_quat(qx, qy, qz, qw, msg["position"])
                self.session.stream_operator_pose(pose)
            elif kind == "jog":
                dq = np.asarray(msg["dq"], dtype=np.float64)
                self.session.submit_command(EndEffectorJog(dq))
            elif kind == "stop":
                self.session.submit_command(Stop())
            else:
                raise ValueError(f"unknown message type {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            await ws.send_str(_line({"t": "error", "message": str(exc)}))

    async def _broadcast(self, msg: dict) -> None:
        if not self._clients:
            return
        data = _line(msg)
        dead = []
        for ws in list(self._clients):
            try:
                await ws.send_str(data)
            except (ConnectionError, RuntimeError):
                dead.append(ws)
        for ws in dead:
            self._clients.discard(ws)

    # -- lifecycle ------------------------------------------------------------

    async def start(self) -> str:
        """Bind and return the base URL (resolves port 0 to the real one)."""
        self._runner = web.AppRunner(self._app)
        await self._runner.setup()
        site = web.TCPSite(self._runner, self.host, self.port)
        await site.start()
        host, port = self._runner.addresses[0][:2]
        self.port = port
        return f"http://{host}:{port}"

    async def stop(self) -> None:
        for ws in list(self._clients):
            await ws.close()
        if self._runner is not None:
            await self._runner.cleanup()

    async def run_paced(self, close_when_done: bool = False) -> SessionMetrics:
        """Step the session in real time, broadcasting as it goes.

        With ``close_when_done`` the operator sockets are closed after
        the final state flush; by default they stay open so clients can
        keep viewing the finished scene.
        """
        s = self.session
        loop = asyncio.get_running_loop()
        state_every = max(1, round(s.config.haptic.rate_hz / STATE_RATE_HZ))
        wall0 = loop.time()
        for n in range(s.n_ticks):
            contacts_before = len(s.metrics.contacts)
            version_before = s.mesh_version
            s.step(n)
            if s.mesh_version != version_before:
                v = self._cache_current_mesh()
                if v >= 0:
                    await self._broadcast(self._mesh_msg(v))
            if len(s.metrics.contacts) > contacts_before:
                for ev in s.local_events:
                    if float(np.linalg.norm(ev.force)) > 0.0:
                        await self._broadcast(_contact_msg(ev))
            if n % state_every == 0:
                await self._broadcast(_state_msg(s))
            lag = wall0 + (n + 1) * s.tick - loop.time()
            if lag > 0:
                await asyncio.sleep(lag)
        metrics = s.finish(loop.time() - wall0)
        await self._broadcast(_state_msg(s))
        if close_when_done:
            for ws in list(self._clients):
                await ws.close()
        return metrics


def _default_ui_dir():
    dist = Path("frontend") / "dist"
    return dist if (dist / "index.html").is_file() else None


def serve_session(session: Session, host: str = "127.0.0.1",
                  port: int = 8765, *, linger: bool = True,
                  ui_dir=None) -> SessionMetrics:
    """Run one session under a live server; blocks until it finishes
    (and, with ``linger``, until interrupted)."""

    async def _main() -> SessionMetrics:
        server = SessionServer(session, host, port,
                               ui_dir=ui_dir if ui_dir is not None
                               else _default_ui_dir())
        url = await server.start()
        print(f"serving on {url} (operator socket at /ws)")
        try:
            metrics = await server.run_paced()
            if linger:
                print("session finished; serving final state, Ctrl-C to exit")
                await asyncio.Event().wait()
            return metrics
        finally:
            await server.stop()

    try:
        return asyncio.run(_main())
    except KeyboardInterrupt:
        log.info("interrupted; returning partial metrics")
        return session.metrics
