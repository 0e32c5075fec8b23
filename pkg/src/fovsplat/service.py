"""Gaze-steered streaming service.

Speaks WebSocket on a local TCP socket. Clients send JSON text messages
(gaze, orbit camera, config toggles); the server answers every state change
with one binary frame (16-byte header: magic, width, height, frame id,
followed by RGB8 pixels) and a JSON stats message. Gaze updates coalesce:
only the newest state at render start is used, so at most one render is in
flight per client and stale gazes are dropped.
"""

from __future__ import annotations

import json
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import wsproto
from .camera import Camera, DisplayGeometry
from .config import JobConfig
from .foveation import build_foveation_map, render_foveated
from .model import FrModel
from .pngio import to_uint8
from .rasterize import render

FRAME_MAGIC = b"FVSP"


@dataclass
class ViewState:
    gaze: tuple[float, float]
    azimuth: float
    tilt: float
    radius: float
    foveation: bool
    force_level: int | None = None
    generation: int = 0


class ClientSession:
    def __init__(self, sock: socket.socket, server: "StreamingServer"):
        self.sock = sock
        self.server = server
        cfg = server.config
        w, h = cfg.serve.width, cfg.serve.height
        self.state = ViewState(
            gaze=(w / 2.0, h / 2.0),
            azimuth=cfg.camera.azimuth,
            tilt=cfg.camera.tilt,
            radius=cfg.camera.radius,
            foveation=cfg.serve.foveation and server.model.level_count >= cfg.foveation.level_count,
        )
        self.cond = threading.Condition()
        self.rendered_generation = -1
        self.running = True
        self.send_lock = threading.Lock()
        self.frame_id = 0

    # -- message handling --------------------------------------------------

    def handle_message(self, payload: bytes) -> None:
        try:
            msg = json.loads(payload.decode("utf-8"))
            kind = msg["type"]
            with self.cond:
                if kind == "gaze":
                    w, h = self.server.config.serve.width, self.server.config.serve.height
                    self.state.gaze = (
                        float(np.clip(msg["x"], 0.0, w)),
                        float(np.clip(msg["y"], 0.0, h)),
                    )
                elif kind == "camera":
                    self.state.azimuth = float(msg.get("azimuth", self.state.azimuth))
                    self.state.tilt = float(msg.get("tilt", self.state.tilt))
                    self.state.radius = float(msg.get("radius", self.state.radius))
                elif kind == "config":
                    if "foveation" in msg:
                        want = bool(msg["foveation"])
                        can = self.server.model.level_count >= self.server.config.foveation.level_count
                        self.state.foveation = want and can
                    if "force_level" in msg:
                        lv = msg["force_level"]
                        self.state.force_level = None if lv is None else int(lv)
                else:
                    raise ValueError(f"unknown message type {kind!r}")
                self.state.generation += 1
                self.cond.notify()
        except (ValueError, KeyError, TypeError) as exc:
            self.send_error(f"malformed message: {exc}")

    def send_error(self, message: str) -> None:
        with self.send_lock:
            try:
                wsproto.send_text(self.sock, json.dumps({"type": "error", "message": message}))
            except OSError:
                pass

    # -- rendering ----------------------------------------------------------

    def snapshot(self) -> ViewState:
        return ViewState(**vars(self.state))

    def render_loop(self) -> None:
        try:
            while True:
                with self.cond:
                    while self.running and self.rendered_generation == self.state.generation:
                        self.cond.wait(timeout=0.5)
                    if not self.running:
                        return
                    state = self.snapshot()
                    self.rendered_generation = state.generation
                self.render_and_send(state)
        except OSError:
            pass
        except Exception as exc:  # render failure: error frame, then drop the client
            self.send_error(f"render failed: {exc}")
            try:
                wsproto.send_close(self.sock)
                self.sock.close()
            except OSError:
                pass

    def render_and_send(self, state: ViewState) -> None:
        server = self.server
        cfg = server.config
        w, h = cfg.serve.width, cfg.serve.height
        camera = Camera.orbit(
            state.azimuth,
            state.tilt,
            state.radius,
            cfg.camera.target,
            fov_deg=cfg.camera.fov_deg,
            width=w,
            height=h,
            near=cfg.camera.near,
            far=cfg.camera.far,
        )
        t0 = time.perf_counter()
        if state.foveation and state.force_level is None:
            display = DisplayGeometry(w, h, cfg.display.pixels_per_degree, state.gaze)
            out = render_foveated(server.model, camera, cfg.foveation, display, cfg.render)
            image = out.image
            levels = {str(k): int(v) for k, v in out.stats.per_level_intersections.items()}
            total = out.stats.total_intersections
            fractions = out.stats.region_fractions
            heat = _tile_counts(out.tile_workloads, out.tile_grid)
            grid = out.tile_grid
        else:
            level = state.force_level or 1
            out = render(server.model, camera, level, cfg.render)
            image = out.image
            total = out.total_intersections
            levels = {str(level): total}
            fractions = [1.0 if lv == level else 0.0 for lv in range(1, cfg.foveation.level_count + 1)]
            heat = _tile_counts(out.tile_workloads, out.tile_grid)
            grid = out.tile_grid
        ms = (time.perf_counter() - t0) * 1000.0

        self.frame_id += 1
        header = FRAME_MAGIC + struct.pack("<III", w, h, self.frame_id)
        stats = {
            "type": "stats",
            "frame_id": self.frame_id,
            "render_ms": ms,
            "gaze": list(state.gaze),
            "foveation": bool(state.foveation and state.force_level is None),
            "levels": levels,
            "total_intersections": int(total),
            "region_fractions": fractions,
            "region_radii_px": [
                e * cfg.display.pixels_per_degree for e in cfg.foveation.region_starts[1:]
            ],
            "tile_grid": [grid[0], grid[1]],
            "tile_counts": heat,
            "width": w,
            "height": h,
        }
        with self.send_lock:
            wsproto.send_binary(self.sock, header + to_uint8(image).tobytes())
            wsproto.send_text(self.sock, json.dumps(stats))


def _tile_counts(workloads, grid) -> list[int]:
    txc, tyc = grid
    heat = [0] * (txc * tyc)
    for wk in workloads:
        heat[wk.tile_id[1] * txc + wk.tile_id[0]] += wk.intersection_count
    return heat


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: StreamingServer = self.server.owner  # type: ignore[attr-defined]
        sock = self.request
        try:
            wsproto.server_handshake(sock)
        except wsproto.WsError:
            return
        session = ClientSession(sock, server)
        with session.send_lock:
            wsproto.send_text(
                sock,
                json.dumps(
                    {
                        "type": "hello",
                        "width": server.config.serve.width,
                        "height": server.config.serve.height,
                        "pixels_per_degree": server.config.display.pixels_per_degree,
                        "level_count": server.config.foveation.level_count,
                        "model_levels": server.model.level_count,
                        "foveation": session.state.foveation,
                    }
                ),
            )
        worker = threading.Thread(target=session.render_loop, daemon=True)
        worker.start()
        try:
            while True:
                opcode, payload = wsproto.read_message(sock)
                if opcode == wsproto.OP_CLOSE:
                    break
                if opcode == wsproto.OP_TEXT:
                    session.handle_message(payload)
        except (wsproto.WsError, OSError):
            pass
        finally:
            with session.cond:
                session.running = False
                session.cond.notify_all()
            worker.join(timeout=5.0)
            wsproto.send_close(sock)


class StreamingServer:
    """Threaded WebSocket server bound to ``host:port``."""

    def __init__(self, model: FrModel, config: JobConfig, host: str | None = None, port: int | None = None):
        self.model = model
        self.config = config
        host = host if host is not None else config.serve.host
        port = port if port is not None else config.serve.port
        self._tcp = socketserver.ThreadingTCPServer((host, port), _Handler, bind_and_activate=False)
        self._tcp.allow_reuse_address = True
        self._tcp.daemon_threads = True
        self._tcp.owner = self  # type: ignore[attr-defined]
        self._tcp.server_bind()
        self._tcp.server_activate()
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._tcp.server_address  # type: ignore[return-value]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._tcp.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._tcp.shutdown()
        self._tcp.server_close()
        if self._thread:
            self._thread.join(timeout=5.0)

    def serve_forever(self) -> None:
        try:
            self._tcp.serve_forever()
        finally:
            self._tcp.server_close()
