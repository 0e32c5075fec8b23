import json
import socket
import struct
import time

import numpy as np
import pytest

from fovsplat import make_synthetic_scene, wsproto
from fovsplat.config import JobConfig, apply_overrides
from fovsplat.service import FRAME_MAGIC, StreamingServer


class WsClient:
    def __init__(self, host, port):
        self.sock = socket.create_connection((host, port), timeout=10.0)
        wsproto.client_handshake(self.sock, host, port)

    def send_json(self, obj):
        wsproto.send_text(self.sock, json.dumps(obj), mask=True)

    def recv(self, timeout=10.0):
        self.sock.settimeout(timeout)
        return wsproto.read_message(self.sock, mask_replies=True)

    def recv_json(self, timeout=10.0):
        op, payload = self.recv(timeout)
        assert op == wsproto.OP_TEXT
        return json.loads(payload.decode())

    def recv_frame_and_stats(self, timeout=10.0):
        """Collects messages until one binary frame plus its stats arrive."""
        frame = None
        while True:
            op, payload = self.recv(timeout)
            if op == wsproto.OP_BINARY:
                frame = payload
            elif op == wsproto.OP_TEXT:
                msg = json.loads(payload.decode())
                if msg.get("type") == "stats":
                    return frame, msg
            else:
                raise AssertionError(f"unexpected opcode {op}")

    def recv_until(self, predicate, max_frames=5, timeout=10.0):
        """Frames may still arrive for older state; drain until matched."""
        for _ in range(max_frames):
            frame, stats = self.recv_frame_and_stats(timeout)
            if predicate(stats):
                return frame, stats
        raise AssertionError("expected state never arrived")

    def close(self):
        wsproto.send_close(self.sock, mask=True)
        self.sock.close()


@pytest.fixture(scope="module")
def server():
    model = make_synthetic_scene("textured-plane", 60, seed=4)
    # FR-shaped hierarchy: peripheral levels keep only a small core
    bounds = np.ones(60, dtype=np.int32)
    bounds[::4] = 2
    bounds[::12] = 4
    model = model.with_quality_bounds(bounds.astype(np.int32), level_count=4)
    cfg = JobConfig()
    apply_overrides(
        cfg,
        [
            "serve.width=64",
            "serve.height=64",
            "serve.port=0",
            "display.pixels_per_degree=1.0",
            "foveation.region_starts=[0.0, 10.0, 20.0, 30.0]",
            "foveation.blend_band=0.5",
            "camera.radius=2.6",
        ],
    )
    srv = StreamingServer(model, cfg, port=0)
    srv.start()
    yield srv
    srv.stop()


def test_hello_then_first_frame(server):
    c = WsClient(*server.address)
    try:
        hello = c.recv_json()
        assert hello["type"] == "hello"
        assert hello["width"] == 64 and hello["height"] == 64
        c.send_json({"type": "gaze", "x": 32, "y": 32})
        frame, stats = c.recv_frame_and_stats()
        assert frame[:4] == FRAME_MAGIC
        w, h, fid = struct.unpack("<III", frame[4:16])
        assert (w, h) == (64, 64)
        assert len(frame) == 16 + w * h * 3
        assert stats["frame_id"] == fid
        assert stats["foveation"] is True
        assert len(stats["levels"]) >= 2  # multiple active levels at center gaze
    finally:
        c.close()


def test_gaze_coalescing_latest_wins(server):
    c = WsClient(*server.address)
    try:
        c.recv_json()  # hello
        # two rapid updates before any render of ours starts
        c.send_json({"type": "gaze", "x": 5, "y": 5})
        c.send_json({"type": "gaze", "x": 60, "y": 60})
        seen = []
        deadline = time.time() + 10
        while time.time() < deadline:
            frame, stats = c.recv_frame_and_stats(timeout=10)
            seen.append(stats)
            if stats["gaze"] == [60.0, 60.0]:
                break
        assert seen[-1]["gaze"] == [60.0, 60.0]
        # the intermediate gaze was dropped unless a render was already in flight
        assert len(seen) <= 2
    finally:
        c.close()


def test_foveation_toggle_changes_intersections(server):
    c = WsClient(*server.address)
    try:
        c.recv_json()
        c.send_json({"type": "gaze", "x": 32, "y": 32})
        _, fov_stats = c.recv_until(lambda s: s["foveation"] and s["gaze"] == [32.0, 32.0])
        c.send_json({"type": "config", "foveation": False})
        _, full_stats = c.recv_until(lambda s: not s["foveation"])
        assert list(full_stats["levels"].keys()) == ["1"]
        # full level-1 frame costs at least as much as the foveated one
        assert full_stats["total_intersections"] >= fov_stats["total_intersections"]
        c.send_json({"type": "config", "foveation": True})
        _, again = c.recv_until(lambda s: s["foveation"])
    finally:
        c.close()


def test_malformed_message_keeps_connection(server):
    c = WsClient(*server.address)
    try:
        c.recv_json()
        wsproto.send_text(c.sock, "this is not json", mask=True)
        msg = c.recv_json()
        assert msg["type"] == "error"
        # connection still works
        c.send_json({"type": "gaze", "x": 10, "y": 10})
        frame, stats = c.recv_until(lambda s: s["gaze"] == [10.0, 10.0])
        assert frame is not None
    finally:
        c.close()


def test_camera_message_changes_view(server):
    c = WsClient(*server.address)
    try:
        c.recv_json()
        c.send_json({"type": "gaze", "x": 32, "y": 32})
        f1, s1 = c.recv_until(lambda s: s["gaze"] == [32.0, 32.0])
        c.send_json({"type": "camera", "azimuth": 145.0, "radius": 3.4})
        f2, s2 = c.recv_frame_and_stats()
        assert s2["frame_id"] > s1["frame_id"]
        assert f1[16:] != f2[16:]
    finally:
        c.close()
