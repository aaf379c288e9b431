"""Shared test helpers: independent reference oracles and a scriptable
in-process wire-protocol server.

The oracles here are deliberately written with different algorithms than
the package (explicit loops, breadth-first search, brute-force distance
scans) so the tests check against independent derivations, not against
the code under test.
"""
from __future__ import annotations

import base64
import json
import threading
from collections import deque
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from opsam.backends.wire import mask_to_png_b64
from opsam.grids import MaskGrid


def brute_force_deepest(mask: np.ndarray) -> tuple[int, int]:
    """Reference for edt_center: for every foreground pixel, scan every
    background pixel (frame border included) for the minimum squared
    distance; return the argmax, ties to smallest row then column.

    Works in integer squared distances, so there is no float tie issue.
    """
    mask = np.asarray(mask).astype(bool)
    padded = np.pad(mask, 1)
    bg = np.argwhere(~padded)
    fg = np.argwhere(padded)
    assert len(fg) > 0
    diff = fg[:, None, :] - bg[None, :, :]
    d2 = (diff * diff).sum(axis=2).min(axis=1)
    best = int(np.argmax(d2))  # fg is argwhere order: row-major = smallest row, then col
    return int(fg[best, 0]) - 1, int(fg[best, 1]) - 1


def components4(mask: np.ndarray) -> list[set[tuple[int, int]]]:
    """4-connected components by breadth-first search (independent of
    scipy.ndimage.label)."""
    mask = np.asarray(mask).astype(bool)
    seen = np.zeros_like(mask)
    out: list[set[tuple[int, int]]] = []
    for sy, sx in np.argwhere(mask):
        if seen[sy, sx]:
            continue
        comp = set()
        queue = deque([(int(sy), int(sx))])
        seen[sy, sx] = True
        while queue:
            y, x = queue.popleft()
            comp.add((y, x))
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ny, nx = y + dy, x + dx
                if 0 <= ny < mask.shape[0] and 0 <= nx < mask.shape[1]:
                    if mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
        out.append(comp)
    return out


class ScriptedSession:
    """Segmenter session that replays queued (mask, iou) pairs and records
    every prompt list it receives."""

    def __init__(self, script: list[tuple[np.ndarray, float]]):
        self.script = script
        self.calls: list[tuple] = []

    def segment(self, prompts):
        from opsam.backends.base import SegmenterResult

        self.calls.append(tuple(prompts))
        idx = min(len(self.calls) - 1, len(self.script) - 1)
        mask, iou = self.script[idx]
        return SegmenterResult(mask=MaskGrid(np.asarray(mask, dtype=np.uint8)), predicted_iou=iou)

    def close(self):
        pass


class ScriptedSegmenter:
    def __init__(self, script: list[tuple[np.ndarray, float]]):
        self.script = script
        self.sessions: list[ScriptedSession] = []

    def open(self, image):
        session = ScriptedSession(self.script)
        self.sessions.append(session)
        return session


class WireStub:
    """Minimal in-process protocol-1 server with scriptable faults.

    `fault` may be set by tests to one of: "protocol2" (wrong version in
    every response), "bad_mask_b64", "bad_iou", "short_floats",
    "nondeterministic", "wrong_grid".
    """

    def __init__(self, patch=8, input_size=32, d=6, segmenter_input=32,
                 kinds=("value", "query", "key", "feats")):
        self.patch = patch
        self.input_size = input_size
        self.d = d
        self.segmenter_input = segmenter_input
        self.kinds = tuple(kinds)
        self.fault = None
        self.segment_bodies: list[dict] = []
        self.encode_count = 0
        self.segment_mask: np.ndarray | None = None  # override returned mask
        self._server: ThreadingHTTPServer | None = None

    # request handlers -------------------------------------------------
    def _protocol(self) -> int:
        return 2 if self.fault == "protocol2" else 1

    def handle(self, method: str, path: str, body: dict) -> tuple[int, dict]:
        if method == "GET" and path == "/v1/capabilities":
            return 200, {
                "protocol": self._protocol(),
                "patch": self.patch,
                "input_size": self.input_size,
                "d": self.d,
                "kinds": list(self.kinds),
                "segmenter_input": self.segmenter_input,
                "value_embedding": "pre-projection",
            }
        if method == "POST" and path == "/v1/echo":
            return 200, {"protocol": self._protocol(), "payload_b64": body.get("payload_b64", "")}
        if method == "POST" and path == "/v1/encode":
            return self._encode(body)
        if method == "POST" and path == "/v1/segment":
            return self._segment(body)
        return 404, {"protocol": 1, "error": f"no such route {path}"}

    def _encode(self, body: dict) -> tuple[int, dict]:
        self.encode_count += 1
        side = self.input_size // self.patch
        if self.fault == "wrong_grid":
            side += 1
        resp = {"protocol": self._protocol(), "h": side, "w": side, "d": self.d}
        image_b64 = body.get("image_png_b64", "")
        for kind in body.get("embedding_kinds", []):
            count = side * side * self.d
            if self.fault == "short_floats":
                count -= 1
            seed_src = f"{kind}:{image_b64[:64]}".encode()
            if self.fault == "nondeterministic":
                seed_src += str(self.encode_count).encode()
            rng = np.random.default_rng(abs(hash(seed_src)) % (2**32))
            values = rng.normal(size=count).astype("<f4")
            resp[f"{kind}_f32le_b64"] = base64.b64encode(values.tobytes()).decode("ascii")
        return 200, resp

    def _segment(self, body: dict) -> tuple[int, dict]:
        self.segment_bodies.append(body)
        if self.fault == "bad_mask_b64":
            mask_b64 = "!!!not-base64!!!"
        else:
            if self.segment_mask is not None:
                grid = self.segment_mask
            else:
                grid = np.ones((self.segmenter_input, self.segmenter_input), np.uint8)
            mask_b64 = mask_to_png_b64(MaskGrid(grid))
        iou = 2.5 if self.fault == "bad_iou" else 0.75
        return 200, {"protocol": self._protocol(), "mask_png_b64": mask_b64, "predicted_iou": iou}

    # server plumbing ----------------------------------------------------
    def start(self) -> str:
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _reply(self, method):
                length = int(self.headers.get("Content-Length") or 0)
                body = json.loads(self.rfile.read(length) or b"{}") if length else {}
                status, payload = stub.handle(method, self.path, body)
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                self._reply("GET")

            def do_POST(self):
                self._reply("POST")

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        threading.Thread(target=self._server.serve_forever, daemon=True).start()
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def stop(self):
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()


@pytest.fixture
def wire_stub():
    stub = WireStub()
    stub.base_url = stub.start()
    yield stub
    stub.stop()


@pytest.fixture
def closed_port_url():
    """URL pointing at a port that was just verified to be closed."""
    import socket

    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    return f"http://127.0.0.1:{port}"
