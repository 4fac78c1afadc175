"""A local HTTP server speaking the remote-oracle protocol.

``mirror`` answers with the geometric oracle's verdict for the same scene,
task and configuration; ``malformed`` always reports saliency 1.7.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .config import PlannerConfig
from .oracle import Poi, SpatialRelation, assess_geometric
from .scene import Aabb

MODES = ("mirror", "malformed")


class _Handler(BaseHTTPRequestHandler):
    server_version = "inspectplan-stub/1"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def do_POST(self):
        if self.path.rstrip("/") != "/assess":
            self._send(404, {"error": "unknown path"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            doc = json.loads(self.rfile.read(length))
            verdict = self.server.answer(doc)
        except (ValueError, KeyError, TypeError) as exc:
            self._send(400, {"error": str(exc)})
            return
        self._send(200, verdict)

    def _send(self, status, doc):
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class StubOracleServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, mode: str, workspace=None, config: PlannerConfig | None = None):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode == "mirror" and workspace is None:
            raise ValueError("mirror mode needs a workspace")
        super().__init__(address, _Handler)
        self.mode = mode
        self.workspace = workspace
        self.omega_ref = (config or PlannerConfig()).oracle.omega_ref
        self.requests = 0
        self._lock = threading.Lock()

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def _poi(self, doc) -> Poi:
        # the wire format omits front axis and range; take them from the task when the name matches
        known = {p.name: p for p in self.workspace.task.pois}
        name = doc["name"]
        if name in known:
            return known[name]
        box = doc["aabb"]
        return Poi(name, SpatialRelation.parse(doc["relation"]), Aabb(box["min"], box["max"]),
                   visible_range=0.5 * self.workspace.diagonal)

    def answer(self, doc) -> dict:
        with self._lock:
            self.requests += 1
        if self.mode == "malformed":
            return {"visible": True, "saliency": 1.7, "relation_ok": True}
        v = assess_geometric(doc["position"], self._poi(doc["poi"]), self.workspace.sight, self.omega_ref)
        return {"visible": v.visible, "saliency": v.saliency, "relation_ok": v.relation_ok}


def start_stub(mode: str, workspace=None, config: PlannerConfig | None = None,
               host: str = "127.0.0.1", port: int = 0) -> StubOracleServer:
    """Start serving on a background thread; call ``shutdown()`` when done."""
    server = StubOracleServer((host, port), mode, workspace, config)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server
