"""Minimal in-process HTTP stand-in for an external sign detector.

Speaks the JSON pose/detection protocol used by ``query_detector``. Useful
for tests and for exercising the pipeline without a real model.
"""
from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable


class StubDetector:
    """Serve canned detections on ``127.0.0.1:<port>``.

    ``respond`` maps the list of request poses to a list of detection dicts.
    The first ``fail_first`` requests answer HTTP 500.
    """

    def __init__(self, respond: Callable[[list[dict]], list[dict]] | None = None, fail_first: int = 0,
                 raw_body: bytes | None = None):
        self.respond = respond or (lambda poses: [])
        self.fail_first = fail_first
        self.raw_body = raw_body
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/detect"

    def _handler(self):
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
                with stub._lock:
                    stub.requests.append(json.loads(body or b"{}"))
                    failing = len(stub.requests) <= stub.fail_first
                if failing:
                    self.send_response(500)
                    self.end_headers()
                    return
                if stub.raw_body is not None:
                    out = stub.raw_body
                else:
                    poses = json.loads(body).get("poses", [])
                    out = json.dumps({"detections": stub.respond(poses)}).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(out)))
                self.end_headers()
                self.wfile.write(out)

            def log_message(self, *args):
                pass

        return Handler

    def start(self) -> "StubDetector":
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
