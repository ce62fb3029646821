"""Local rating service: serves the report tree and persists ratings.

Strictly a desk-scale, localhost tool: static files from the report
directory, a stack list with per-rater rated status, and an append-only
ratings endpoint.  Rating writes are serialized through a single lock.

HTTP surface:

* ``GET /``                      index page
* ``GET /reports/<stack>.html``  individual report (any file under the dir)
* ``GET /api/stacks[?rater=R]``  manifest-ordered stack list + rated status
* ``GET /api/ratings[?rater=R]`` stored rating records
* ``POST /api/ratings``          submit a rating (422 on validation errors)
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from stackqc.errors import AddressInUse
from stackqc.report.ratings import (
    append_rating,
    latest_per_stack_rater,
    rating_from_payload,
    read_ratings,
    validate_rating_payload,
)

CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript",
    ".json": "application/json",
    ".css": "text/css",
    ".png": "image/png",
}


class RatingService:
    """State shared by request handlers."""

    def __init__(self, report_dir: str | Path, ratings_path: str | Path):
        self.report_dir = Path(report_dir).resolve()
        self.ratings_path = Path(ratings_path)
        stacks_file = self.report_dir / "stacks.json"
        if not stacks_file.exists():
            raise FileNotFoundError(f"{stacks_file}: render reports first")
        self.stacks = json.loads(stacks_file.read_text())
        # fail fast on a corrupt log rather than appending to garbage
        self.records = read_ratings(self.ratings_path)
        self.write_lock = threading.Lock()

    def rated_by(self, rater: str | None) -> dict[str, bool]:
        latest = latest_per_stack_rater(self.records)
        rated = {}
        for entry in self.stacks:
            sid = entry["stack_id"]
            if rater:
                rated[sid] = (sid, rater) in latest
            else:
                rated[sid] = any(key[0] == sid for key in latest)
        return rated

    def submit(self, payload: dict) -> tuple[int, dict]:
        problems = validate_rating_payload(payload)
        if not problems:
            known = {entry["stack_id"] for entry in self.stacks}
            if payload["stack_id"] not in known:
                problems.append(f"unknown stack_id {payload['stack_id']!r}")
        if problems:
            return 422, {"errors": problems}
        timestamp = datetime.now(timezone.utc).isoformat()
        record = rating_from_payload(payload, timestamp)
        with self.write_lock:
            append_rating(self.ratings_path, record)
            self.records.append(record)
        return 201, asdict(record)


class _Handler(BaseHTTPRequestHandler):
    service: RatingService  # set by make_server

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, code: int, payload) -> None:
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_file(self, relative: str) -> None:
        target = (self.service.report_dir / relative.lstrip("/")).resolve()
        if not str(target).startswith(str(self.service.report_dir)) or not target.is_file():
            self._send_json(404, {"error": f"not found: {relative}"})
            return
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", CONTENT_TYPES.get(target.suffix, "application/octet-stream"))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        parsed = urlparse(self.path)
        query = parse_qs(parsed.query)
        rater = query.get("rater", [None])[0]
        if parsed.path == "/api/stacks":
            rated = self.service.rated_by(rater)
            out = [dict(entry, rated=rated[entry["stack_id"]]) for entry in self.service.stacks]
            self._send_json(200, out)
        elif parsed.path == "/api/ratings":
            records = self.service.records
            if rater:
                records = [r for r in records if r.rater_id == rater]
            self._send_json(200, [asdict(r) for r in records])
        elif parsed.path == "/":
            self._send_file("index.html")
        else:
            self._send_file(parsed.path)

    def do_POST(self):
        parsed = urlparse(self.path)
        if parsed.path != "/api/ratings":
            self._send_json(404, {"error": "unknown endpoint"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length)
        try:
            payload = json.loads(raw.decode() or "null")
        except json.JSONDecodeError:
            self._send_json(422, {"errors": ["body is not valid JSON"]})
            return
        code, body = self.service.submit(payload)
        self._send_json(code, body)


def make_server(
    report_dir: str | Path,
    ratings_path: str | Path,
    host: str = "127.0.0.1",
    port: int = 8787,
) -> ThreadingHTTPServer:
    """Build the HTTP server (call ``serve_forever`` to run it)."""
    service = RatingService(report_dir, ratings_path)
    handler = type("BoundHandler", (_Handler,), {"service": service})
    try:
        server = ThreadingHTTPServer((host, port), handler)
    except OSError as err:
        raise AddressInUse(f"{host}:{port}: {err}") from err
    return server


def serve(report_dir, ratings_path, host="127.0.0.1", port=8787):
    """Blocking entry point used by the CLI."""
    server = make_server(report_dir, ratings_path, host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def start_in_thread(report_dir, ratings_path, host="127.0.0.1", port=0):
    """Run the service on a daemon thread; returns (server, base_url)."""
    server = make_server(report_dir, ratings_path, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    actual_port = server.server_address[1]
    return server, f"http://{host}:{actual_port}"
