"""HTTP/JSON operator interface of the controller.

:class:`NorthboundApi` is transport-free: ``handle(method, path, body)``
returns ``(status, json_obj)``.  :func:`serve` wraps it in a threaded
``http.server``.  Every call runs under the system lock, so HTTP requests are
linearized with the simulator's own event processing.

Routes::

    GET  /icn/caches/{id}/contents   -> [{"name", "csn"}, ...]
    POST /icn/mode                   {"mode"} -> {"previous", "mode"}
    GET  /icn/stats/interests        -> {name: count}
    POST /icn/caches/{id}/push       {"name", "csn", "content_b64"} -> {"cache", "name", "csn", "cached"}
    GET  /topology                   -> switches, hosts, links
    GET  /switches/{id}/flows        -> [{"priority", "match", "actions", "cookie", ...}]
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Dict, List, Optional, Tuple

from .naming import NamingError, parse_name
from .nrs import Mode, UnknownCache

Response = Tuple[int, Any]


class HttpError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def state_hash(system) -> str:
    """SHA-256 over a canonical dump of controller, switch and cache state."""
    with system.lock:
        doc = system.state_digest()
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


class NorthboundApi:
    """Route table over a system exposing ``controller``, ``switches``,
    ``caches``, ``topology``, ``lock``, ``set_mode``, ``push`` and
    ``state_digest`` (the simulator does)."""

    def __init__(self, system):
        self.system = system
        self._routes: List[Tuple[str, "re.Pattern[str]", Callable[..., Any]]] = [
            ("GET", re.compile(r"/icn/caches/([^/]+)/contents"), self.cache_contents),
            ("POST", re.compile(r"/icn/mode"), self.set_mode),
            ("GET", re.compile(r"/icn/stats/interests"), self.interest_stats),
            ("POST", re.compile(r"/icn/caches/([^/]+)/push"), self.push),
            ("GET", re.compile(r"/topology"), self.topology),
            ("GET", re.compile(r"/switches/([^/]+)/flows"), self.flows),
        ]

    def handle(self, method: str, path: str, body: Optional[bytes] = None) -> Response:
        path = path.split("?", 1)[0].rstrip("/") or "/"
        allowed = False
        for verb, pattern, fn in self._routes:
            m = pattern.fullmatch(path)
            if m is None:
                continue
            allowed = True
            if verb != method.upper():
                continue
            try:
                args = m.groups()
                if verb == "POST":
                    args += (_json_body(body),)
                with self.system.lock:
                    return 200, fn(*args)
            except HttpError as exc:
                return exc.status, {"error": exc.message}
        if allowed:
            return 405, {"error": f"{method} not allowed on {path}"}
        return 404, {"error": f"no route {path}"}

    # -- handlers

    def cache_contents(self, cache_id: str) -> List[Dict[str, Any]]:
        try:
            items = self.system.controller.cached_contents(cache_id)
        except UnknownCache:
            raise HttpError(404, f"unknown cache {cache_id!r}") from None
        return [{"name": n, "csn": c} for n, c in items]

    def set_mode(self, body: Dict[str, Any]) -> Dict[str, Any]:
        raw = body.get("mode")
        try:
            mode = Mode(raw)
        except ValueError:
            raise HttpError(400, f"mode must be 'caching' or 'mac_learning', got {raw!r}") from None
        previous, now = self.system.set_mode(mode)
        return {"previous": previous.value, "mode": now.value}

    def interest_stats(self) -> Dict[str, int]:
        return self.system.controller.interest_stats()

    def push(self, cache_id: str, body: Dict[str, Any]) -> Dict[str, Any]:
        if cache_id not in self.system.controller.caches:
            raise HttpError(404, f"unknown cache {cache_id!r}")
        try:
            name = parse_name(body["name"])
            csn = body.get("csn", 0)
            if isinstance(csn, bool) or not isinstance(csn, int) or csn < 0:
                raise ValueError("csn must be a non-negative integer")
            data = base64.b64decode(body["content_b64"], validate=True)
        except (KeyError, TypeError, ValueError, NamingError, binascii.Error) as exc:
            raise HttpError(400, f"bad push body: {exc}") from None
        if not data:
            raise HttpError(400, "empty content")
        self.system.push(cache_id, name, csn, data)
        cached = (str(name), csn) in self.system.controller.caches[cache_id].chunks
        return {"cache": cache_id, "name": str(name), "csn": csn, "cached": cached}

    def topology(self) -> Dict[str, Any]:
        doc = self.system.controller.view.to_json()
        doc["links"] = [
            {"a": f"{ln.a[0]}:{ln.a[1]}", "b": f"{ln.b[0]}:{ln.b[1]}", "latency_us": ln.latency_us}
            for ln in self.system.topology.links
        ]
        return doc

    def flows(self, switch_id: str) -> List[Dict[str, Any]]:
        sw = self.system.switches.get(switch_id)
        if sw is None:
            raise HttpError(404, f"unknown switch {switch_id!r}")
        return sw.flows_json()


def _json_body(body: Optional[bytes]) -> Dict[str, Any]:
    try:
        obj = json.loads(body or b"{}")
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HttpError(400, f"bad JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise HttpError(400, "body must be a JSON object")
    return obj


class _Handler(BaseHTTPRequestHandler):
    api: NorthboundApi
    protocol_version = "HTTP/1.1"

    def _dispatch(self) -> None:
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else None
        status, obj = self.api.handle(self.command, self.path, body)
        payload = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    do_GET = do_POST = do_PUT = do_DELETE = _dispatch

    def log_message(self, format: str, *args: Any) -> None:
        pass


def serve(api: NorthboundApi, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Start a listener on a daemon thread; ``server_address`` has the bound port."""
    handler = type("NorthboundHandler", (_Handler,), {"api": api})
    server = ThreadingHTTPServer((host, port), handler)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server
