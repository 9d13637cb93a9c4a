"""HTTP shard service and the scatter-gather query client.

Wire protocol::

    POST /query  {"signature": <base64 signature bytes>, "threshold": t,
                  "query_size": optional}
              -> {"candidates": [...], "diagnostics": {...}}
    GET  /health -> {"status": "ok", "fingerprint": ..., "domains": n}
"""
from __future__ import annotations

import base64
import binascii
import json
import logging
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional, Sequence

from .ensemble import Ensemble
from .minhash import Domain, MinHashSignature, SignatureFormatError

log = logging.getLogger(__name__)

MAX_BODY = 1 << 20


class BadRequest(ValueError):
    pass


def encode_signature(sig: MinHashSignature) -> str:
    return base64.b64encode(sig.to_bytes()).decode("ascii")


def decode_signature(text: str) -> MinHashSignature:
    try:
        raw = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise BadRequest(f"signature is not valid base64: {exc}") from exc
    try:
        return MinHashSignature.from_bytes(raw)
    except SignatureFormatError as exc:
        raise BadRequest(f"bad signature: {exc}") from exc


def parse_query(body: bytes) -> tuple[MinHashSignature, float, Optional[float], Optional[str]]:
    try:
        req = json.loads(body)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise BadRequest(f"body is not JSON: {exc}") from exc
    if not isinstance(req, dict):
        raise BadRequest("body must be a JSON object")
    if "signature" not in req or not isinstance(req["signature"], str):
        raise BadRequest("missing string field 'signature'")
    t = req.get("threshold")
    if isinstance(t, bool) or not isinstance(t, (int, float)):
        raise BadRequest("missing numeric field 'threshold'")
    if not 0.0 < t <= 1.0:
        raise BadRequest(f"threshold must be in (0, 1], got {t}")
    q = req.get("query_size")
    if q is not None and (isinstance(q, bool) or not isinstance(q, (int, float)) or q <= 0):
        raise BadRequest("query_size must be a positive number")
    fp = req.get("fingerprint")
    return decode_signature(req["signature"]), float(t), q, fp if isinstance(fp, str) else None


def _handler_for(index: Ensemble):
    fingerprint = index.config.fingerprint()

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            log.debug("%s " + fmt, self.address_string(), *args)

        def _send(self, status: int, payload: dict):
            data = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            if self.path != "/health":
                self._send(404, {"error": f"no route {self.path}"})
                return
            self._send(200, {
                "status": "ok", "fingerprint": fingerprint, "domains": len(index),
                "num_perm": index.config.num_perm, "seed": index.config.seed,
            })

        def do_POST(self):
            if self.path != "/query":
                self._send(404, {"error": f"no route {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
            except ValueError:
                length = -1
            if not 0 <= length <= MAX_BODY:
                self._send(400, {"error": "missing or oversized Content-Length"})
                return
            body = self.rfile.read(length)
            try:
                sig, t, q, client_fp = parse_query(body)
            except BadRequest as exc:
                self._send(400, {"error": str(exc)})
                return
            diagnostics = {"fingerprint": fingerprint}
            if client_fp is not None and client_fp != fingerprint:
                diagnostics["fingerprint_mismatch"] = {"client": client_fp, "shard": fingerprint}
            try:
                result = index.query(sig, t, q)
            except ValueError as exc:
                diagnostics["error"] = str(exc)
                self._send(400, {"error": str(exc), "diagnostics": diagnostics})
                return
            out = result.to_dict()
            diagnostics.update(
                query_size=out["query_size"], elapsed=out["elapsed"], partitions=out["partitions"],
            )
            self._send(200, {"candidates": out["candidates"], "diagnostics": diagnostics})

    return Handler


def make_server(index: Ensemble, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """A threaded server over a read-only index; ``port=0`` picks a free port."""
    server = ThreadingHTTPServer((host, port), _handler_for(index))
    server.daemon_threads = True
    return server


def serve(index: Ensemble, host: str = "127.0.0.1", port: int = 8080) -> None:
    server = make_server(index, host, port)
    log.info("serving %d domains on http://%s:%d", len(index), *server.server_address[:2])
    try:
        server.serve_forever()
    finally:
        server.server_close()


class BackgroundServer:
    """Context manager running :func:`make_server` on a daemon thread."""

    def __init__(self, index: Ensemble, host: str = "127.0.0.1", port: int = 0):
        self.server = make_server(index, host, port)
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
        self._thread.join()


def _request(url: str, payload: Optional[dict], timeout: float) -> dict:
    data = json.dumps(payload).encode() if payload is not None else None
    req = urllib.request.Request(url, data=data, headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        try:
            reason = json.loads(exc.read()).get("error", exc.reason)
        except (json.JSONDecodeError, AttributeError):
            reason = exc.reason
        raise RuntimeError(f"HTTP {exc.code}: {reason}") from exc


def health(endpoint: str, timeout: float = 5.0) -> dict:
    return _request(endpoint.rstrip("/") + "/health", None, timeout)


@dataclass
class ShardSet:
    """Shard endpoints that agree on one signature configuration."""

    endpoints: list
    fingerprint: str

    def __post_init__(self):
        if not self.endpoints:
            raise ValueError("a shard set needs at least one endpoint")

    @classmethod
    def discover(cls, endpoints: Sequence[str], timeout: float = 5.0) -> "ShardSet":
        """Ask every shard for its fingerprint and refuse a mixed set."""
        prints = {e: health(e, timeout)["fingerprint"] for e in endpoints}
        distinct = set(prints.values())
        if len(distinct) != 1:
            raise ValueError(f"shards disagree on configuration: {prints}")
        return cls(list(endpoints), distinct.pop())


@dataclass
class FanoutResult:
    candidates: set
    missing: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    latencies: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.missing

    def to_dict(self) -> dict:
        return {
            "candidates": sorted(self.candidates),
            "missing_shards": self.missing,
            "errors": self.errors,
            "latencies": self.latencies,
            "diagnostics": self.diagnostics,
        }


def fanout_query(
    shards: ShardSet,
    sig: MinHashSignature,
    threshold: float,
    query_size: Optional[float] = None,
    timeout: float = 10.0,
) -> FanoutResult:
    """Send the query to every shard at once and union the answers.

    Shards that fail or time out are listed in ``missing`` with their error;
    the union then covers only the shards that answered.
    """
    payload = {
        "signature": encode_signature(sig),
        "threshold": threshold,
        "query_size": query_size,
        "fingerprint": shards.fingerprint,
    }

    def call(endpoint):
        start = time.perf_counter()
        try:
            return endpoint, _request(endpoint.rstrip("/") + "/query", payload, timeout), None, time.perf_counter() - start
        except Exception as exc:  # noqa: BLE001 - any failure marks the shard missing
            return endpoint, None, exc, time.perf_counter() - start

    result = FanoutResult(set())
    with ThreadPoolExecutor(len(shards.endpoints)) as pool:
        for endpoint, resp, exc, elapsed in pool.map(call, shards.endpoints):
            result.latencies[endpoint] = elapsed
            if exc is not None:
                result.missing.append(endpoint)
                result.errors[endpoint] = str(exc) or type(exc).__name__
                continue
            result.candidates.update(resp["candidates"])
            result.diagnostics[endpoint] = resp.get("diagnostics", {})
    if result.missing:
        log.warning("partial result: %d of %d shards missing", len(result.missing), len(shards.endpoints))
    return result


def split_round_robin(domains: Sequence[Domain], n_shards: int) -> list[list[Domain]]:
    if n_shards < 1:
        raise ValueError("need at least one shard")
    return [list(domains[k::n_shards]) for k in range(n_shards)]
