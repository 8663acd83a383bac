"""
HTTP/1.1 JSON service over one immutable pipeline snapshot.

Routes:
    POST /v1/search  {query, k?}  -> {hits: [{doc_id, score, rank}]}
    POST /v1/answer  {query, k?}  -> RagAnswer
    GET  /healthz                 -> {status, index_size, dim}
    GET  /v1/stats                -> request counters
"""

from __future__ import annotations

import json
import logging
import threading
import time
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

from .errors import EmptyText, GeneratorUnavailable, PatentRagError, RemoteUnavailable
from .ragpipe import RagPipeline

log = logging.getLogger(__name__)

MAX_BODY = 1 << 20


class BadRequest(Exception):
    pass


class RetrievalService:
    """Holds the current pipeline snapshot and request statistics."""

    def __init__(self, pipeline: Optional[RagPipeline] = None):
        self._pipeline = pipeline
        self._stats_lock = threading.Lock()
        self.queries_served = 0
        self.answers_served = 0
        self.errors = 0
        self._retrieval_ms_total = 0.0
        self.load_error: Optional[str] = None

    @property
    def pipeline(self) -> Optional[RagPipeline]:
        return self._pipeline

    def swap(self, pipeline: RagPipeline) -> None:
        # single reference assignment: in-flight requests keep the old snapshot
        self._pipeline = pipeline

    def load_async(self, factory: Callable[[], RagPipeline]) -> threading.Thread:
        def run():
            try:
                self.swap(factory())
            except Exception as exc:
                self.load_error = f"{type(exc).__name__}: {exc}"
                log.error("index load failed: %s", self.load_error)

        t = threading.Thread(target=run, name="index-loader", daemon=True)
        t.start()
        return t

    def record(self, retrieval_ms: float, answer: bool = False) -> None:
        with self._stats_lock:
            self.queries_served += 1
            self.answers_served += int(answer)
            self._retrieval_ms_total += retrieval_ms

    def record_error(self) -> None:
        with self._stats_lock:
            self.errors += 1

    def stats(self) -> dict:
        with self._stats_lock:
            n = self.queries_served
            return {
                "queries_served": n,
                "answers_served": self.answers_served,
                "errors": self.errors,
                "mean_retrieval_ms": self._retrieval_ms_total / n if n else 0.0,
            }

    # request bodies -> response bodies

    @staticmethod
    def _parse(body: dict, default_k: int) -> tuple[str, int]:
        if not isinstance(body, dict):
            raise BadRequest("body must be a JSON object")
        query = body.get("query")
        if not isinstance(query, str) or not query.strip():
            raise BadRequest("'query' must be a non-empty string")
        k = body.get("k", default_k)
        if isinstance(k, bool) or not isinstance(k, int) or k < 1:
            raise BadRequest("'k' must be a positive integer")
        return query, k

    def search(self, pipeline: RagPipeline, body: dict) -> dict:
        query, k = self._parse(body, pipeline.k)
        t0 = time.perf_counter()
        hits = pipeline.retrieve(query, k)
        self.record((time.perf_counter() - t0) * 1000)
        return {"hits": [h.to_dict() for h in hits]}

    def answer(self, pipeline: RagPipeline, body: dict) -> dict:
        query, k = self._parse(body, pipeline.k)
        ans = pipeline.answer(query, k)
        self.record(ans.retrieval_ms, answer=True)
        return ans.to_dict()


def _make_handler(service: RetrievalService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "patentrag"

        def log_message(self, fmt, *args):
            log.debug("%s - %s", self.address_string(), fmt % args)

        def _send(self, status: int, payload: dict) -> None:
            data = json.dumps(payload, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _loading(self) -> None:
            body = {"status": "loading"}
            if service.load_error:
                body = {"status": "error", "reason": service.load_error}
            self._send(HTTPStatus.SERVICE_UNAVAILABLE, body)

        def do_GET(self):
            if self.path == "/healthz":
                p = service.pipeline
                if p is None:
                    return self._loading()
                return self._send(HTTPStatus.OK, {"status": "ok", "index_size": p.index.size,
                                                  "dim": p.index.dimension})
            if self.path == "/v1/stats":
                return self._send(HTTPStatus.OK, service.stats())
            self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})

        def do_POST(self):
            routes = {"/v1/search": service.search, "/v1/answer": service.answer}
            route = routes.get(self.path)
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_BODY:
                self.close_connection = True
                return self._send(HTTPStatus.REQUEST_ENTITY_TOO_LARGE, {"error": "body too large"})
            raw = self.rfile.read(length) if length else b""
            if route is None:
                return self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})
            pipeline = service.pipeline
            if pipeline is None:
                return self._loading()
            try:
                body = json.loads(raw.decode("utf-8"))
                return self._send(HTTPStatus.OK, route(pipeline, body))
            except (ValueError, BadRequest, EmptyText) as exc:
                service.record_error()
                return self._send(HTTPStatus.BAD_REQUEST, {"error": "bad request", "reason": str(exc)})
            except (RemoteUnavailable, GeneratorUnavailable) as exc:
                service.record_error()
                return self._send(HTTPStatus.BAD_GATEWAY, {"error": "upstream unavailable", "reason": str(exc)})
            except PatentRagError as exc:
                service.record_error()
                return self._send(HTTPStatus.INTERNAL_SERVER_ERROR,
                                  {"error": type(exc).__name__, "reason": str(exc)})
            except Exception:
                service.record_error()
                log.exception("unhandled error on %s", self.path)
                return self._send(HTTPStatus.INTERNAL_SERVER_ERROR, {"error": "internal error"})

    return Handler


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    # the stdlib default backlog of 5 drops bursts of concurrent clients
    request_queue_size = 128


def make_server(service: RetrievalService, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    return _Server((host, port), _make_handler(service))


def serve(factory: Callable[[], RagPipeline], host: str, port: int) -> None:
    """Bind immediately, load the index in the background (503 until ready)."""
    service = RetrievalService()
    server = make_server(service, host, port)
    service.load_async(factory)
    log.info("listening on http://%s:%d", *server.server_address[:2])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
