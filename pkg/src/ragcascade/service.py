"""HTTP JSON API around the cascade router.

Endpoints:

* ``POST /query``   {"text", "session_id"} -> served answer with layer and latency
* ``POST /ingest``  raw JSONL passage lines in the body -> ingested count
* ``GET /stats``    usage ratios, hit counters, weighted cost/QPS
* ``POST /session/reset``  clears caches (and adaptive memory, per config)
* ``GET /healthz``

Errors come back as ``{"error": code, "detail": message}`` with a matching
status code. Requests beyond the configured in-flight limit are shed with
503 rather than queued.
"""

from __future__ import annotations

import logging
import socket
import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import ServiceConfig, build_router, kb_snapshot_path
from .errors import (
    AllLayersMissed,
    BackendUnavailable,
    CascadeError,
    EmptyQuery,
    MalformedJsonl,
    PortBindError,
)
from .knowledge import ingest_corpus
from .metrics import usage_ratio, weighted_cost, weighted_qps
from .model import validate_query
from .router import CascadeRouter

logger = logging.getLogger(__name__)

_STATUS_BY_ERROR = {
    EmptyQuery: 400,
    MalformedJsonl: 400,
    AllLayersMissed: 404,
    BackendUnavailable: 502,
}


class QueryRequest(BaseModel):
    text: str
    session_id: str = Field(default="default")


def create_app(router: CascadeRouter, config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="ragcascade", version="0.1.0")
    slots = threading.BoundedSemaphore(config.max_in_flight)
    app.state.inflight_slots = slots
    ingest_lock = threading.Lock()

    @app.exception_handler(CascadeError)
    async def _cascade_error(_request: Request, exc: CascadeError):
        status = 500
        for klass, code in _STATUS_BY_ERROR.items():
            if isinstance(exc, klass):
                status = code
                break
        return JSONResponse(
            status_code=status, content={"error": exc.code, "detail": str(exc)}
        )

    @app.middleware("http")
    async def _shed_overload(request: Request, call_next):
        if not slots.acquire(blocking=False):
            return JSONResponse(
                status_code=503,
                content={"error": "overloaded", "detail": "in-flight limit reached"},
            )
        try:
            return await call_next(request)
        finally:
            slots.release()

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.post("/query")
    async def query(body: QueryRequest):
        q = validate_query(body.text, body.session_id)
        answer, _event = router.route(q)
        response = answer.to_dict()
        response["query_id"] = q.id
        return response

    @app.post("/ingest")
    async def ingest(request: Request):
        raw = (await request.body()).decode("utf-8")
        with ingest_lock:
            before = len(router.knowledge_base)
            ingest_corpus(raw.splitlines(), router.embedder, kb=router.knowledge_base)
            ingested = len(router.knowledge_base) - before
        return {"ingested": ingested, "knowledge_base_size": len(router.knowledge_base)}

    @app.get("/stats")
    async def stats():
        payload = router.stats()
        events = router.trace.events()
        served = [e for e in events if e.serving_layer is not None]
        if served:
            usage = usage_ratio(served)
            payload["usage_ratios"] = usage.as_wire()
            payload["weighted_gpu_seconds_per_query"] = weighted_cost(
                config.cost_model, usage
            )
            payload["weighted_qps"] = weighted_qps(config.cost_model, usage)
        else:
            payload["usage_ratios"] = {tag: 0.0 for tag in payload["layer_counts"]}
            payload["weighted_gpu_seconds_per_query"] = None
            payload["weighted_qps"] = None
        return payload

    @app.post("/session/reset")
    async def session_reset():
        router.reset_session(
            clear_adaptive_memory=config.reset_clears_adaptive_memory
        )
        return {"status": "reset"}

    return app


def preflight_bind(listen_address: str) -> tuple[str, int]:
    """Check the listen address is bindable; raises :class:`PortBindError`."""
    host, _, port_text = listen_address.rpartition(":")
    port = int(port_text)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as exc:
        raise PortBindError(f"cannot bind {listen_address}: {exc}") from exc
    finally:
        probe.close()
    return host, port


def save_snapshot(router: CascadeRouter, config: ServiceConfig) -> None:
    path = kb_snapshot_path(config)
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(router.knowledge_base.snapshot())


def serve(config: ServiceConfig) -> None:
    """Build the system from config and run the HTTP service (blocking)."""
    import uvicorn

    host, port = preflight_bind(config.listen_address)
    router = build_router(config)
    app = create_app(router, config)
    logger.info(
        "serving on %s:%s (kb size %d)", host, port, len(router.knowledge_base)
    )
    uvicorn.run(app, host=host, port=port, log_level="info")
