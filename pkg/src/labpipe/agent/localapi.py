"""Loopback API consumed by the browser companion app.

Serves JSON under /local/v1 and, when a built frontend is available, its
static assets at /. Default port 47820, loopback only.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..model import ValidationFailure
from .core import Agent, AgentError, SessionConflict, UnknownProtocol

LOCAL_PORT = 47820


def create_local_app(agent: Agent, frontend_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="labpipe-agent", docs_url=None, redoc_url=None)
    app.state.agent = agent

    @app.exception_handler(ValidationFailure)
    async def _validation(request: Request, exc: ValidationFailure):
        return JSONResponse(status_code=422, content={
            "code": "validation_failed", "message": "validation failed",
            "details": [e.to_dict() for e in exc.errors]})

    @app.exception_handler(AgentError)
    async def _agent_error(request: Request, exc: AgentError):
        status = 409 if isinstance(exc, SessionConflict) else \
            404 if isinstance(exc, UnknownProtocol) else 400
        return JSONResponse(status_code=status, content={
            "code": type(exc).__name__, "message": str(exc), "details": []})

    @app.get("/local/v1/protocols")
    async def protocols():
        return {"protocols": agent.cached_protocols(),
                "cache_version": agent.cache["global_version"]}

    @app.get("/local/v1/templates/{template_id}")
    async def template(template_id: str, version: int | None = None):
        doc = agent.cached_template(template_id, version)
        if doc is None:
            return JSONResponse(status_code=404, content={
                "code": "not_found", "message": f"no template '{template_id}'",
                "details": []})
        return doc

    @app.post("/local/v1/sessions")
    async def start_session(request: Request):
        body = json.loads(await request.body() or b"{}")
        sess = agent.start_session(body.get("protocol_id", ""))
        return {"session_id": sess["session_id"], "protocol_id": sess["protocol_id"]}

    @app.post("/local/v1/sessions/{session_id}/records")
    async def submit(session_id: str, request: Request):
        body = json.loads(await request.body() or b"{}")
        record = agent.submit_form(session_id, body.get("values", {}))
        return {"record_id": record["record_id"],
                "idempotency_key": record["idempotency_key"],
                "linkage_state": record["linkage_state"],
                "expected_file_id": record["expected_file_id"]}

    @app.get("/local/v1/sessions/{session_id}/status")
    async def status(session_id: str):
        return agent.session_status(session_id)

    @app.post("/local/v1/sessions/{session_id}/scan")
    async def scan(session_id: str):
        changes = agent.scan_session(session_id)
        return {"created": changes.created, "modified": changes.modified,
                "unchanged": changes.unchanged}

    @app.post("/local/v1/sync")
    async def sync():
        report = agent.sync_once()
        return {"attempted": report.attempted, "acked": report.acked,
                "deferred": report.deferred}

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app
