"""HTTP surface: /api/v1, JSON bodies, bearer auth.

Errors carry a JSON body {code, message, details[]} with 401 for
authentication, 403 for authorization, 409 for version/idempotency
conflicts, 422 for validation and 428 for stale client configuration.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse, Response

from ..model import ValidationFailure
from .core import LabServer
from .errors import ApiError, RequestError

API = "/api/v1"


def create_app(data_dir: Path | str, smtp_url: str | None = None,
               server: LabServer | None = None) -> FastAPI:
    app = FastAPI(title="labpipe-server", docs_url=None, redoc_url=None)
    lab = server or LabServer(Path(data_dir), smtp_url=smtp_url)
    app.state.lab = lab

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.to_dict())

    @app.exception_handler(ValidationFailure)
    async def _validation(request: Request, exc: ValidationFailure):
        return JSONResponse(status_code=422, content={
            "code": "validation_failed", "message": "validation failed",
            "details": [e.to_dict() for e in exc.errors]})

    def principal(request: Request):
        header = request.headers.get("authorization", "")
        secret = header[7:] if header.lower().startswith("bearer ") else None
        return lab.authenticate(secret)

    async def body_json(request: Request) -> dict:
        raw = await request.body()
        try:
            doc = json.loads(raw) if raw else {}
        except json.JSONDecodeError as exc:
            raise RequestError(f"request body is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise RequestError("request body must be a JSON object")
        return doc

    @app.post(API + "/auth/token")
    async def auth_token(request: Request):
        caller = principal(request)
        body = await body_json(request)
        action = body.get("action", "create")
        target = body.get("principal_id")
        if not isinstance(target, str) or not target:
            raise RequestError("principal_id is required")
        if action == "create":
            roles = body.get("roles", [])
            if not isinstance(roles, list):
                raise RequestError("roles must be a list of role names")
            secret = lab.issue_token(caller, target, roles,
                                     display_name=body.get("display_name"))
            return {"principal_id": target, "secret": secret}
        if action == "revoke":
            lab.revoke_token(caller, target)
            return {"principal_id": target, "revoked": True}
        raise RequestError(f"unknown action '{action}'")

    @app.get(API + "/configs")
    async def list_configs(request: Request, since: int = 0):
        return lab.list_configs(principal(request), since=since)

    @app.put(API + "/configs/{kind}/{doc_id}")
    async def upsert_config(request: Request, kind: str, doc_id: str):
        caller = principal(request)
        body = await body_json(request)
        expected = request.headers.get("if-match-version")
        return lab.upsert_config(caller, kind, doc_id, body,
                                 expected_version=int(expected) if expected else None)

    @app.post(API + "/records")
    async def ingest_record(request: Request):
        caller = principal(request)
        body = await body_json(request)
        key = request.headers.get("idempotency-key", "")
        return lab.ingest_record(caller, body, key)

    @app.get(API + "/records")
    async def query_records(request: Request, page: int = 1, page_size: int = 50):
        caller = principal(request)
        filters = {k: v for k, v in request.query_params.items()
                   if k in ("study", "site", "protocol", "participant", "from", "to")}
        unknown = set(request.query_params) - set(filters) - {"page", "page_size"}
        if unknown:
            raise RequestError(f"unknown filter(s): {sorted(unknown)}")
        return lab.query_records(caller, filters, page=page, page_size=page_size)

    @app.post(API + "/files/begin")
    async def begin_upload(request: Request):
        caller = principal(request)
        body = await body_json(request)
        return lab.begin_upload(
            caller,
            content_hash=body.get("content_hash", ""),
            size_bytes=body.get("size_bytes", -1),
            linkage=body.get("linkage", {}),
            generated_file_id=body.get("generated_file_id", ""),
            original_path=body.get("original_path", ""))

    @app.put(API + "/files/{upload_id}/chunks/{index}")
    async def upload_chunk(request: Request, upload_id: str, index: int):
        caller = principal(request)
        data = await request.body()
        return lab.upload_chunk(caller, upload_id, index, data)

    @app.post(API + "/files/{upload_id}/commit")
    async def commit_upload(request: Request, upload_id: str):
        return lab.commit_upload(principal(request), upload_id)

    @app.get(API + "/files/{artifact_id}")
    async def get_file(request: Request, artifact_id: str):
        art, path = lab.get_file(principal(request), artifact_id)
        if not path.exists():
            return Response(status_code=404)
        return FileResponse(path, media_type="application/octet-stream",
                            filename=art["generated_file_id"] or artifact_id)

    @app.get(API + "/audit")
    async def read_audit(request: Request, since_seq: int = 0):
        return {"events": lab.read_audit(principal(request), since_seq=since_seq)}

    @app.get(API + "/healthz")
    async def healthz():
        return {"ok": True}

    return app
