"""HTTP client for the central server, with a swappable transport.

Tests mount the server in-process (httpx ASGI transport) and wrap it in
fault injectors; production uses the default httpx transport.
"""

from __future__ import annotations

from typing import Any, Optional

import httpx


class NetworkError(Exception):
    """Request never produced a server response (drop, refusal, timeout)."""


class ServerError(Exception):
    """The server answered with an error body {code, message, details[]}."""

    def __init__(self, status: int, body: dict):
        self.status = status
        self.code = body.get("code", "unknown")
        self.body = body
        super().__init__(f"{status} {self.code}: {body.get('message', '')}")


class ServerClient:
    def __init__(self, base_url: str, token: str,
                 transport: Optional[httpx.BaseTransport] = None,
                 timeout: float = 30.0):
        self._client = httpx.Client(
            base_url=base_url.rstrip("/") + "/api/v1",
            headers={"Authorization": f"Bearer {token}"},
            transport=transport, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def _call(self, method: str, path: str, **kw) -> Any:
        try:
            resp = self._client.request(method, path, **kw)
        except httpx.HTTPError as exc:
            raise NetworkError(str(exc)) from exc
        if resp.status_code >= 400:
            try:
                body = resp.json()
            except ValueError:
                body = {"code": "unknown", "message": resp.text}
            raise ServerError(resp.status_code, body)
        return resp.json()

    def list_configs(self, since: int = 0) -> dict:
        return self._call("GET", "/configs", params={"since": since})

    def ingest_record(self, body: dict, idempotency_key: str) -> dict:
        return self._call("POST", "/records", json=body,
                          headers={"Idempotency-Key": idempotency_key})

    def begin_upload(self, content_hash: str, size_bytes: int, linkage: dict,
                     generated_file_id: str = "", original_path: str = "") -> dict:
        return self._call("POST", "/files/begin", json={
            "content_hash": content_hash, "size_bytes": size_bytes,
            "linkage": linkage, "generated_file_id": generated_file_id,
            "original_path": original_path})

    def upload_chunk(self, upload_id: str, index: int, data: bytes) -> dict:
        return self._call("PUT", f"/files/{upload_id}/chunks/{index}", content=data)

    def commit_upload(self, upload_id: str) -> dict:
        return self._call("POST", f"/files/{upload_id}/commit")

    def healthz(self) -> bool:
        try:
            self._call("GET", "/healthz")
        except (NetworkError, ServerError):
            return False
        return True
