"""Server operations behind the HTTP layer.

All state lives under a single data directory so a restarted process (or a
second instance pointed at the same directory in tests) sees exactly the
committed state. See storage.py for the durability story.
"""

from __future__ import annotations

import hashlib
import json
import threading
import uuid
from pathlib import Path
from typing import Any, Optional

from ..model import (
    ValidationFailure,
    compile_protocol,
    compile_template,
    now_rfc3339,
    parse_rfc3339,
    validate_submission,
)
from ..notify import Notifier, Subscription, default_registry
from .auth import Principal, PrincipalDirectory
from .errors import (
    AuthorizationDenied,
    Conflict,
    NotFound,
    RequestError,
    StaleConfig,
    ValidationRejected,
)
from .storage import AuditLog, BlobStore, Counter, DocumentStore, VersionConflict

CHUNK_SIZE = 4 * 1024 * 1024
UPLOAD_TTL_SECONDS = 24 * 3600

CONFIG_KINDS = ("template", "protocol", "site", "subscription")


class LabServer:
    def __init__(self, data_dir: Path, notifier: Optional[Notifier] = None,
                 smtp_url: str | None = None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.store = DocumentStore(self.data_dir / "docs")
        self.blobs = BlobStore(self.data_dir / "blobs")
        self.audit = AuditLog(self.data_dir / "audit.jsonl")
        self.global_version = Counter(self.data_dir / "catalog_version")
        self.uploads_dir = self.data_dir / "uploads"
        self.uploads_dir.mkdir(exist_ok=True)
        self.notifier = notifier or Notifier(
            default_registry(smtp_url), on_failure=self._audit_notify_failure)
        self._ingest_lock = threading.Lock()
        self._catalog_lock = threading.Lock()
        self._bootstrap_secret: str | None = None
        self.principals = PrincipalDirectory(self.store)
        self._maybe_bootstrap()

    # -- bootstrap ------------------------------------------------------------

    def _maybe_bootstrap(self) -> None:
        if not self.principals.exists("root"):
            self.principals.create("root", "bootstrap administrator")
            self._bootstrap_secret = self.principals.issue_token("root", ["admin"])

    def bootstrap_token(self) -> str | None:
        """One-time-visible admin secret minted on first start."""
        secret, self._bootstrap_secret = self._bootstrap_secret, None
        return secret

    # -- auth -----------------------------------------------------------------

    def authenticate(self, secret: str | None) -> Principal:
        return self.principals.authenticate(secret)

    def authorize(self, principal: Principal, permission: str, resource: str) -> None:
        if principal.can(permission):
            return
        self.audit.append(at=now_rfc3339(), principal_id=principal.principal_id,
                          action=permission, resource=resource, outcome="denied")
        raise AuthorizationDenied(
            f"'{principal.principal_id}' lacks {permission} on {resource}")

    def issue_token(self, caller: Principal, principal_id: str, roles: list[str],
                    display_name: str | None = None) -> str:
        self.authorize(caller, "admin", f"principal/{principal_id}")
        if display_name is not None and not self.principals.exists(principal_id):
            self.principals.create(principal_id, display_name)
        secret = self.principals.issue_token(principal_id, roles)
        self.audit.append(at=now_rfc3339(), principal_id=caller.principal_id,
                          action="issue_token", resource=f"principal/{principal_id}",
                          outcome="allowed")
        return secret

    def revoke_token(self, caller: Principal, principal_id: str) -> None:
        self.authorize(caller, "admin", f"principal/{principal_id}")
        self.principals.revoke(principal_id)
        self.audit.append(at=now_rfc3339(), principal_id=caller.principal_id,
                          action="revoke_token", resource=f"principal/{principal_id}",
                          outcome="allowed")

    # -- config catalog ---------------------------------------------------------

    def upsert_config(self, caller: Principal, kind: str, doc_id: str, doc: dict,
                      expected_version: Optional[int] = None) -> dict:
        self.authorize(caller, "config_write", f"configs/{kind}/{doc_id}")
        if kind not in CONFIG_KINDS:
            raise RequestError(f"unknown config kind '{kind}'")
        validated = self._validate_config(kind, doc_id, doc)
        collection = f"cfg_{kind}"
        with self._catalog_lock:
            current = self.store.latest_version(collection, doc_id)
            if expected_version is not None and expected_version != current:
                raise Conflict(f"{kind}/{doc_id}: expected v{expected_version}, "
                               f"have v{current}")
            version = current + 1
            stored = dict(validated)
            if kind == "template":
                stored["version"] = version
            gv = self.global_version.next()
            envelope = {"kind": kind, "id": doc_id, "version": version,
                        "changed_at_global": gv, "doc": stored}
            try:
                self.store.put(collection, doc_id, envelope, expected_version=current)
            except VersionConflict as exc:  # unreachable under the catalog lock
                raise Conflict(str(exc)) from exc
        self.audit.append(at=now_rfc3339(), principal_id=caller.principal_id,
                          action="upsert_config", resource=f"configs/{kind}/{doc_id}",
                          outcome="allowed")
        return {"kind": kind, "id": doc_id, "version": version, "global_version": gv}

    def _validate_config(self, kind: str, doc_id: str, doc: dict) -> dict:
        try:
            if kind == "template":
                t = compile_template({**doc, "version": doc.get("version", 1)})
                if t.template_id != doc_id:
                    raise RequestError(
                        f"template_id '{t.template_id}' does not match URL id '{doc_id}'")
                return t.to_dict()
            if kind == "protocol":
                p = compile_protocol(doc)
                if p.protocol_id != doc_id:
                    raise RequestError(
                        f"protocol_id '{p.protocol_id}' does not match URL id '{doc_id}'")
                if self._get_template(p.template_id, p.template_version) is None:
                    raise ValidationRejected(
                        f"protocol references template {p.template_id} "
                        f"v{p.template_version}, not in catalog")
                return p.to_dict()
            if kind == "site":
                if not isinstance(doc.get("site_id"), str) or doc["site_id"] != doc_id:
                    raise RequestError("site document needs site_id matching URL id")
                return {"site_id": doc_id, "name": str(doc.get("name", doc_id))}
            if kind == "subscription":
                return self._validate_subscription(doc_id, doc)
        except ValidationFailure as exc:
            raise ValidationRejected("config rejected",
                                     details=[e.to_dict() for e in exc.errors]) from exc
        raise RequestError(f"unknown config kind '{kind}'")

    def _validate_subscription(self, doc_id: str, doc: dict) -> dict:
        plugin = doc.get("plugin")
        if not isinstance(plugin, str) or not self.notifier.registry.has(plugin):
            raise ValidationRejected(f"subscription plugin {plugin!r} is not registered")
        pattern = doc.get("topic_pattern")
        if not isinstance(pattern, str) or not pattern:
            raise ValidationRejected("subscription needs a topic_pattern")
        if "*" in pattern and not pattern.endswith("*"):
            raise ValidationRejected("wildcard only allowed as trailing segment")
        params = doc.get("params", {})
        if plugin == "email" and not params.get("recipients"):
            raise ValidationRejected("email subscriptions need at least one recipient")
        return {"subscription_id": doc_id, "topic_pattern": pattern,
                "plugin": plugin, "params": params}

    def list_configs(self, caller: Principal, since: int = 0) -> dict:
        self.authorize(caller, "config_read", "configs")
        documents = []
        for kind in CONFIG_KINDS:
            for _, _, env in self.store.iter_latest(f"cfg_{kind}"):
                if "changed_at_global" not in env:
                    continue  # half-written upsert, never finalized
                if env["changed_at_global"] > since:
                    documents.append(env)
        documents.sort(key=lambda e: e["changed_at_global"])
        return {"global_version": self.global_version.value, "documents": documents}

    def _get_template(self, template_id: str, version: int) -> dict | None:
        env = self.store.get("cfg_template", template_id)
        if env is None or "doc" not in env:
            return None
        if env["version"] == version:
            return env["doc"]
        older = self.store.get("cfg_template", template_id, version)
        if older is None or "doc" not in older:
            return None
        return older["doc"]

    def _get_protocol(self, protocol_id: str) -> dict | None:
        env = self.store.get("cfg_protocol", protocol_id)
        if env is None or "doc" not in env:
            return None
        return env["doc"]

    def _subscriptions(self) -> list[Subscription]:
        subs = []
        for _, _, env in self.store.iter_latest("cfg_subscription"):
            if "doc" in env:
                subs.append(Subscription.from_doc(env["doc"]))
        return subs

    # -- records ----------------------------------------------------------------

    def ingest_record(self, caller: Principal, body: dict, idempotency_key: str) -> dict:
        self.authorize(caller, "record_write", "records")
        if not idempotency_key:
            raise RequestError("Idempotency-Key header is required")
        protocol = self._get_protocol(body.get("protocol_id", ""))
        if protocol is None:
            raise ValidationRejected(f"unknown protocol '{body.get('protocol_id')}'")
        template_id = protocol["template"]["template_id"]
        tversion = body.get("template_version")
        if not isinstance(tversion, int):
            raise RequestError("template_version must be an integer")
        tdoc = self._get_template(template_id, tversion)
        if tdoc is None:
            raise StaleConfig(
                f"server has no template {template_id} v{tversion}; refresh configs")
        template = compile_template(tdoc)
        try:
            typed = validate_submission(template, body.get("values", {}))
        except ValidationFailure as exc:
            raise ValidationRejected("record rejected",
                                     details=[e.to_dict() for e in exc.errors]) from exc

        # record id derives from the idempotency key, so any replay converges
        # on the same document and two records with equal keys cannot coexist
        record_id = "r-" + hashlib.sha256(idempotency_key.encode()).hexdigest()[:32]
        record = {
            "record_id": record_id,
            "idempotency_key": idempotency_key,
            "protocol_id": protocol["protocol_id"],
            "template_id": template_id,
            "template_version": tversion,
            "values": typed,
            "collected_at": self._collected_at(body),
            "collector": body.get("collector") or caller.principal_id,
            "session_id": str(body.get("session_id", "")),
        }
        with self._ingest_lock:
            created = self.store.put_if_absent("records", record_id, record)
        if created:
            self.audit.append(at=now_rfc3339(), principal_id=caller.principal_id,
                              action="ingest_record", resource=f"records/{record_id}",
                              outcome="allowed")
            self.publish_event(f"sample.collected.{protocol['study_id']}", {
                "study": protocol["study_id"],
                "protocol_id": protocol["protocol_id"],
                "collector": record["collector"],
                "at": record["collected_at"],
                "record_id": record_id,
                "file_count": 0,
            })
        return {"record_id": record_id,
                "status": "created" if created else "already_existing"}

    @staticmethod
    def _collected_at(body: dict) -> str:
        raw = body.get("collected_at")
        if not raw:
            return now_rfc3339()
        try:
            parse_rfc3339(raw)
        except ValueError as exc:
            raise RequestError(f"collected_at: {exc}") from exc
        return raw

    def query_records(self, caller: Principal, filters: dict,
                      page: int = 1, page_size: int = 50) -> dict:
        self.authorize(caller, "record_read", "records")
        if page < 1 or page_size < 1 or page_size > 1000:
            raise RequestError("page must be >= 1 and 1 <= page_size <= 1000")
        for bound in ("from", "to"):
            if filters.get(bound):
                try:
                    parse_rfc3339(filters[bound])
                except ValueError as exc:
                    raise RequestError(f"bad '{bound}' filter: {exc}") from exc
        selected = []
        for _, _, rec in self.store.iter_latest("records"):
            if self._matches(rec, filters):
                selected.append(rec)
        selected.sort(key=lambda r: (r["collected_at"], r["record_id"]))
        total = len(selected)
        start = (page - 1) * page_size
        rows = []
        for rec in selected[start:start + page_size]:
            rows.append({**rec, "artifacts": self._artifact_summaries(rec["record_id"])})
        return {"records": rows, "total": total, "page": page, "page_size": page_size}

    def _matches(self, rec: dict, filters: dict) -> bool:
        protocol = self._get_protocol(rec["protocol_id"]) or {}
        if filters.get("protocol") and rec["protocol_id"] != filters["protocol"]:
            return False
        if filters.get("study") and protocol.get("study_id") != filters["study"]:
            return False
        if filters.get("site") and protocol.get("site_id") != filters["site"]:
            return False
        if filters.get("participant"):
            if str(rec["values"].get("participant", "")) != filters["participant"]:
                return False
        for bound, cmp in (("from", lambda a, b: a >= b), ("to", lambda a, b: a <= b)):
            if filters.get(bound):
                try:
                    edge = parse_rfc3339(filters[bound])
                except ValueError as exc:
                    raise RequestError(f"bad '{bound}' filter: {exc}") from exc
                if not cmp(parse_rfc3339(rec["collected_at"]), edge):
                    return False
        return True

    def _artifact_summaries(self, record_id: str) -> list[dict]:
        out = []
        for _, _, link in self.store.iter_latest("linkages"):
            if link["record_id"] != record_id:
                continue
            art = self.store.get("artifacts", link["artifact_id"])
            if art:
                out.append({"artifact_id": art["artifact_id"],
                            "generated_file_id": art["generated_file_id"],
                            "content_hash": art["content_hash"],
                            "size_bytes": art["size_bytes"],
                            "link_method": link["link_method"]})
        out.sort(key=lambda a: a["artifact_id"])
        return out

    # -- uploads ------------------------------------------------------------------

    def begin_upload(self, caller: Principal, content_hash: str, size_bytes: int,
                     linkage: dict, generated_file_id: str = "",
                     original_path: str = "") -> dict:
        self.authorize(caller, "file_write", "files")
        if (not isinstance(content_hash, str) or len(content_hash) != 64
                or any(c not in "0123456789abcdef" for c in content_hash)):
            raise RequestError("content_hash must be 64 lowercase hex chars")
        if not isinstance(size_bytes, int) or size_bytes < 0:
            raise RequestError("size_bytes must be a non-negative integer")
        upload_id = "u-" + uuid.uuid4().hex
        meta = {
            "upload_id": upload_id,
            "content_hash": content_hash,
            "size_bytes": size_bytes,
            "state": "open",
            "linkage": linkage or {},
            "generated_file_id": generated_file_id,
            "original_path": original_path,
            "created_at": now_rfc3339(),
        }
        self.store.put("uploads", upload_id, meta)
        (self.uploads_dir / upload_id).mkdir(parents=True, exist_ok=True)
        existing = self.store.get("artifact_by_hash", content_hash)
        resp = {"upload_id": upload_id, "chunk_size": CHUNK_SIZE,
                "chunk_count": self._chunk_count(size_bytes)}
        if existing and self.blobs.has(content_hash):
            resp["already_stored"] = existing["artifact_id"]
        return resp

    @staticmethod
    def _chunk_count(size_bytes: int) -> int:
        return (size_bytes + CHUNK_SIZE - 1) // CHUNK_SIZE

    def _upload_meta(self, upload_id: str) -> dict:
        meta = self.store.get("uploads", upload_id)
        if meta is None:
            raise NotFound(f"no upload '{upload_id}'")
        return meta

    def upload_chunk(self, caller: Principal, upload_id: str, index: int,
                     data: bytes) -> dict:
        self.authorize(caller, "file_write", f"files/{upload_id}")
        meta = self._upload_meta(upload_id)
        if meta["state"] != "open":
            raise Conflict(f"upload '{upload_id}' is {meta['state']}")
        count = self._chunk_count(meta["size_bytes"])
        if not (0 <= index < count):
            raise RequestError(f"chunk index {index} out of range [0, {count})")
        expected = (meta["size_bytes"] - index * CHUNK_SIZE if index == count - 1
                    else CHUNK_SIZE)
        if len(data) != expected:
            raise RequestError(
                f"chunk {index} must be {expected} bytes, got {len(data)}")
        chunk_path = self.uploads_dir / upload_id / f"chunk_{index:06d}"
        chunk_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = chunk_path.with_name(chunk_path.name + ".tmp")
        tmp.write_bytes(data)
        tmp.replace(chunk_path)
        return {"upload_id": upload_id, "index": index, "received": True}

    def commit_upload(self, caller: Principal, upload_id: str) -> dict:
        self.authorize(caller, "file_write", f"files/{upload_id}")
        meta = self._upload_meta(upload_id)
        if meta["state"] == "committed":
            return {"artifact_id": meta["artifact_id"], "status": "already_existing"}
        if meta["state"] == "aborted":
            raise Conflict(f"upload '{upload_id}' was aborted")
        content_hash = meta["content_hash"]

        dedup = self.store.get("artifact_by_hash", content_hash)
        if dedup and self.blobs.has(content_hash):
            artifact_id = dedup["artifact_id"]
            status = "already_existing"
        else:
            artifact_id, missing = self._assemble(meta, upload_id)
            if missing is not None:
                raise RequestError(
                    "commit with missing chunks",
                    details=[{"missing_indices": missing}])
            status = "created"

        self._link_artifact(meta, artifact_id)
        meta.update(state="committed", artifact_id=artifact_id)
        self.store.put("uploads", upload_id, meta)
        self.audit.append(at=now_rfc3339(), principal_id=caller.principal_id,
                          action="commit_upload", resource=f"files/{artifact_id}",
                          outcome="allowed")
        if status == "created":
            self._emit_file_event(meta, artifact_id)
        return {"artifact_id": artifact_id, "status": status}

    def _assemble(self, meta: dict, upload_id: str):
        count = self._chunk_count(meta["size_bytes"])
        updir = self.uploads_dir / upload_id
        missing = [i for i in range(count)
                   if not (updir / f"chunk_{i:06d}").exists()]
        if missing:
            return None, missing
        digest = hashlib.sha256()
        assembled = updir / "assembled"
        with open(assembled, "wb") as out:
            for i in range(count):
                data = (updir / f"chunk_{i:06d}").read_bytes()
                digest.update(data)
                out.write(data)
            out.flush()
        actual = digest.hexdigest()
        if actual != meta["content_hash"]:
            meta.update(state="aborted")
            self.store.put("uploads", upload_id, meta)
            assembled.unlink(missing_ok=True)
            raise ValidationRejected(
                "digest mismatch: upload aborted",
                details=[{"declared": meta["content_hash"], "actual": actual}])
        self.blobs.put_from_file(meta["content_hash"], assembled)

        artifact_id = "a-" + meta["content_hash"][:32]
        artifact = {
            "artifact_id": artifact_id,
            "generated_file_id": meta.get("generated_file_id", ""),
            "content_hash": meta["content_hash"],
            "size_bytes": meta["size_bytes"],
            "original_path": meta.get("original_path", ""),
            "captured_at": now_rfc3339(),
        }
        self.store.put_if_absent("artifacts", artifact_id, artifact)
        self.store.put_if_absent("artifact_by_hash", meta["content_hash"],
                                 {"artifact_id": artifact_id})
        return artifact_id, None

    def _link_artifact(self, meta: dict, artifact_id: str) -> None:
        linkage = meta.get("linkage") or {}
        record_id = linkage.get("record_id")
        if not record_id and linkage.get("idempotency_key"):
            key = linkage["idempotency_key"]
            candidate = "r-" + hashlib.sha256(key.encode()).hexdigest()[:32]
            if self.store.get("records", candidate) is not None:
                record_id = candidate
        if not record_id:
            return
        if self.store.get("records", record_id) is None:
            raise ValidationRejected(f"linkage names unknown record '{record_id}'")
        link = {"record_id": record_id, "artifact_id": artifact_id,
                "link_method": linkage.get("link_method", "manual")}
        self.store.put_if_absent("linkages", f"{record_id}:{artifact_id}", link)

    def _emit_file_event(self, meta: dict, artifact_id: str) -> None:
        linkage = meta.get("linkage") or {}
        study = "unknown"
        record = None
        key = linkage.get("idempotency_key")
        if key:
            record = self.store.get(
                "records", "r-" + hashlib.sha256(key.encode()).hexdigest()[:32])
        elif linkage.get("record_id"):
            record = self.store.get("records", linkage["record_id"])
        protocol = self._get_protocol(record["protocol_id"]) if record else None
        if protocol:
            study = protocol["study_id"]
        self.publish_event(f"file.committed.{study}", {
            "study": study,
            "protocol_id": (protocol or {}).get("protocol_id", "?"),
            "collector": (record or {}).get("collector", "?"),
            "at": now_rfc3339(),
            "artifact_id": artifact_id,
            "file_count": 1,
        })

    def get_file(self, caller: Principal, artifact_id: str):
        self.authorize(caller, "file_read", f"files/{artifact_id}")
        art = self.store.get("artifacts", artifact_id)
        if art is None:
            raise NotFound(f"no artifact '{artifact_id}'")
        return art, self.blobs.path_for(art["content_hash"])

    # -- audit / events --------------------------------------------------------------

    def read_audit(self, caller: Principal, since_seq: int = 0) -> list[dict]:
        self.authorize(caller, "audit_read", "audit")
        return self.audit.read(since_seq)

    def publish_event(self, topic: str, payload: dict) -> int:
        return self.notifier.publish(topic, payload, self._subscriptions())

    def _audit_notify_failure(self, topic: str, sub, exc: Exception) -> None:
        self.audit.append(at=now_rfc3339(), principal_id="system",
                          action="notify", resource=f"subscription/{sub.subscription_id}",
                          outcome="error", detail=f"{topic}: {exc}")
