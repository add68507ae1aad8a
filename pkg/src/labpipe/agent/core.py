"""The locally installed agent: config cache, collection sessions, file
linkage, durable journal and opportunistic sync.

Ordering rules the rest of the system depends on:
  * journal-first: nothing is sent to the server before its journal entry
    is durable on disk;
  * sync drains the journal in entry-id order, never sending a file entry
    while the record it links to is still unsent.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import shutil
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import httpx

from ..model import (
    compile_template,
    expand_file_id,
    now_rfc3339,
    parse_rfc3339,
    validate_submission,
)
from .client import NetworkError, ServerClient, ServerError
from .journal import COMPACT_THRESHOLD, Journal
from .scanner import ChangeSet, DirWatcher, hash_file

log = logging.getLogger(__name__)

BACKOFF_BASE = 1.0
BACKOFF_FACTOR = 2.0
BACKOFF_CAP = 60.0
BACKOFF_JITTER = 0.2


class AgentError(Exception):
    pass


class SessionConflict(AgentError):
    pass


class UnknownProtocol(AgentError):
    pass


@dataclass
class SyncReport:
    attempted: int = 0
    acked: int = 0
    deferred: int = 0


class SystemClock:
    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class Hooks:
    """Named instrumentation points; tests install callables that raise to
    simulate a crash at an exact spot."""

    def __init__(self):
        self._hooks: dict[str, Callable[[], None]] = {}

    def install(self, name: str, fn: Callable[[], None]) -> None:
        self._hooks[name] = fn

    def clear(self) -> None:
        self._hooks.clear()

    def fire(self, name: str) -> None:
        fn = self._hooks.get(name)
        if fn is not None:
            fn()


def _atomic_json(path: Path, doc: Any) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, ensure_ascii=False), "utf-8")
    with open(tmp, "rb") as fh:
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class Agent:
    def __init__(self, data_dir: Path | str, server_url: str = "", token: str = "",
                 transport: Optional[httpx.BaseTransport] = None,
                 clock=None, backoff_seed: int = 0,
                 agent_id: Optional[str] = None, scan_interval: float = 2.0,
                 journal_compact_threshold: int = COMPACT_THRESHOLD):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.staging = self.data_dir / "staging"
        self.staging.mkdir(exist_ok=True)
        self.watch_root = self.data_dir / "watch"
        self.watch_root.mkdir(exist_ok=True)
        self.scan_interval = scan_interval
        self.clock = clock or SystemClock()
        self.hooks = Hooks()
        self._rng = random.Random(backoff_seed)

        id_path = self.data_dir / "agent_id"
        if agent_id:
            id_path.write_text(agent_id)
        elif not id_path.exists():
            id_path.write_text("agent-" + uuid.uuid4().hex[:12])
        self.agent_id = id_path.read_text().strip()

        self.client = ServerClient(server_url, token, transport=transport) \
            if server_url else None
        self.journal = Journal(self.data_dir / "journal.lpj",
                               compact_threshold=journal_compact_threshold)
        self.connectivity = "unknown"

        self._cache_path = self.data_dir / "cache.json"
        self.cache = {"global_version": 0, "documents": {}}
        if self._cache_path.exists():
            self.cache = json.loads(self._cache_path.read_text("utf-8"))

        self._sessions_path = self.data_dir / "sessions.json"
        self.sessions: dict[str, dict] = {}
        if self._sessions_path.exists():
            self.sessions = json.loads(self._sessions_path.read_text("utf-8"))
        self._watchers: dict[str, DirWatcher] = {}
        for sid, sess in self.sessions.items():
            self._watchers[sid] = DirWatcher.restore(Path(sess["watch_dir"]),
                                                     sess["watcher_state"])

    # -- config cache -------------------------------------------------------------

    def refresh_configs(self) -> dict:
        """Pull the catalog delta; a network failure leaves the cache untouched."""
        if self.client is None:
            return {"applied": 0, "cache_version": self.cache["global_version"]}
        try:
            delta = self.client.list_configs(since=self.cache["global_version"])
        except (NetworkError, ServerError) as exc:
            log.warning("refresh_configs failed, keeping cached configs: %s", exc)
            self.connectivity = "offline"
            return {"applied": 0, "cache_version": self.cache["global_version"],
                    "error": str(exc)}
        self.connectivity = "online"
        for env in delta["documents"]:
            if env["kind"] == "template":
                # templates are kept per version: protocols pin exact versions
                self.cache["documents"][f"template/{env['id']}/{env['version']}"] = env
            self.cache["documents"][f"{env['kind']}/{env['id']}"] = env
        self.cache["global_version"] = delta["global_version"]
        _atomic_json(self._cache_path, self.cache)
        return {"applied": len(delta["documents"]),
                "cache_version": self.cache["global_version"]}

    def cached_protocols(self) -> list[dict]:
        return [env["doc"] for key, env in sorted(self.cache["documents"].items())
                if key.startswith("protocol/")]

    def cached_protocol(self, protocol_id: str) -> Optional[dict]:
        env = self.cache["documents"].get(f"protocol/{protocol_id}")
        return env["doc"] if env else None

    def cached_template(self, template_id: str, version: Optional[int] = None) -> Optional[dict]:
        if version is not None:
            env = self.cache["documents"].get(f"template/{template_id}/{version}")
            if env:
                return env["doc"]
        env = self.cache["documents"].get(f"template/{template_id}")
        if env and (version is None or env["doc"]["version"] == version):
            return env["doc"]
        return None

    # -- sessions --------------------------------------------------------------------

    def start_session(self, protocol_id: str) -> dict:
        protocol = self.cached_protocol(protocol_id)
        if protocol is None:
            raise UnknownProtocol(f"protocol '{protocol_id}' not in local cache")
        for sess in self.sessions.values():
            if sess["protocol_id"] == protocol_id and sess.get("active", True):
                raise SessionConflict(
                    f"protocol '{protocol_id}' already has an active session")
        watch_dir = self.watch_root / (protocol.get("watch_directory_hint")
                                       or protocol_id)
        watch_dir.mkdir(parents=True, exist_ok=True)
        session_id = "sess-" + uuid.uuid4().hex[:12]
        watcher = DirWatcher(watch_dir)
        sess = {
            "session_id": session_id,
            "protocol_id": protocol_id,
            "active": True,
            "counter": 0,
            "records": [],
            "watch_dir": str(watch_dir),
            "watcher_state": watcher.state(),
            "started_at": now_rfc3339(),
        }
        self.sessions[session_id] = sess
        self._watchers[session_id] = watcher
        self._persist_sessions()
        return sess

    def end_session(self, session_id: str) -> None:
        sess = self._session(session_id)
        sess["active"] = False
        self._watchers.pop(session_id, None)
        self._persist_sessions()

    def _session(self, session_id: str) -> dict:
        if session_id not in self.sessions:
            raise AgentError(f"no session '{session_id}'")
        return self.sessions[session_id]

    def _persist_sessions(self) -> None:
        for sid, watcher in self._watchers.items():
            if sid in self.sessions:
                self.sessions[sid]["watcher_state"] = watcher.state()
        _atomic_json(self._sessions_path, self.sessions)

    # -- form submission -----------------------------------------------------------------

    def submit_form(self, session_id: str, raw_values: dict) -> dict:
        """Validate, mint an idempotency key, journal, then record locally.

        Raises ValidationFailure without touching the journal when the
        values do not conform."""
        sess = self._session(session_id)
        protocol = self.cached_protocol(sess["protocol_id"])
        tref = protocol["template"]
        tdoc = self.cached_template(tref["template_id"], tref["version"])
        if tdoc is None:
            raise AgentError(f"template {tref['template_id']} v{tref['version']} "
                             "missing from cache; refresh while networked")
        template = compile_template(tdoc)
        typed = validate_submission(template, raw_values)

        sess["counter"] += 1
        counter = sess["counter"]
        key = f"{self.agent_id}:{session_id}:{counter}"
        collected_at = now_rfc3339()
        body = {
            "protocol_id": sess["protocol_id"],
            "template_version": tref["version"],
            "values": typed,
            "collected_at": collected_at,
            "collector": self.agent_id,
            "session_id": session_id,
        }
        self.hooks.fire("pre_journal")
        entry = self.journal.append("record", key, body)
        record = {
            "local_seq": counter,
            "idempotency_key": key,
            "record_id": "r-" + hashlib.sha256(key.encode()).hexdigest()[:32],
            "values": typed,
            "collected_at": collected_at,
            "journal_entry_id": entry.entry_id,
            "sync_state": "pending",
            "linkages": [],
            "expected_file_id": self._expected_file_id(protocol, template, typed,
                                                       counter, collected_at),
            "linkage_state": ("awaiting_file" if protocol["link_method"] != "manual"
                              else "manual"),
        }
        sess["records"].append(record)
        self._persist_sessions()
        return record

    def _expected_file_id(self, protocol: dict, template, typed: dict,
                          counter: int, collected_at: str) -> str:
        if protocol["link_method"] != "id_pattern" or not template.file_id_pattern:
            return ""
        builtins = {
            "seq": counter,
            "date": parse_rfc3339(collected_at).strftime("%Y%m%d"),
            "site": protocol["site_id"],
            "study": protocol["study_id"],
        }
        return expand_file_id(template.file_id_pattern, typed, builtins)

    # -- scanning & linkage ------------------------------------------------------------------

    def scan_session(self, session_id: str) -> ChangeSet:
        """One scan step: detect settled changes and link them."""
        sess = self._session(session_id)
        watcher = self._watchers[session_id]
        changes = watcher.poll()
        if changes:
            self.link_changes(session_id, changes)
        else:
            self._try_resolve_id_patterns(sess, watcher, [])
        self._persist_sessions()
        return changes

    def link_changes(self, session_id: str, changes: ChangeSet) -> list[dict]:
        sess = self._session(session_id)
        protocol = self.cached_protocol(sess["protocol_id"])
        watcher = self._watchers[session_id]
        method = protocol["link_method"]
        linked: list[dict] = []
        paths = list(changes.created) + list(changes.modified)
        if method == "change_detection":
            record = self._latest_record(sess)
            if record is not None:
                for path in paths:
                    linked.append(self._link_file(sess, watcher, record, path,
                                                  "change_detection"))
        elif method == "id_pattern":
            linked.extend(self._try_resolve_id_patterns(sess, watcher, paths))
        self._persist_sessions()
        return linked

    @staticmethod
    def _latest_record(sess: dict) -> Optional[dict]:
        return sess["records"][-1] if sess["records"] else None

    def _try_resolve_id_patterns(self, sess: dict, watcher: DirWatcher,
                                 new_paths: list[str]) -> list[dict]:
        linked = []
        # unresolved expectations retry against everything settled so far
        candidates = set(new_paths) | {p for p, (_, h) in watcher.known.items()
                                       if h is not None}
        baseline = set(watcher.baseline.entries)
        for record in sess["records"]:
            expected = record.get("expected_file_id")
            if not expected or record["linkage_state"] == "linked":
                continue
            for path in sorted(candidates - baseline):
                name = Path(path).name
                if name == expected or Path(path).stem == expected:
                    linked.append(self._link_file(sess, watcher, record, path,
                                                  "id_pattern"))
                    break
        return linked

    def _link_file(self, sess: dict, watcher: DirWatcher, record: dict,
                   path: str, method: str) -> dict:
        src = watcher.root / path
        content_hash = hash_file(src)
        staged = self.staging / content_hash
        if not staged.exists():
            tmp = staged.with_name(staged.name + ".tmp")
            shutil.copyfile(src, tmp)  # original never moved
            os.replace(tmp, staged)
        size = staged.stat().st_size
        payload = {
            "staged": staged.name,
            "content_hash": content_hash,
            "size_bytes": size,
            "generated_file_id": record.get("expected_file_id") or Path(path).name,
            "original_path": path,
            "linkage": {
                "idempotency_key": record["idempotency_key"],
                "link_method": method,
            },
        }
        self.hooks.fire("pre_journal")
        entry = self.journal.append("file_chunk_set", content_hash, payload)
        linkage = {
            "path": path,
            "content_hash": content_hash,
            "link_method": method,
            "journal_entry_id": entry.entry_id,
            "sync_state": "pending",
        }
        record["linkages"].append(linkage)
        record["linkage_state"] = "linked"
        return linkage

    # -- sync engine -------------------------------------------------------------------------

    def sync_once(self) -> SyncReport:
        """Drain due journal entries once; all failure lands in the report."""
        report = SyncReport()
        if self.client is None:
            report.deferred = self.journal.depth()
            return report
        now = self.clock.now()
        blocked_keys: set[str] = set()
        due = [e for e in self.journal.pending()]
        if not due:
            self.connectivity = "online" if self.client.healthz() else "offline"
            return report
        for entry in due:
            if entry.next_attempt_at > now:
                report.deferred += 1
                if entry.kind == "record":
                    blocked_keys.add(entry.key)
                continue
            if (entry.kind == "file_chunk_set"
                    and entry.payload["linkage"]["idempotency_key"] in blocked_keys):
                report.deferred += 1
                continue
            report.attempted += 1
            entry.state = "in_flight"
            self.hooks.fire("pre_send")
            try:
                self._send_entry(entry)
            except NetworkError as exc:
                log.info("entry %d deferred (network): %s", entry.entry_id, exc)
                self.connectivity = "offline"
                self._defer(entry, report, blocked_keys)
            except ServerError as exc:
                if exc.code == "stale_config":
                    self.refresh_configs()
                    try:
                        self._send_entry(entry)
                    except (NetworkError, ServerError) as exc2:
                        log.warning("entry %d still failing after refresh: %s",
                                    entry.entry_id, exc2)
                        self._defer(entry, report, blocked_keys)
                        continue
                    self._ack(entry, report)
                else:
                    log.warning("entry %d rejected by server: %s", entry.entry_id, exc)
                    self._defer(entry, report, blocked_keys)
            else:
                self._ack(entry, report)
        self._persist_sessions()
        return report

    def _send_entry(self, entry) -> None:
        if entry.kind == "record":
            resp = self.client.ingest_record(entry.payload, entry.key)
            self.hooks.fire("post_send_pre_ack")
            assert resp["status"] in ("created", "already_existing")
        else:
            self._send_file(entry)
        self.connectivity = "online"

    def _send_file(self, entry) -> None:
        p = entry.payload
        staged = self.staging / p["staged"]
        begin = self.client.begin_upload(
            p["content_hash"], p["size_bytes"], p["linkage"],
            generated_file_id=p.get("generated_file_id", ""),
            original_path=p.get("original_path", ""))
        if "already_stored" not in begin:
            chunk_size = begin["chunk_size"]
            with open(staged, "rb") as fh:
                for index in range(begin["chunk_count"]):
                    data = fh.read(chunk_size)
                    self.client.upload_chunk(begin["upload_id"], index, data)
                    self.hooks.fire("mid_chunk")
        resp = self.client.commit_upload(begin["upload_id"])
        self.hooks.fire("post_send_pre_ack")
        assert resp["status"] in ("created", "already_existing")

    def _ack(self, entry, report: SyncReport) -> None:
        self.hooks.fire("post_ack_pre_mark")
        self.journal.mark_acked(entry.entry_id)
        self.hooks.fire("post_mark")
        entry.state = "acked"
        report.acked += 1
        self._mark_synced(entry)

    def _defer(self, entry, report: SyncReport, blocked_keys: set[str]) -> None:
        entry.attempts += 1
        delay = min(BACKOFF_BASE * BACKOFF_FACTOR ** (entry.attempts - 1), BACKOFF_CAP)
        delay *= self._rng.uniform(1 - BACKOFF_JITTER, 1 + BACKOFF_JITTER)
        entry.next_attempt_at = self.clock.now() + delay
        entry.state = "pending"
        report.deferred += 1
        if entry.kind == "record":
            blocked_keys.add(entry.key)

    def _mark_synced(self, entry) -> None:
        for sess in self.sessions.values():
            for record in sess["records"]:
                if entry.kind == "record" and record["journal_entry_id"] == entry.entry_id:
                    record["sync_state"] = "acked"
                elif entry.kind == "file_chunk_set":
                    for link in record["linkages"]:
                        if link["journal_entry_id"] == entry.entry_id:
                            link["sync_state"] = "acked"

    def sync_until_drained(self, budget_seconds: float = 120.0) -> SyncReport:
        """Loop sync_once until the journal empties or the budget runs out."""
        start = self.clock.now()
        total = SyncReport()
        while self.journal.depth() > 0:
            report = self.sync_once()
            total.attempted += report.attempted
            total.acked += report.acked
            if self.journal.depth() == 0:
                break
            if self.clock.now() - start > budget_seconds:
                break
            self.clock.sleep(min(1.0, self.scan_interval))
        total.deferred = self.journal.depth()
        return total

    # -- status ----------------------------------------------------------------------------------

    def session_status(self, session_id: str) -> dict:
        sess = self._session(session_id)
        records = []
        for r in sess["records"]:
            records.append({
                "record_id": r["record_id"],
                "values": r["values"],
                "collected_at": r["collected_at"],
                "sync_state": r["sync_state"],
                "linkage_state": r["linkage_state"],
                "expected_file_id": r["expected_file_id"],
                "linkages": r["linkages"],
            })
        unresolved = [r["record_id"] for r in sess["records"]
                      if r["linkage_state"] == "awaiting_file"]
        return {
            "session_id": session_id,
            "protocol_id": sess["protocol_id"],
            "active": sess.get("active", True),
            "records": records,
            "unresolved_linkages": unresolved,
            "journal_depth": self.journal.depth(),
            "connectivity": self.connectivity,
            "cache_version": self.cache["global_version"],
        }

    def close(self) -> None:
        if self.client is not None:
            self.client.close()
        self.journal.close()
