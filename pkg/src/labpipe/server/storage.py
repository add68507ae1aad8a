"""Embedded document store, content-addressed blob store and append-only audit log.

Documents are UTF-8 JSON files keyed by collection + id + version; every write
lands via tmp-file + fsync + atomic rename so a crash between any two
operations never exposes a half-written document. Blobs live on the
filesystem named by their sha-256 digest.
"""

from __future__ import annotations

import json
import os
import threading
import urllib.parse
from pathlib import Path
from typing import Any, Iterator, Optional


class VersionConflict(Exception):
    """Compare-and-set failure: the caller's expected version is stale."""


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _atomic_write_json(path: Path, doc: Any) -> None:
    _atomic_write_bytes(path, json.dumps(doc, ensure_ascii=False).encode("utf-8"))


def _enc(doc_id: str) -> str:
    # ids are client-chosen opaque strings; make them filesystem-safe, reversibly
    return urllib.parse.quote(doc_id, safe="")


def _dec(name: str) -> str:
    return urllib.parse.unquote(name)


class DocumentStore:
    """Versioned JSON documents with atomic single-document writes and CAS."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _doc_dir(self, collection: str, doc_id: str) -> Path:
        return self.root / collection / _enc(doc_id)

    def put(self, collection: str, doc_id: str, doc: dict,
            expected_version: Optional[int] = None) -> int:
        """Write a new version; returns the version number assigned."""
        with self._lock:
            d = self._doc_dir(collection, doc_id)
            current = self._latest_version_unlocked(d)
            if expected_version is not None and expected_version != current:
                raise VersionConflict(
                    f"{collection}/{doc_id}: expected v{expected_version}, have v{current}")
            d.mkdir(parents=True, exist_ok=True)
            version = current + 1
            _atomic_write_json(d / f"{version}.json", doc)
            return version

    def put_if_absent(self, collection: str, doc_id: str, doc: dict) -> bool:
        """Atomically create version 1 iff the document does not exist yet."""
        with self._lock:
            d = self._doc_dir(collection, doc_id)
            if self._latest_version_unlocked(d) > 0:
                return False
            d.mkdir(parents=True, exist_ok=True)
            _atomic_write_json(d / "1.json", doc)
            return True

    def get(self, collection: str, doc_id: str, version: Optional[int] = None) -> Optional[dict]:
        d = self._doc_dir(collection, doc_id)
        v = version if version is not None else self._latest_version_unlocked(d)
        if v < 1:
            return None
        path = d / f"{v}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text("utf-8"))

    def latest_version(self, collection: str, doc_id: str) -> int:
        return self._latest_version_unlocked(self._doc_dir(collection, doc_id))

    def list_ids(self, collection: str) -> list[str]:
        cdir = self.root / collection
        if not cdir.is_dir():
            return []
        return sorted(_dec(p.name) for p in cdir.iterdir() if p.is_dir())

    def iter_latest(self, collection: str) -> Iterator[tuple[str, int, dict]]:
        for doc_id in self.list_ids(collection):
            v = self.latest_version(collection, doc_id)
            doc = self.get(collection, doc_id, v)
            if doc is not None:
                yield doc_id, v, doc

    def delete_all_versions(self, collection: str, doc_id: str) -> None:
        d = self._doc_dir(collection, doc_id)
        if not d.is_dir():
            return
        with self._lock:
            for p in d.glob("*.json"):
                p.unlink()

    @staticmethod
    def _latest_version_unlocked(doc_dir: Path) -> int:
        if not doc_dir.is_dir():
            return 0
        versions = [int(p.stem) for p in doc_dir.glob("*.json") if p.stem.isdigit()]
        return max(versions, default=0)


class Counter:
    """Durable monotonically increasing counter (catalog global version)."""

    def __init__(self, path: Path, start: int = 0):
        self.path = Path(path)
        self._lock = threading.Lock()
        if self.path.exists():
            self._value = int(self.path.read_text().strip() or start)
        else:
            self._value = start
            self.path.parent.mkdir(parents=True, exist_ok=True)
            _atomic_write_bytes(self.path, str(start).encode())

    @property
    def value(self) -> int:
        return self._value

    def next(self) -> int:
        with self._lock:
            self._value += 1
            _atomic_write_bytes(self.path, str(self._value).encode())
            return self._value


class BlobStore:
    """Content-addressed blobs: one stored copy per sha-256 digest."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, content_hash: str) -> Path:
        return self.root / content_hash[:2] / content_hash

    def has(self, content_hash: str) -> bool:
        return self.path_for(content_hash).exists()

    def put(self, content_hash: str, data: bytes) -> Path:
        path = self.path_for(content_hash)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            _atomic_write_bytes(path, data)
        return path

    def put_from_file(self, content_hash: str, src: Path) -> Path:
        path = self.path_for(content_hash)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.name + ".tmp")
            os.replace(src, tmp)
            with open(tmp, "rb") as fh:
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        return path

    def open(self, content_hash: str):
        return open(self.path_for(content_hash), "rb")

    def size(self, content_hash: str) -> int:
        return self.path_for(content_hash).stat().st_size


class AuditLog:
    """Append-only, gap-free audit trail backed by a JSONL file.

    Appends are serialized through a single lock and fsynced before the
    sequence number is handed back, so an acknowledged event survives a crash.
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._seq = 0
        if self.path.exists():
            valid_bytes = 0
            with open(self.path, "rb") as fh:
                for raw in fh:
                    if not raw.endswith(b"\n"):
                        break
                    self._seq = json.loads(raw)["seq"]
                    valid_bytes += len(raw)
            if valid_bytes != self.path.stat().st_size:
                # drop the torn tail from a crash mid-append
                with open(self.path, "r+b") as fh:
                    fh.truncate(valid_bytes)
        self._fh = open(self.path, "ab")

    def append(self, *, at: str, principal_id: str, action: str,
               resource: str, outcome: str, detail: str = "") -> int:
        with self._lock:
            seq = self._seq + 1
            event = {"seq": seq, "at": at, "principal_id": principal_id,
                     "action": action, "resource": resource, "outcome": outcome}
            if detail:
                event["detail"] = detail
            line = json.dumps(event, ensure_ascii=False).encode("utf-8") + b"\n"
            self._fh.write(line)
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._seq = seq
            return seq

    def read(self, since_seq: int = 0) -> list[dict]:
        return [e for e in self._read_all() if e["seq"] > since_seq]

    def _read_all(self) -> list[dict]:
        events = []
        if not self.path.exists():
            return events
        with open(self.path, "rb") as fh:
            for raw in fh:
                if not raw.endswith(b"\n"):
                    break  # torn final line from a crash mid-append
                events.append(json.loads(raw))
        return events

    def close(self) -> None:
        self._fh.close()
