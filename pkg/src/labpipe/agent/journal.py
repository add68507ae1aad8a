"""Durable upload journal: the agent's offline fall-back.

A single append-only file of length-prefixed, CRC-checksummed JSON frames,
opened with the magic header "LPJ1". Two frame types exist: an `entry`
(a pending record or file upload) and an `ack` (that entry reached the
server). Replay reconstructs the pending queue; a torn final frame from a
crash is discarded, while corruption anywhere earlier refuses to load so a
human can intervene instead of silently losing data.
"""

from __future__ import annotations

import json
import os
import struct
import threading
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

MAGIC = b"LPJ1"
_FRAME_HEAD = struct.Struct("<I")  # payload length
_FRAME_TAIL = struct.Struct("<I")  # crc32 of payload
COMPACT_THRESHOLD = 64 * 1024 * 1024


class JournalCorrupt(Exception):
    """A non-final frame failed its checksum; manual intervention required."""


@dataclass
class JournalEntry:
    entry_id: int
    kind: str  # "record" | "file_chunk_set"
    payload: dict
    key: str  # idempotency_key (records) or content_hash (files)
    state: str = "pending"  # pending -> in_flight -> {acked | pending}
    attempts: int = 0
    next_attempt_at: float = 0.0

    def to_frame(self) -> dict:
        return {"type": "entry", "entry_id": self.entry_id, "kind": self.kind,
                "key": self.key, "payload": self.payload}


class Journal:
    def __init__(self, path: Path, compact_threshold: int = COMPACT_THRESHOLD):
        self.path = Path(path)
        self.compact_threshold = compact_threshold
        self._lock = threading.Lock()
        self._entries: dict[int, JournalEntry] = {}
        self._acked: set[int] = set()
        self._next_id = 1
        self._load()
        self._fh = open(self.path, "ab")

    # -- load / replay -------------------------------------------------------

    def _load(self) -> None:
        if not self.path.exists():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "wb") as fh:
                fh.write(MAGIC)
                fh.flush()
                os.fsync(fh.fileno())
            return
        raw = self.path.read_bytes()
        if raw[:4] != MAGIC:
            raise JournalCorrupt(f"{self.path}: bad magic header")
        pos, end = 4, len(raw)
        valid_end = pos
        while pos < end:
            frame, new_pos = self._read_frame(raw, pos, end)
            if frame is None:
                break  # torn tail
            self._apply(frame)
            pos = valid_end = new_pos
        if valid_end != end:
            # drop the torn final frame; the producer never saw it persisted
            with open(self.path, "r+b") as fh:
                fh.truncate(valid_end)

    def _read_frame(self, raw: bytes, pos: int, end: int) -> tuple[Optional[dict], int]:
        if pos + _FRAME_HEAD.size > end:
            return None, pos
        (length,) = _FRAME_HEAD.unpack_from(raw, pos)
        body_start = pos + _FRAME_HEAD.size
        body_end = body_start + length
        tail_end = body_end + _FRAME_TAIL.size
        if tail_end > end:
            return None, pos
        payload = raw[body_start:body_end]
        (crc,) = _FRAME_TAIL.unpack_from(raw, body_end)
        if zlib.crc32(payload) != crc:
            if tail_end == end:
                return None, pos  # torn write at the very end
            raise JournalCorrupt(
                f"{self.path}: checksum failure at offset {pos} (not final frame)")
        try:
            return json.loads(payload), tail_end
        except json.JSONDecodeError as exc:
            raise JournalCorrupt(f"{self.path}: unreadable frame at {pos}: {exc}")

    def _apply(self, frame: dict) -> None:
        if frame["type"] == "entry":
            entry = JournalEntry(entry_id=frame["entry_id"], kind=frame["kind"],
                                 payload=frame["payload"], key=frame["key"])
            self._entries[entry.entry_id] = entry
            self._next_id = max(self._next_id, entry.entry_id + 1)
        elif frame["type"] == "ack":
            self._acked.add(frame["entry_id"])
            if frame["entry_id"] in self._entries:
                self._entries[frame["entry_id"]].state = "acked"

    # -- appends ----------------------------------------------------------------

    def _write_frame(self, doc: dict) -> None:
        payload = json.dumps(doc, ensure_ascii=False).encode("utf-8")
        self._fh.write(_FRAME_HEAD.pack(len(payload)) + payload
                       + _FRAME_TAIL.pack(zlib.crc32(payload)))
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def append(self, kind: str, key: str, payload: dict) -> JournalEntry:
        with self._lock:
            entry = JournalEntry(entry_id=self._next_id, kind=kind,
                                 payload=payload, key=key)
            self._write_frame(entry.to_frame())
            self._next_id += 1
            self._entries[entry.entry_id] = entry
            return entry

    def mark_acked(self, entry_id: int) -> None:
        with self._lock:
            self._write_frame({"type": "ack", "entry_id": entry_id})
            self._acked.add(entry_id)
            entry = self._entries.get(entry_id)
            if entry:
                entry.state = "acked"
        self._maybe_compact()

    # -- queue views ---------------------------------------------------------------

    def pending(self) -> list[JournalEntry]:
        return [e for e in sorted(self._entries.values(), key=lambda e: e.entry_id)
                if e.entry_id not in self._acked]

    def depth(self) -> int:
        return len(self._entries) - len(self._acked & set(self._entries))

    def get(self, entry_id: int) -> Optional[JournalEntry]:
        return self._entries.get(entry_id)

    # -- compaction ------------------------------------------------------------------

    def _maybe_compact(self) -> None:
        if self.path.stat().st_size <= self.compact_threshold:
            return
        self.compact()

    def compact(self) -> None:
        """Rewrite the journal keeping only non-acked entries."""
        with self._lock:
            tmp = self.path.with_name(self.path.name + ".compact")
            with open(tmp, "wb") as fh:
                fh.write(MAGIC)
                for entry in sorted(self._entries.values(), key=lambda e: e.entry_id):
                    if entry.entry_id in self._acked:
                        continue
                    payload = json.dumps(entry.to_frame(), ensure_ascii=False).encode()
                    fh.write(_FRAME_HEAD.pack(len(payload)) + payload
                             + _FRAME_TAIL.pack(zlib.crc32(payload)))
                fh.flush()
                os.fsync(fh.fileno())
            self._fh.close()
            os.replace(tmp, self.path)
            self._entries = {k: v for k, v in self._entries.items()
                             if k not in self._acked}
            self._acked = set()
            self._fh = open(self.path, "ab")

    def close(self) -> None:
        self._fh.close()
