"""Watch-directory snapshots and settled-change detection.

A file only counts as created/modified once it is "settled": its (size,
mtime) is identical across two consecutive scans, so files an instrument is
still writing are never picked up. Modified files must additionally hash
differently - a touch with identical bytes is not a change. Deletions are
ignored: instrument data is never auto-deleted.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..model import now_rfc3339

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Stat:
    size: int
    mtime_ns: int


@dataclass
class Snapshot:
    taken_at: str
    entries: dict[str, Stat]

    def to_dict(self) -> dict:
        return {"taken_at": self.taken_at,
                "entries": {p: [s.size, s.mtime_ns] for p, s in self.entries.items()}}

    @classmethod
    def from_dict(cls, doc: dict) -> "Snapshot":
        return cls(taken_at=doc["taken_at"],
                   entries={p: Stat(size, mtime) for p, (size, mtime)
                            in doc["entries"].items()})


@dataclass
class ChangeSet:
    created: list[str] = field(default_factory=list)
    modified: list[str] = field(default_factory=list)
    unchanged: int = 0

    def __bool__(self) -> bool:
        return bool(self.created or self.modified)


def take_snapshot(root: Path) -> Snapshot:
    """Relative paths of every regular file under `root`."""
    entries: dict[str, Stat] = {}
    root = Path(root)
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        try:
            st = path.stat()
        except OSError as exc:
            log.warning("unreadable %s, retrying next scan: %s", path, exc)
            continue
        entries[path.relative_to(root).as_posix()] = Stat(st.st_size, st.st_mtime_ns)
    return Snapshot(taken_at=now_rfc3339(), entries=entries)


def hash_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class DirWatcher:
    """Tracks one watch directory across scans for a collection session.

    Files present in the baseline snapshot are never reported as created;
    they can only surface as modified, and only when their content hash
    actually changed.
    """

    def __init__(self, root: Path, baseline: Snapshot | None = None,
                 known_state: dict | None = None, prev: Snapshot | None = None):
        self.root = Path(root)
        self.baseline = baseline if baseline is not None else take_snapshot(self.root)
        self.prev = prev if prev is not None else self.baseline
        if known_state is not None:
            self.known: dict[str, tuple[Stat, str | None]] = known_state
        else:
            # hash baseline files up front: modified-detection needs the old
            # hash, and the old bytes are gone once the file changes
            self.known = {}
            for p, s in self.baseline.entries.items():
                try:
                    self.known[p] = (s, hash_file(self.root / p))
                except OSError:
                    self.known[p] = (s, None)

    def scan(self) -> Snapshot:
        return take_snapshot(self.root)

    def poll(self) -> ChangeSet:
        """One scan step: diff the new snapshot against the previous one."""
        current = self.scan()
        changes = self.diff(self.prev, current)
        self.prev = current
        return changes

    def diff(self, prev: Snapshot, current: Snapshot) -> ChangeSet:
        changes = ChangeSet()
        for path, stat in sorted(current.entries.items()):
            known = self.known.get(path)
            if known is not None and known[0] == stat:
                changes.unchanged += 1
                continue
            if prev.entries.get(path) != stat:
                continue  # not settled yet; report once stable
            try:
                content_hash = hash_file(self.root / path)
            except OSError as exc:
                log.warning("unreadable %s, retrying next scan: %s", self.root / path, exc)
                continue
            if known is None:
                self.known[path] = (stat, content_hash)
                changes.created.append(path)
                continue
            old_stat, old_hash = known
            if old_hash is not None and old_hash == content_hash:
                self.known[path] = (stat, content_hash)  # touch-only, no report
                continue
            self.known[path] = (stat, content_hash)
            changes.modified.append(path)
        return changes

    def state(self) -> dict:
        """Serializable watcher state so a crashed session can resume."""
        return {
            "baseline": self.baseline.to_dict(),
            "prev": self.prev.to_dict(),
            "known": {p: [s.size, s.mtime_ns, h] for p, (s, h) in self.known.items()},
        }

    @classmethod
    def restore(cls, root: Path, state: dict) -> "DirWatcher":
        known = {p: (Stat(size, mtime), h)
                 for p, (size, mtime, h) in state["known"].items()}
        return cls(root, baseline=Snapshot.from_dict(state["baseline"]),
                   prev=Snapshot.from_dict(state["prev"]), known_state=known)
