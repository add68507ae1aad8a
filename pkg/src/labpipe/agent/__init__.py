"""Locally installed client core: cache, sessions, scanner, journal, sync."""

from .core import Agent, SyncReport
from .journal import Journal, JournalCorrupt
from .scanner import ChangeSet, DirWatcher, Snapshot, take_snapshot

__all__ = ["Agent", "ChangeSet", "DirWatcher", "Journal", "JournalCorrupt",
           "Snapshot", "SyncReport", "take_snapshot"]
