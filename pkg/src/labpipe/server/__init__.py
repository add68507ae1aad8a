"""Central service: auth, config catalog, record ingestion, uploads, audit."""

from .app import create_app
from .core import CHUNK_SIZE, LabServer

__all__ = ["CHUNK_SIZE", "LabServer", "create_app"]
