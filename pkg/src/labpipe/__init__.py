"""LabPipe-style platform: guided sample collection, file linkage, offline-tolerant transfer."""

__version__ = "0.1.0"
