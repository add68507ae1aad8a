"""agent.toml loading."""

from __future__ import annotations

import tomllib
from dataclasses import dataclass
from pathlib import Path


@dataclass
class AgentConfig:
    server_url: str
    token: str
    data_dir: Path
    scan_interval: float = 2.0
    local_port: int = 47820

    @classmethod
    def load(cls, path: Path | str) -> "AgentConfig":
        doc = tomllib.loads(Path(path).read_text("utf-8"))
        return cls(
            server_url=doc["server_url"],
            token=doc["token"],
            data_dir=Path(doc.get("data_dir", "./lp-agent-data")),
            scan_interval=float(doc.get("scan_interval", 2.0)),
            local_port=int(doc.get("local_port", 47820)),
        )
