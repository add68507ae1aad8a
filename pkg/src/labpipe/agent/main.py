"""Entry point: `lp-agent <agent.toml>` runs scanner + sync loops and the
loopback API."""

from __future__ import annotations

import logging
import sys
import threading
from pathlib import Path

import uvicorn

from .config import AgentConfig
from .core import Agent
from .localapi import create_local_app

log = logging.getLogger(__name__)


def run_loops(agent: Agent, stop: threading.Event) -> None:
    def scanner():
        while not stop.is_set():
            for sid, sess in list(agent.sessions.items()):
                if sess.get("active", True):
                    try:
                        agent.scan_session(sid)
                    except Exception:
                        log.exception("scan failed for %s", sid)
            stop.wait(agent.scan_interval)

    def syncer():
        while not stop.is_set():
            agent.sync_once()
            stop.wait(1.0)

    threading.Thread(target=scanner, daemon=True, name="scanner").start()
    threading.Thread(target=syncer, daemon=True, name="sync").start()


def main() -> None:
    logging.basicConfig(level=logging.INFO)
    if len(sys.argv) != 2:
        print("usage: lp-agent <agent.toml>", file=sys.stderr)
        raise SystemExit(2)
    cfg = AgentConfig.load(sys.argv[1])
    agent = Agent(cfg.data_dir, server_url=cfg.server_url, token=cfg.token,
                  scan_interval=cfg.scan_interval)
    agent.refresh_configs()
    stop = threading.Event()
    run_loops(agent, stop)
    frontend = Path(__file__).resolve().parents[3] / "frontend" / "dist"
    app = create_local_app(agent, frontend_dir=frontend if frontend.is_dir() else None)
    try:
        uvicorn.run(app, host="127.0.0.1", port=cfg.local_port, log_level="warning")
    finally:
        stop.set()
        agent.close()


if __name__ == "__main__":
    main()
