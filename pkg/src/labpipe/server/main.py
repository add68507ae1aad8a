"""Entry point: `lp-server` serves the API over HTTP.

Configuration comes from the environment: LP_DATA_DIR, LP_BIND_ADDR and
LP_SMTP_URL. On first start a bootstrap admin token is minted and printed
once to stderr.
"""

from __future__ import annotations

import os
import sys

import uvicorn

from .app import create_app
from .core import LabServer


def main() -> None:
    data_dir = os.environ.get("LP_DATA_DIR", "./lp-data")
    bind = os.environ.get("LP_BIND_ADDR", "127.0.0.1:8472")
    host, _, port = bind.rpartition(":")
    server = LabServer(data_dir, smtp_url=os.environ.get("LP_SMTP_URL"))
    token = server.bootstrap_token()
    if token:
        print(f"bootstrap admin token (shown once): {token}", file=sys.stderr)
    app = create_app(data_dir, server=server)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8472), log_level="warning")


if __name__ == "__main__":
    main()
