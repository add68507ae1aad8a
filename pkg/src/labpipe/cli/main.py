"""`lp` - administrator command line.

Everything goes through the public HTTP API; there is no privileged side
channel. Exit codes: 0 ok, 1 domain rejection, 2 network failure, 3
authorization denial.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import httpx

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_NETWORK = 2
EXIT_AUTHZ = 3


class Cli:
    def __init__(self, server: str, token: str, json_mode: bool):
        self.json_mode = json_mode
        self.client = httpx.Client(
            base_url=server.rstrip("/") + "/api/v1",
            headers={"Authorization": f"Bearer {token}"},
            timeout=30.0)

    def call(self, method: str, path: str, **kw):
        try:
            resp = self.client.request(method, path, **kw)
        except httpx.HTTPError as exc:
            click.echo(f"network error: {exc}", err=True)
            sys.exit(EXIT_NETWORK)
        if resp.status_code in (401, 403):
            body = _safe_json(resp)
            click.echo(f"denied: {body.get('message', resp.status_code)}", err=True)
            sys.exit(EXIT_AUTHZ)
        return resp

    def emit(self, doc, human: str | None = None) -> None:
        if self.json_mode:
            click.echo(json.dumps(doc, ensure_ascii=False))
        else:
            click.echo(human if human is not None else json.dumps(doc, indent=2))


def _safe_json(resp) -> dict:
    try:
        return resp.json()
    except ValueError:
        return {}


@click.group()
@click.option("--server", envvar="LP_SERVER", default="http://127.0.0.1:8472",
              show_default=True, help="server base URL")
@click.option("--token", envvar="LP_TOKEN", default="",
              help="bearer secret (or set LP_TOKEN)")
@click.option("--token-file", type=click.Path(exists=True, path_type=Path),
              default=None, help="file containing the bearer secret")
@click.option("--json", "json_mode", is_flag=True, help="emit one JSON document")
@click.pass_context
def cli(ctx, server, token, token_file, json_mode):
    if token_file is not None:
        token = token_file.read_text().strip()
    ctx.obj = Cli(server, token, json_mode)


@cli.group()
def config():
    pass


@config.command("load")
@click.argument("path", type=click.Path(exists=True, path_type=Path))
@click.pass_obj
def config_load(cli: Cli, path: Path):
    """Upsert every config document under PATH (file or directory)."""
    files = sorted(path.rglob("*.json")) if path.is_dir() else [path]
    docs = []
    for f in files:
        try:
            doc = json.loads(f.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            docs.append((f, None, f"unreadable: {exc}"))
            continue
        docs.append((f, doc, None))
    # templates and sites must land before the protocols that reference them
    order = {"site": 0, "template": 1, "protocol": 2, "subscription": 3}
    docs.sort(key=lambda item: order.get((item[1] or {}).get("_kind", ""), 9))

    results = []
    failed = 0
    for f, doc, err in docs:
        if err is not None:
            results.append({"file": str(f), "status": "error", "detail": err})
            failed += 1
            continue
        body = dict(doc)
        kind = body.pop("_kind", None)
        doc_id = body.get(f"{kind}_id") or body.get("template_id") \
            or body.get("subscription_id")
        if kind is None or doc_id is None:
            results.append({"file": str(f), "status": "error",
                            "detail": "missing _kind or id field"})
            failed += 1
            continue
        resp = cli.call("PUT", f"/configs/{kind}/{doc_id}", json=body)
        if resp.status_code == 200:
            out = resp.json()
            results.append({"file": str(f), "status": "ok",
                            "kind": kind, "id": doc_id, "version": out["version"]})
        else:
            body = _safe_json(resp)
            results.append({"file": str(f), "status": "rejected",
                            "detail": body.get("message", ""),
                            "errors": body.get("details", [])})
            failed += 1

    cli.emit({"results": results},
             human="\n".join(f"{r['status']:8s} {r['file']}"
                             + (f" -> {r.get('kind')}/{r.get('id')} v{r.get('version')}"
                                if r["status"] == "ok" else f" ({r.get('detail')})")
                             for r in results) or "no documents found")
    sys.exit(EXIT_REJECTED if failed else EXIT_OK)


@cli.group()
def token():
    pass


@token.command("create")
@click.argument("principal")
@click.option("--roles", required=True, help="comma-separated role names")
@click.option("--display-name", default=None)
@click.pass_obj
def token_create(cli: Cli, principal, roles, display_name):
    resp = cli.call("POST", "/auth/token", json={
        "principal_id": principal,
        "roles": [r.strip() for r in roles.split(",") if r.strip()],
        "display_name": display_name or principal,
    })
    if resp.status_code != 200:
        body = _safe_json(resp)
        click.echo(f"rejected: {body.get('message', resp.status_code)}", err=True)
        sys.exit(EXIT_REJECTED)
    out = resp.json()
    # the secret is shown exactly once; never echoed again anywhere
    cli.emit(out, human=out["secret"])


@token.command("revoke")
@click.argument("principal")
@click.pass_obj
def token_revoke(cli: Cli, principal):
    resp = cli.call("POST", "/auth/token",
                    json={"principal_id": principal, "action": "revoke"})
    if resp.status_code != 200:
        body = _safe_json(resp)
        click.echo(f"rejected: {body.get('message', resp.status_code)}", err=True)
        sys.exit(EXIT_REJECTED)
    cli.emit(resp.json(), human=f"revoked {principal}")


@cli.group()
def records():
    pass


@records.command("export")
@click.option("--study", default=None)
@click.option("--site", default=None)
@click.option("--protocol", default=None)
@click.option("--from", "from_", default=None, help="RFC 3339 lower bound")
@click.option("--to", default=None, help="RFC 3339 upper bound")
@click.option("--format", "fmt", type=click.Choice(["jsonl"]), default="jsonl")
@click.pass_obj
def records_export(cli: Cli, study, site, protocol, from_, to, fmt):
    """Stream records (with linkage summaries) as one JSON document per line."""
    params = {k: v for k, v in (("study", study), ("site", site),
                                ("protocol", protocol), ("from", from_),
                                ("to", to)) if v}
    page, count = 1, 0
    while True:
        resp = cli.call("GET", "/records",
                        params={**params, "page": page, "page_size": 100})
        if resp.status_code != 200:
            body = _safe_json(resp)
            click.echo(f"rejected: {body.get('message', '')}", err=True)
            if count:
                click.echo("partial output above", err=True)
            sys.exit(EXIT_REJECTED)
        out = resp.json()
        for rec in out["records"]:
            click.echo(json.dumps(rec, ensure_ascii=False, sort_keys=True))
            count += 1
        if page * out["page_size"] >= out["total"]:
            break
        page += 1
    click.echo(f"{count} records", err=True)


@cli.group()
def audit():
    pass


@audit.command("tail")
@click.option("--since", default=0, type=int, help="return events after this seq")
@click.pass_obj
def audit_tail(cli: Cli, since):
    resp = cli.call("GET", "/audit", params={"since_seq": since})
    if resp.status_code != 200:
        sys.exit(EXIT_REJECTED)
    events = resp.json()["events"]
    cli.emit({"events": events},
             human="\n".join(
                 f"{e['seq']:6d} {e['at']} {e['outcome']:7s} "
                 f"{e['principal_id']} {e['action']} {e['resource']}"
                 for e in events))


if __name__ == "__main__":
    cli()
