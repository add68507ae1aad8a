"""Command-line interface tests.

Most tests drive the click commands in-process against a live uvicorn server
bound to a loopback port, so the CLI is exercised end to end over real HTTP —
there is no privileged side channel to fall back on.
"""

import json
import socket
import threading
import time
from pathlib import Path

import httpx
import pytest
import uvicorn
from click.testing import CliRunner

from labpipe.cli.main import cli
from labpipe.server.app import create_app
from labpipe.server.core import LabServer

from conftest import PROTOCOL_DOC, TEMPLATE_DOC

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures" / "ember"


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="module")
def live_server(tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("cli-server")
    lab = LabServer(data_dir)
    secret = lab.bootstrap_token()
    port = _free_port()
    config = uvicorn.Config(create_app(data_dir, server=lab),
                            host="127.0.0.1", port=port, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    url = f"http://127.0.0.1:{port}"
    deadline = time.monotonic() + 10
    while time.monotonic() < deadline:
        try:
            httpx.get(url + "/api/v1/healthz", timeout=1.0)
            break
        except httpx.HTTPError:
            time.sleep(0.05)
    else:
        raise RuntimeError("server did not come up")
    yield url, secret, lab
    server.should_exit = True
    thread.join(timeout=5)


def run_cli(url, secret, *args, env=None):
    runner = CliRunner()
    return runner.invoke(cli, ["--server", url, "--token", secret, *args],
                         env=env, catch_exceptions=False)


def test_config_load_ember_fixture(live_server):
    url, secret, _ = live_server
    result = run_cli(url, secret, "--json", "config", "load", str(FIXTURES))
    assert result.exit_code == 0, result.output
    out = json.loads(result.output)
    statuses = [r["status"] for r in out["results"]]
    assert statuses == ["ok"] * 15
    kinds = [(r["kind"], r["id"]) for r in out["results"]]
    assert sum(1 for k, _ in kinds if k == "site") == 2
    assert sum(1 for k, _ in kinds if k == "template") == 4
    assert sum(1 for k, _ in kinds if k == "protocol") == 9


def test_config_load_empty_directory_is_noop(live_server, tmp_path):
    url, secret, _ = live_server
    result = run_cli(url, secret, "config", "load", str(tmp_path))
    assert result.exit_code == 0
    assert "no documents" in result.output


def test_config_load_partial_failure_exits_1(live_server, tmp_path):
    url, secret, _ = live_server
    good_t = {**TEMPLATE_DOC, "_kind": "template", "template_id": "cli_t1"}
    good_p = {**PROTOCOL_DOC, "_kind": "protocol", "protocol_id": "cli_p1",
              "template": {"template_id": "cli_t1", "version": 1}}
    bad = {**TEMPLATE_DOC, "_kind": "template", "template_id": "cli_bad",
           "file_id_pattern": "{unclosed"}
    for name, doc in [("a_t.json", good_t), ("b_p.json", good_p),
                      ("c_bad.json", bad)]:
        (tmp_path / name).write_text(json.dumps(doc))
    result = run_cli(url, secret, "--json", "config", "load", str(tmp_path))
    assert result.exit_code == 1
    out = json.loads(result.output)
    by_status = {r["status"] for r in out["results"]}
    assert by_status == {"ok", "rejected"}
    # the two valid documents were applied and stayed applied
    with httpx.Client(base_url=url + "/api/v1",
                      headers={"Authorization": f"Bearer {secret}"}) as c:
        ids = {d["id"] for d in c.get("/configs").json()["documents"]}
    assert {"cli_t1", "cli_p1"} <= ids
    assert "cli_bad" not in ids


def test_token_create_revoke_lifecycle(live_server):
    url, secret, _ = live_server
    created = run_cli(url, secret, "token", "create", "cli_user",
                      "--roles", "record_read")
    assert created.exit_code == 0
    user_secret = created.output.strip()
    assert len(user_secret) > 20

    with httpx.Client(base_url=url + "/api/v1",
                      headers={"Authorization": f"Bearer {user_secret}"}) as c:
        assert c.get("/records").status_code == 200

    revoked = run_cli(url, secret, "token", "revoke", "cli_user")
    assert revoked.exit_code == 0
    with httpx.Client(base_url=url + "/api/v1",
                      headers={"Authorization": f"Bearer {user_secret}"}) as c:
        assert c.get("/records").status_code == 401


def test_authz_denial_exits_3(live_server):
    url, secret, _ = live_server
    limited = run_cli(url, secret, "token", "create", "cli_reader",
                      "--roles", "record_read").output.strip()
    result = run_cli(url, limited, "token", "create", "sneaky", "--roles", "admin")
    assert result.exit_code == 3
    assert "denied" in result.stderr


def test_bad_token_exits_3(live_server):
    url, _, _ = live_server
    result = run_cli(url, "not-a-real-secret", "audit", "tail")
    assert result.exit_code == 3


def test_network_failure_exits_2():
    port = _free_port()  # nothing listening
    result = CliRunner().invoke(
        cli, ["--server", f"http://127.0.0.1:{port}", "--token", "x",
              "audit", "tail"], catch_exceptions=False)
    assert result.exit_code == 2
    assert "network error" in result.stderr


def test_records_export_matches_pagination_oracle(live_server):
    url, secret, lab = live_server
    writer = run_cli(url, secret, "token", "create", "cli_writer",
                     "--roles", "record_write").output.strip()
    with httpx.Client(base_url=url + "/api/v1",
                      headers={"Authorization": f"Bearer {writer}"}) as c:
        for i in range(25):
            resp = c.post("/records",
                          headers={"Idempotency-Key": f"cli-exp-{i}"},
                          json={"protocol_id": "ember_gcms01_city",
                                "template_version": 1,
                                "session_id": "s-cli",
                                "collected_at": f"2026-08-01T09:{i:02d}:00.000Z",
                                "values": {"participant": "P001", "visit": 1,
                                           "collected_at_bedside":
                                               "2026-08-01T09:00:00.000Z",
                                           "bag": "A"}})
            assert resp.status_code in (200, 201), resp.text

    result = run_cli(url, secret, "records", "export", "--study", "EMBER",
                     "--site", "city_general", "--protocol", "ember_gcms01_city")
    assert result.exit_code == 0
    lines = [json.loads(line) for line in result.stdout.splitlines() if line]
    assert len(lines) == 25
    assert "25 records" in result.stderr
    # same rows the API pagination returns, in the same order
    with httpx.Client(base_url=url + "/api/v1",
                      headers={"Authorization": f"Bearer {secret}"}) as c:
        api = c.get("/records", params={"protocol": "ember_gcms01_city",
                                        "page_size": 200}).json()["records"]
    assert [r["record_id"] for r in lines] == [r["record_id"] for r in api]


def test_records_export_empty_store_zero_footer(live_server):
    url, secret, _ = live_server
    result = run_cli(url, secret, "records", "export", "--study", "NOSUCH")
    assert result.exit_code == 0
    assert result.stdout.strip() == ""
    assert "0 records" in result.stderr


def test_audit_tail_since(live_server):
    url, secret, _ = live_server
    result = run_cli(url, secret, "--json", "audit", "tail", "--since", "0")
    assert result.exit_code == 0
    events = json.loads(result.output)["events"]
    assert events
    seqs = [e["seq"] for e in events]
    assert seqs == list(range(seqs[0], seqs[0] + len(seqs)))
    later = run_cli(url, secret, "--json", "audit", "tail",
                    "--since", str(seqs[-1]))
    remaining = json.loads(later.output)["events"]
    assert all(e["seq"] > seqs[-1] for e in remaining)


def test_token_from_env_and_file(live_server, tmp_path):
    url, secret, _ = live_server
    via_env = CliRunner().invoke(
        cli, ["--server", url, "audit", "tail"],
        env={"LP_TOKEN": secret}, catch_exceptions=False)
    assert via_env.exit_code == 0
    tf = tmp_path / "token.txt"
    tf.write_text(secret + "\n")
    via_file = CliRunner().invoke(
        cli, ["--server", url, "--token-file", str(tf), "audit", "tail"],
        catch_exceptions=False)
    assert via_file.exit_code == 0


def test_json_mode_emits_strict_json(live_server):
    url, secret, _ = live_server
    for args in (["config", "load", str(FIXTURES / "site_city_general.json")],
                 ["audit", "tail", "--since", "0"],
                 ["token", "create", "cli_json_user", "--roles", "record_read"]):
        result = run_cli(url, secret, "--json", *args)
        assert result.exit_code == 0, result.output
        json.loads(result.output)  # must parse as a single document
