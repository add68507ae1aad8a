"""Config cache, sessions, form submission and file linkage on the agent."""

import pytest

from labpipe.agent.core import Agent, SessionConflict, UnknownProtocol
from labpipe.model import ValidationFailure
from labpipe.server.app import create_app

from conftest import PROTOCOL_DOC, TEMPLATE_DOC, install_demo_configs, token_with
from harness import FlakyTransport, InProcessTransport


@pytest.fixture
def rig(lab, admin, tmp_path):
    install_demo_configs(lab, admin)
    secret = token_with(lab, admin, "agent1",
                        ["record_write", "file_write", "config_read"])
    transport = FlakyTransport(InProcessTransport(create_app(lab.data_dir, server=lab)))
    agent = Agent(tmp_path / "agent", server_url="http://server", token=secret,
                  transport=transport, agent_id="agent1")
    return lab, agent, transport


def write(agent, sess, name, data):
    path = agent.watch_root / "gcms01" / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


class TestRefreshConfigs:
    def test_fresh_install_full_catalog(self, rig):
        lab, agent, _ = rig
        out = agent.refresh_configs()
        assert out["cache_version"] == lab.global_version.value
        assert [p["protocol_id"] for p in agent.cached_protocols()] == ["ember_gcms_site1"]

    def test_offline_refresh_keeps_cache(self, rig):
        lab, agent, transport = rig
        agent.refresh_configs()
        v = agent.cache["global_version"]
        transport.offline = True
        out = agent.refresh_configs()
        assert "error" in out and agent.cache["global_version"] == v
        assert agent.cached_protocol("ember_gcms_site1") is not None

    def test_delta_applies_one_document(self, rig, admin):
        lab, agent, _ = rig
        agent.refresh_configs()
        lab.upsert_config(admin, "site", "site2", {"site_id": "site2", "name": "B"})
        out = agent.refresh_configs()
        assert out["applied"] == 1
        assert agent.cache["global_version"] == lab.global_version.value

    def test_cache_persists_across_restart(self, rig, tmp_path):
        lab, agent, transport = rig
        agent.refresh_configs()
        agent.close()
        reborn = Agent(tmp_path / "agent", agent_id="agent1")  # offline restart
        assert reborn.cached_protocol("ember_gcms_site1") is not None


class TestSessions:
    def test_empty_watch_dir_baseline(self, rig):
        _, agent, _ = rig
        agent.refresh_configs()
        sess = agent.start_session("ember_gcms_site1")
        assert sess["watcher_state"]["baseline"]["entries"] == {}

    def test_preexisting_files_in_baseline_never_linked(self, rig):
        _, agent, _ = rig
        agent.refresh_configs()
        for i in range(3):
            write(agent, None, f"old{i}.csv", b"x")
        sess = agent.start_session("ember_gcms_site1")
        assert len(sess["watcher_state"]["baseline"]["entries"]) == 3
        agent.submit_form(sess["session_id"], {"participant": "P001", "bag": "A"})
        for _ in range(3):
            assert not agent.scan_session(sess["session_id"])

    def test_unknown_protocol(self, rig):
        _, agent, _ = rig
        agent.refresh_configs()
        with pytest.raises(UnknownProtocol):
            agent.start_session("ghost")

    def test_concurrent_session_conflict(self, rig):
        _, agent, _ = rig
        agent.refresh_configs()
        agent.start_session("ember_gcms_site1")
        with pytest.raises(SessionConflict):
            agent.start_session("ember_gcms_site1")

    def test_session_resumes_after_restart(self, rig, tmp_path):
        _, agent, _ = rig
        agent.refresh_configs()
        sess = agent.start_session("ember_gcms_site1")
        agent.submit_form(sess["session_id"], {"participant": "P001", "bag": "A"})
        agent.close()
        reborn = Agent(tmp_path / "agent", agent_id="agent1")
        status = reborn.session_status(sess["session_id"])
        assert len(status["records"]) == 1
        with pytest.raises(SessionConflict):
            reborn.start_session("ember_gcms_site1")


class TestSubmitForm:
    def test_valid_submission_journals_first(self, rig):
        _, agent, _ = rig
        agent.refresh_configs()
        sess = agent.start_session("ember_gcms_site1")
        assert agent.journal.depth() == 0
        record = agent.submit_form(sess["session_id"], {"participant": "P001", "bag": "A"})
        assert agent.journal.depth() == 1
        entry = agent.journal.pending()[0]
        assert entry.kind == "record"
        assert entry.key == record["idempotency_key"]

    def test_invalid_submission_never_journals(self, rig):
        _, agent, _ = rig
        agent.refresh_configs()
        sess = agent.start_session("ember_gcms_site1")
        with pytest.raises(ValidationFailure):
            agent.submit_form(sess["session_id"], {"bag": "Z"})
        assert agent.journal.depth() == 0

    def test_keys_are_distinct_and_countered(self, rig):
        _, agent, _ = rig
        agent.refresh_configs()
        sid = agent.start_session("ember_gcms_site1")["session_id"]
        r1 = agent.submit_form(sid, {"participant": "P001", "bag": "A"})
        r2 = agent.submit_form(sid, {"participant": "P002", "bag": "B"})
        assert r1["idempotency_key"] == f"agent1:{sid}:1"
        assert r2["idempotency_key"] == f"agent1:{sid}:2"


class TestLinkage:
    def test_change_detection_links_settled_files(self, rig):
        _, agent, _ = rig
        agent.refresh_configs()
        sid = agent.start_session("ember_gcms_site1")["session_id"]
        agent.submit_form(sid, {"participant": "P001", "bag": "A"})
        write(agent, None, "run1.csv", b"instrument output 1")
        write(agent, None, "run2.csv", b"instrument output 2")
        agent.scan_session(sid)  # first sight
        agent.scan_session(sid)  # settled -> linked
        status = agent.session_status(sid)
        record = status["records"][0]
        assert record["linkage_state"] == "linked"
        assert sorted(l["path"] for l in record["linkages"]) == ["run1.csv", "run2.csv"]
        # 1 record entry + 2 file entries journaled
        assert agent.journal.depth() == 3
        # staged copies exist, originals untouched
        assert (agent.watch_root / "gcms01" / "run1.csv").exists()
        assert len(list(agent.staging.iterdir())) == 2

    def test_empty_changeset_no_linkages(self, rig):
        _, agent, _ = rig
        agent.refresh_configs()
        sid = agent.start_session("ember_gcms_site1")["session_id"]
        agent.submit_form(sid, {"participant": "P001", "bag": "A"})
        assert agent.scan_session(sid).created == []
        assert agent.session_status(sid)["records"][0]["linkages"] == []

    def test_id_pattern_links_expected_file(self, rig, admin):
        lab, agent, _ = rig
        lab.upsert_config(admin, "protocol", "ember_ptr_site1", {
            **PROTOCOL_DOC, "protocol_id": "ember_ptr_site1",
            "instrument_id": "ptr01", "watch_directory_hint": "ptr01",
            "link_method": "id_pattern"})
        agent.refresh_configs()
        sid = agent.start_session("ember_ptr_site1")["session_id"]
        record = agent.submit_form(sid, {"participant": "P001", "bag": "A"})
        assert record["expected_file_id"] == "EMBER-P001-001"
        path = agent.watch_root / "ptr01" / "EMBER-P001-001.csv"
        path.write_bytes(b"ptr output")
        agent.scan_session(sid)
        agent.scan_session(sid)
        status = agent.session_status(sid)
        link, = status["records"][0]["linkages"]
        assert link["link_method"] == "id_pattern"
        assert link["path"] == "EMBER-P001-001.csv"

    def test_id_pattern_unresolved_until_file_appears(self, rig, admin):
        lab, agent, _ = rig
        lab.upsert_config(admin, "protocol", "ember_ptr_site1", {
            **PROTOCOL_DOC, "protocol_id": "ember_ptr_site1",
            "instrument_id": "ptr01", "watch_directory_hint": "ptr01",
            "link_method": "id_pattern"})
        agent.refresh_configs()
        sid = agent.start_session("ember_ptr_site1")["session_id"]
        agent.submit_form(sid, {"participant": "P001", "bag": "A"})
        agent.scan_session(sid)
        status = agent.session_status(sid)
        assert status["unresolved_linkages"] == [status["records"][0]["record_id"]]
        (agent.watch_root / "ptr01" / "EMBER-P001-001.csv").write_bytes(b"late")
        agent.scan_session(sid)
        agent.scan_session(sid)
        assert agent.session_status(sid)["unresolved_linkages"] == []
