import json
import pytest
from fastapi.testclient import TestClient

from labpipe.notify import CaptureSink, Notifier, default_registry
from labpipe.server.app import create_app
from labpipe.server.core import LabServer


@pytest.fixture
def lab(tmp_path):
    return LabServer(tmp_path / "server-data")


@pytest.fixture
def admin(lab):
    return lab.authenticate(lab.bootstrap_token())


@pytest.fixture
def capture(lab):
    sink = lab.notifier.registry.get("capture")
    return sink


def make_client(lab):
    app = create_app(lab.data_dir, server=lab)
    return TestClient(app, raise_server_exceptions=False)


@pytest.fixture
def client(lab):
    return make_client(lab)


@pytest.fixture
def admin_secret(tmp_path):
    """(lab, admin_secret) pair for HTTP-level tests."""
    lab = LabServer(tmp_path / "server-data-http")
    return lab, lab.bootstrap_token()


TEMPLATE_DOC = {
    "template_id": "breath_bag",
    "fields": [
        {"name": "participant", "label": "Participant", "kind": "text", "required": True},
        {"name": "bag", "label": "Bag", "kind": "enum_choice",
         "constraints": {"choices": ["A", "B"]}},
    ],
    "file_id_pattern": "{study}-{participant}-{seq:3}",
    "expected_file_kinds": ["*.csv"],
}

PROTOCOL_DOC = {
    "protocol_id": "ember_gcms_site1",
    "study_id": "EMBER",
    "site_id": "site1",
    "instrument_id": "gcms01",
    "sampling_mode": "offline",
    "template": {"template_id": "breath_bag", "version": 1},
    "watch_directory_hint": "gcms01",
    "notification_topics": ["sample.collected.EMBER"],
    "link_method": "change_detection",
}


def install_demo_configs(lab, admin):
    lab.upsert_config(admin, "template", "breath_bag", TEMPLATE_DOC)
    lab.upsert_config(admin, "protocol", "ember_gcms_site1", PROTOCOL_DOC)


def token_with(lab, admin, principal_id, roles):
    return lab.issue_token(admin, principal_id, roles, display_name=principal_id)


def load_fixture_dir(lab, admin, path):
    """Upsert every JSON config document under `path` (templates first)."""
    docs = []
    for p in sorted(path.rglob("*.json")):
        docs.append(json.loads(p.read_text()))
    order = {"site": 0, "template": 1, "protocol": 2, "subscription": 3}
    docs.sort(key=lambda d: order.get(d.get("_kind"), 9))
    for doc in docs:
        kind = doc.pop("_kind")
        doc_id = doc.get(f"{kind}_id") or doc.get("template_id")
        lab.upsert_config(admin, kind, doc_id, doc)
