"""Keeps the browser app's validation-parity corpus honest.

frontend/tests/fixtures/validation_cases.json is generated from the canonical
validator; if the validator's behavior changes, this test fails until the
corpus is regenerated (python3 tools/generate_ui_validation_cases.py).
"""

import json
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURE = ROOT / "frontend" / "tests" / "fixtures" / "validation_cases.json"


def test_validation_corpus_is_current(tmp_path):
    committed = json.loads(FIXTURE.read_text())
    backup = FIXTURE.read_text()
    try:
        subprocess.run([sys.executable,
                        str(ROOT / "tools" / "generate_ui_validation_cases.py")],
                       check=True, capture_output=True)
        regenerated = json.loads(FIXTURE.read_text())
    finally:
        FIXTURE.write_text(backup)
    assert regenerated == committed, (
        "validation corpus is stale; rerun tools/generate_ui_validation_cases.py")


def test_corpus_covers_every_error_code():
    corpus = json.loads(FIXTURE.read_text())
    codes = {e["code"] for c in corpus["cases"] for e in c["expected"]}
    assert codes == {"missing_required", "wrong_kind",
                     "constraint_violation", "unknown_field"}
    assert any(c["expected"] == [] for c in corpus["cases"])
