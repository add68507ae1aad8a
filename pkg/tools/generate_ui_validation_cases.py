#!/usr/bin/env python3
"""Emit the validation parity corpus consumed by the browser app's tests.

The browser form performs advisory client-side validation; every rule it
enforces must agree with the canonical validator that the agent and server
run. This script feeds raw submissions through the canonical validator and
records the resulting (field, code) error sets. The frontend test suite
replays the same submissions through the TypeScript validator and compares.

Run from the repository root:  python3 tools/generate_ui_validation_cases.py
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from labpipe.model import ValidationFailure, compile_template, validate_submission

TEMPLATE = {
    "template_id": "ui_parity",
    "version": 1,
    "fields": [
        {"name": "participant", "label": "Participant", "kind": "text",
         "required": True, "constraints": {"regex": "^P[0-9]{3}$"}},
        {"name": "visit", "label": "Visit", "kind": "integer",
         "required": True, "constraints": {"min": 1, "max": 12}},
        {"name": "weight_kg", "label": "Weight (kg)", "kind": "decimal",
         "constraints": {"min": 0, "max": 300}},
        {"name": "fasted", "label": "Fasted", "kind": "boolean"},
        {"name": "collected", "label": "Collected at", "kind": "timestamp",
         "required": True},
        {"name": "bag", "label": "Bag", "kind": "enum_choice", "required": True,
         "constraints": {"choices": ["A", "B", "C"]}},
        {"name": "tube", "label": "Tube barcode", "kind": "barcode",
         "constraints": {"regex": "^TB-[0-9]+$"}},
    ],
    "file_id_pattern": "{participant}-{seq:3}",
    "expected_file_kinds": ["*.csv"],
}

VALID = {"participant": "P001", "visit": 3,
         "collected": "2026-08-20T10:00:00.000Z", "bag": "A"}

CASES = [
    ("all_valid_minimal", VALID),
    ("all_valid_full", {**VALID, "weight_kg": 72.5, "fasted": True,
                        "tube": "TB-12345"}),
    ("coercion_from_strings", {**VALID, "visit": "3", "weight_kg": "72.5",
                               "fasted": "true"}),
    ("integer_with_spaces", {**VALID, "visit": " 7 "}),
    ("boolean_case_insensitive", {**VALID, "fasted": "FALSE"}),
    ("decimal_scientific", {**VALID, "weight_kg": "1e2"}),
    ("timestamp_offset_normalized", {**VALID,
                                     "collected": "2026-08-20T12:30:00+02:00"}),
    ("missing_required", {"bag": "A"}),
    ("empty_string_is_missing", {**VALID, "participant": ""}),
    ("null_is_missing", {**VALID, "collected": None}),
    ("optional_empty_ok", {**VALID, "weight_kg": "", "tube": ""}),
    ("integer_not_a_number", {**VALID, "visit": "abc"}),
    ("integer_rejects_boolean", {**VALID, "visit": True}),
    ("integer_rejects_float", {**VALID, "visit": 3.5}),
    ("decimal_not_a_number", {**VALID, "weight_kg": "heavy"}),
    ("boolean_rejects_yes", {**VALID, "fasted": "yes"}),
    ("timestamp_not_a_string", {**VALID, "collected": 1234567890}),
    ("timestamp_garbage", {**VALID, "collected": "yesterday"}),
    ("timestamp_missing_timezone", {**VALID,
                                    "collected": "2026-08-20T10:00:00"}),
    ("timestamp_invalid_day", {**VALID, "collected": "2026-02-30T10:00:00Z"}),
    ("text_wrong_type", {**VALID, "participant": 42}),
    ("enum_wrong_type", {**VALID, "bag": 1}),
    ("enum_not_a_choice", {**VALID, "bag": "D"}),
    ("integer_below_min", {**VALID, "visit": 0}),
    ("integer_above_max_coerced", {**VALID, "visit": "13"}),
    ("decimal_below_min", {**VALID, "weight_kg": -1}),
    ("regex_mismatch", {**VALID, "participant": "X99"}),
    ("barcode_regex_mismatch", {**VALID, "tube": "nope"}),
    ("unknown_field", {**VALID, "extra": "x"}),
    ("many_errors_at_once", {"participant": "X99", "visit": "abc",
                             "fasted": "maybe", "bag": "D", "extra": 1}),
]


def main() -> None:
    template = compile_template(TEMPLATE)
    cases = []
    for name, values in CASES:
        errs = sorted(
            [{"field": e.field, "code": e.code.value}
             for e in _errors_of(template, values)],
            key=lambda e: (e["field"], e["code"]))
        cases.append({"name": name, "values": values, "expected": errs})

    out_path = (Path(__file__).resolve().parent.parent
                / "frontend" / "tests" / "fixtures" / "validation_cases.json")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"template": TEMPLATE, "cases": cases}
    out_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(cases)} cases to {out_path}")


def _errors_of(template, values):
    try:
        validate_submission(template, values)
        return []
    except ValidationFailure as exc:
        return exc.errors


if __name__ == "__main__":
    main()
