/** Parity between the advisory client validator and the canonical one.
 *
 * The fixture corpus is produced by tools/generate_ui_validation_cases.py,
 * which runs every case through the validator the agent and server share and
 * records the expected (field, code) error sets.
 */

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { validateSubmission } from "../src/validate.js";
import type { FormTemplate, ValidationError } from "../src/types.js";

interface Case {
  name: string;
  values: Record<string, unknown>;
  expected: { field: string; code: string }[];
}

const corpus = JSON.parse(readFileSync(
  new URL("./fixtures/validation_cases.json", import.meta.url), "utf-8",
)) as { template: FormTemplate; cases: Case[] };

function errorSet(errors: { field: string; code: string }[]): string[] {
  return errors.map((e) => `${e.field}:${e.code}`).sort();
}

describe("criterion 8: client validation matches the agent's error sets", () => {
  it("covers every error code at least once", () => {
    const codes = new Set(
      corpus.cases.flatMap((c) => c.expected.map((e) => e.code)));
    expect(codes).toEqual(new Set([
      "missing_required", "wrong_kind", "constraint_violation", "unknown_field",
    ]));
  });

  for (const testCase of corpus.cases) {
    it(testCase.name, () => {
      const { errors } = validateSubmission(corpus.template, testCase.values);
      expect(errorSet(errors)).toEqual(errorSet(testCase.expected));
    });
  }
});

describe("timestamp normalization", () => {
  const template: FormTemplate = {
    template_id: "t", version: 1, file_id_pattern: "", expected_file_kinds: [],
    fields: [{ name: "at", label: "At", kind: "timestamp", required: true }],
  };

  function normalized(raw: string): unknown {
    const { typed, errors } = validateSubmission(template, { at: raw });
    expect(errors).toEqual([]);
    return typed.at;
  }

  it("converts offsets to UTC with millisecond precision", () => {
    expect(normalized("2026-08-20T12:30:00+02:00")).toBe("2026-08-20T10:30:00.000Z");
    expect(normalized("2026-08-20T10:30:00.1234Z")).toBe("2026-08-20T10:30:00.123Z");
    expect(normalized("2026-08-20 10:30:00z")).toBe("2026-08-20T10:30:00.000Z");
  });

  it("rejects rollover dates the canonical parser rejects", () => {
    const { errors } = validateSubmission(template, { at: "2026-02-30T10:00:00Z" });
    expect(errors.map((e: ValidationError) => e.code)).toEqual(["wrong_kind"]);
  });
});
