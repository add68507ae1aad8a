/** Advisory client-side validation.
 *
 * This mirrors the canonical validator that the agent and server run; it
 * exists only to give instant inline feedback. The agent re-validates every
 * submission, so divergence here can annoy but never corrupt. Parity is
 * pinned by tests/fixtures/validation_cases.json.
 */

import type { FieldSpec, FormTemplate, ValidationError } from "./types.js";

const TEXTUAL = new Set(["text", "barcode"]);
const NUMERIC = new Set(["integer", "decimal"]);

class Wrong extends Error {}

export function validateSubmission(
  template: FormTemplate,
  values: Record<string, unknown>,
): { typed: Record<string, unknown>; errors: ValidationError[] } {
  const errors: ValidationError[] = [];
  const typed: Record<string, unknown> = {};
  const known = new Set(template.fields.map((f) => f.name));

  for (const name of Object.keys(values)) {
    if (!known.has(name)) {
      errors.push({ field: name, code: "unknown_field",
        message: `no field named '${name}' in template` });
    }
  }
  for (const spec of template.fields) {
    const raw = values[spec.name];
    if (raw === undefined || raw === null || raw === "") {
      if (spec.required) {
        errors.push({ field: spec.name, code: "missing_required",
          message: `required field '${spec.name}' is missing` });
      }
      continue;
    }
    let coerced: unknown;
    try {
      coerced = coerce(spec, raw);
    } catch (err) {
      if (err instanceof Wrong) {
        errors.push({ field: spec.name, code: "wrong_kind", message: err.message });
        continue;
      }
      throw err;
    }
    const verr = checkConstraints(spec, coerced);
    if (verr !== null) {
      errors.push(verr);
      continue;
    }
    typed[spec.name] = coerced;
  }
  return { typed, errors };
}

function coerce(spec: FieldSpec, raw: unknown): unknown {
  const kind = spec.kind;
  if (TEXTUAL.has(kind) || kind === "enum_choice") {
    if (typeof raw !== "string") throw new Wrong(`expected text, got ${typeof raw}`);
    return raw;
  }
  if (kind === "integer") {
    if (typeof raw === "boolean") throw new Wrong("expected integer, got boolean");
    if (typeof raw === "number") {
      if (!Number.isInteger(raw)) throw new Wrong(`expected integer, got ${raw}`);
      return raw;
    }
    if (typeof raw === "string") return parseIntStrict(raw);
    throw new Wrong(`expected integer, got ${typeof raw}`);
  }
  if (kind === "decimal") {
    if (typeof raw === "boolean") throw new Wrong("expected decimal, got boolean");
    if (typeof raw === "number") return raw;
    if (typeof raw === "string") return parseFloatStrict(raw);
    throw new Wrong(`expected decimal, got ${typeof raw}`);
  }
  if (kind === "boolean") {
    if (typeof raw === "boolean") return raw;
    if (typeof raw === "string") {
      const t = raw.trim().toLowerCase();
      if (t === "true" || t === "false") return t === "true";
    }
    throw new Wrong(`expected boolean, got ${JSON.stringify(raw)}`);
  }
  if (kind === "timestamp") {
    if (typeof raw !== "string") {
      throw new Wrong(`expected timestamp string, got ${typeof raw}`);
    }
    return normalizeTimestamp(raw);
  }
  throw new Wrong(`unsupported kind ${kind}`);
}

function parseIntStrict(raw: string): number {
  const t = raw.trim();
  if (!/^[+-]?\d+(?:_\d+)*$/.test(t)) throw new Wrong(`not an integer: '${raw}'`);
  return Number(t.replace(/_/g, ""));
}

function parseFloatStrict(raw: string): number {
  const t = raw.trim().replace(/_/g, "");
  if (!/^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$/.test(t)) {
    throw new Wrong(`not a decimal: '${raw}'`);
  }
  return Number(t);
}

const TS_RE =
  /^(\d{4})-(\d{2})-(\d{2})[T ](\d{2}):(\d{2})(?::(\d{2})(?:\.(\d{1,6}))?)?(Z|z|[+-]\d{2}:\d{2})$/;

/** Parse an RFC 3339 timestamp and reformat as UTC with millisecond "Z". */
export function normalizeTimestamp(raw: string): string {
  const m = TS_RE.exec(raw.trim());
  if (m === null) throw new Wrong(`not an RFC 3339 timestamp: '${raw}'`);
  const [, y, mo, d, h, mi, s, frac, tz] = m;
  const millis = frac === undefined
    ? 0
    : Math.trunc(Number(`0.${frac}`) * 1000);
  let offsetMin = 0;
  if (tz !== "Z" && tz !== "z") {
    const sign = tz.startsWith("-") ? -1 : 1;
    offsetMin = sign * (Number(tz.slice(1, 3)) * 60 + Number(tz.slice(4, 6)));
  }
  const utc = Date.UTC(
    Number(y), Number(mo) - 1, Number(d),
    Number(h), Number(mi), Number(s ?? "0"), millis,
  ) - offsetMin * 60_000;
  const date = new Date(utc);
  // Date.UTC silently rolls over out-of-range components (Feb 30 -> Mar 2);
  // the canonical validator rejects those, so compare back.
  const check = new Date(Date.UTC(
    Number(y), Number(mo) - 1, Number(d),
    Number(h), Number(mi), Number(s ?? "0"), millis,
  ));
  if (check.getUTCFullYear() !== Number(y)
    || check.getUTCMonth() !== Number(mo) - 1
    || check.getUTCDate() !== Number(d)
    || check.getUTCHours() !== Number(h)
    || check.getUTCMinutes() !== Number(mi)
    || check.getUTCSeconds() !== Number(s ?? "0")) {
    throw new Wrong(`not an RFC 3339 timestamp: '${raw}'`);
  }
  return date.toISOString().replace(/(\.\d{3})\d*Z$/, "$1Z");
}

function checkConstraints(spec: FieldSpec, value: unknown): ValidationError | null {
  const c = spec.constraints ?? {};
  if (spec.kind === "enum_choice" && !(c.choices ?? []).includes(value as string)) {
    return { field: spec.name, code: "constraint_violation",
      message: `'${value}' not in choices ${JSON.stringify(c.choices ?? [])}` };
  }
  if (NUMERIC.has(spec.kind)) {
    const n = value as number;
    if (c.min !== undefined && c.min !== null && n < c.min) {
      return { field: spec.name, code: "constraint_violation",
        message: `${n} below minimum ${c.min}` };
    }
    if (c.max !== undefined && c.max !== null && n > c.max) {
      return { field: spec.name, code: "constraint_violation",
        message: `${n} above maximum ${c.max}` };
    }
  }
  if (TEXTUAL.has(spec.kind) && c.regex !== undefined && c.regex !== null) {
    const full = new RegExp(`^(?:${c.regex})$`);
    if (!full.test(value as string)) {
      return { field: spec.name, code: "constraint_violation",
        message: `'${value}' does not match /${c.regex}/` };
    }
  }
  return null;
}
