// @vitest-environment jsdom
/** Form rendering: fixed kind -> control mapping, inline errors, value
 * preservation on failure. */

import { describe, expect, it, vi } from "vitest";

import {
  buildFormViewModel,
  isSubmittable,
  readValues,
  renderForm,
  showErrors,
} from "../src/form.js";
import type { FormTemplate } from "../src/types.js";

const TEMPLATE: FormTemplate = {
  template_id: "breath_bag",
  version: 1,
  file_id_pattern: "{participant}-{seq:3}",
  expected_file_kinds: ["*.csv"],
  fields: [
    { name: "participant", label: "Participant", kind: "text", required: true },
    { name: "visit", label: "Visit", kind: "integer", required: true,
      constraints: { min: 1, max: 12 } },
    { name: "weight", label: "Weight", kind: "decimal" },
    { name: "fasted", label: "Fasted", kind: "boolean" },
    { name: "collected", label: "Collected", kind: "timestamp" },
    { name: "bag", label: "Bag", kind: "enum_choice",
      constraints: { choices: ["A", "B"] } },
    { name: "tube", label: "Tube", kind: "barcode" },
  ],
};

describe("criterion 8: field kinds render their mapped controls", () => {
  const vm = buildFormViewModel(TEMPLATE);
  const form = renderForm(vm, document, () => {});

  it("one control per field, in declared order", () => {
    const names = [...form.querySelectorAll<HTMLElement>(".field")]
      .map((f) => f.dataset.field);
    expect(names).toEqual(
      ["participant", "visit", "weight", "fasted", "collected", "bag", "tube"]);
  });

  it.each([
    ["participant", "input", "text"],
    ["visit", "input", "number"],
    ["weight", "input", "number"],
    ["fasted", "input", "checkbox"],
    ["collected", "input", "datetime-local"],
    ["tube", "input", "text"],
  ])("%s renders <%s type=%s>", (name, tag, type) => {
    const el = form.querySelector<HTMLInputElement>(`#field-${name}`)!;
    expect(el.tagName.toLowerCase()).toBe(tag);
    expect(el.type).toBe(type);
  });

  it("enum_choice renders a select with exactly its choices", () => {
    const select = form.querySelector<HTMLSelectElement>("#field-bag")!;
    expect(select.tagName.toLowerCase()).toBe("select");
    const options = [...select.options].map((o) => o.value);
    expect(options).toEqual(["", "A", "B"]); // placeholder + 2 choices
  });

  it("barcode input accepts scanner keystrokes (plain text entry)", () => {
    const el = form.querySelector<HTMLInputElement>("#field-tube")!;
    expect(el.dataset.barcode).toBe("true");
    el.value = "TB-0042";
    expect(readValues(vm, form).tube).toBe("TB-0042");
  });

  it("timestamp control has a now shortcut that fills the input", () => {
    const wrap = form.querySelector<HTMLElement>('[data-field="collected"]')!;
    const button = wrap.querySelector<HTMLButtonElement>(".now-shortcut")!;
    button.click();
    const input = wrap.querySelector<HTMLInputElement>("input")!;
    expect(input.value).toMatch(/^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}/);
  });
});

describe("template edge cases", () => {
  it("zero fields yields a form with only the submit action", () => {
    const vm = buildFormViewModel({ ...TEMPLATE, fields: [] });
    const form = renderForm(vm, document, () => {});
    expect(form.querySelectorAll(".field")).toHaveLength(0);
    expect(form.querySelectorAll("button[type=submit]")).toHaveLength(1);
  });

  it("unknown kind blocks the session with a clear message", () => {
    const vm = buildFormViewModel({
      ...TEMPLATE,
      fields: [{ name: "odd", label: "Odd", kind: "hologram" }],
    });
    expect(vm.unsupported).toEqual(["odd"]);
    const form = renderForm(vm, document, () => {});
    expect(form.querySelector(".form-blocked")?.textContent).toContain("odd");
    expect(form.querySelector("button[type=submit]")).toBeNull();
  });
});

describe("submit flow", () => {
  it("submit is disabled while a required field is empty", () => {
    const vm = buildFormViewModel(TEMPLATE);
    const form = renderForm(vm, document, () => {});
    expect(isSubmittable(vm, form)).toBe(false);
    form.querySelector<HTMLInputElement>("#field-participant")!.value = "P001";
    form.querySelector<HTMLInputElement>("#field-visit")!.value = "2";
    expect(isSubmittable(vm, form)).toBe(true);
  });

  it("checkbox and select values are read with their proper types", () => {
    const vm = buildFormViewModel(TEMPLATE);
    const form = renderForm(vm, document, () => {});
    form.querySelector<HTMLInputElement>("#field-fasted")!.checked = true;
    form.querySelector<HTMLSelectElement>("#field-bag")!.value = "B";
    const values = readValues(vm, form);
    expect(values.fasted).toBe(true);
    expect(values.bag).toBe("B");
  });

  it("inline errors land on their field only and values survive", () => {
    const vm = buildFormViewModel(TEMPLATE);
    const form = renderForm(vm, document, () => {});
    const participant = form.querySelector<HTMLInputElement>("#field-participant")!;
    participant.value = "P001";
    showErrors(form, [
      { field: "visit", code: "constraint_violation", message: "13 above maximum 12" },
    ]);
    const visitError = form.querySelector<HTMLElement>('[data-error-for="visit"]')!;
    expect(visitError.hidden).toBe(false);
    expect(visitError.textContent).toBe("13 above maximum 12");
    const others = [...form.querySelectorAll<HTMLElement>(".field-error")]
      .filter((e) => e.dataset.errorFor !== "visit");
    expect(others.every((e) => e.hidden)).toBe(true);
    expect(participant.value).toBe("P001"); // never cleared by an error
  });

  it("errors without a matching control go to the form banner", () => {
    const vm = buildFormViewModel(TEMPLATE);
    const form = renderForm(vm, document, () => {});
    showErrors(form, [
      { field: "", code: "agent_unreachable", message: "Could not reach the agent" },
    ]);
    const banner = form.querySelector<HTMLElement>(".form-banner")!;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toContain("Could not reach the agent");
  });

  it("submit handler receives the entered values", () => {
    const vm = buildFormViewModel(TEMPLATE);
    const onSubmit = vi.fn();
    const form = renderForm(vm, document, onSubmit);
    form.querySelector<HTMLInputElement>("#field-participant")!.value = "P007";
    form.querySelector<HTMLInputElement>("#field-visit")!.value = "3";
    form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
    expect(onSubmit).toHaveBeenCalledOnce();
    const values = onSubmit.mock.calls[0][0] as Record<string, unknown>;
    expect(values.participant).toBe("P007");
    expect(values.visit).toBe("3");
  });
});
