/** Form construction: template -> view model -> DOM controls.
 *
 * The control set is a pure function of the template. Submit stays disabled
 * while any required field is empty or any known error is present, and a
 * failed submission never clears what the user typed.
 */

import type { FieldSpec, FormTemplate, ValidationError } from "./types.js";
import { validateSubmission } from "./validate.js";

export type ControlType =
  | "input-text"
  | "input-number"
  | "input-checkbox"
  | "input-datetime"
  | "input-barcode"
  | "select";

export interface Control {
  name: string;
  label: string;
  kind: string;
  required: boolean;
  control: ControlType;
  choices: string[];
  nowShortcut: boolean;
}

export interface FormViewModel {
  templateId: string;
  version: number;
  controls: Control[];
  /** field names whose kind this app cannot render; blocks the session */
  unsupported: string[];
}

const CONTROL_FOR: Record<string, ControlType> = {
  text: "input-text",
  barcode: "input-barcode",
  integer: "input-number",
  decimal: "input-number",
  boolean: "input-checkbox",
  timestamp: "input-datetime",
  enum_choice: "select",
};

export function buildFormViewModel(template: FormTemplate): FormViewModel {
  const controls: Control[] = [];
  const unsupported: string[] = [];
  for (const spec of template.fields) {
    const control = CONTROL_FOR[spec.kind];
    if (control === undefined) {
      unsupported.push(spec.name);
      continue;
    }
    controls.push({
      name: spec.name,
      label: spec.label,
      kind: spec.kind,
      required: spec.required === true,
      control,
      choices: spec.constraints?.choices ?? [],
      nowShortcut: spec.kind === "timestamp",
    });
  }
  return {
    templateId: template.template_id,
    version: template.version,
    controls,
    unsupported,
  };
}

export function renderForm(
  vm: FormViewModel,
  doc: Document,
  onSubmit: (values: Record<string, unknown>) => void,
): HTMLFormElement {
  const form = doc.createElement("form");
  form.className = "collection-form";
  form.noValidate = true;

  if (vm.unsupported.length > 0) {
    const blocked = doc.createElement("p");
    blocked.className = "form-blocked";
    blocked.textContent =
      `This template uses field kinds this app cannot render ` +
      `(${vm.unsupported.join(", ")}). Update the app before starting a session.`;
    form.appendChild(blocked);
    return form;
  }

  for (const control of vm.controls) {
    form.appendChild(renderField(control, doc));
  }

  const banner = doc.createElement("p");
  banner.className = "form-banner";
  banner.hidden = true;
  form.appendChild(banner);

  const submit = doc.createElement("button");
  submit.type = "submit";
  submit.textContent = "Submit record";
  form.appendChild(submit);

  const refresh = () => {
    submit.disabled = !isSubmittable(vm, form);
  };
  form.addEventListener("input", refresh);
  form.addEventListener("change", refresh);
  refresh();

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    onSubmit(readValues(vm, form));
  });
  return form;
}

function renderField(control: Control, doc: Document): HTMLElement {
  const wrap = doc.createElement("div");
  wrap.className = "field";
  wrap.dataset.field = control.name;

  const label = doc.createElement("label");
  label.htmlFor = `field-${control.name}`;
  label.textContent = control.required ? `${control.label} *` : control.label;
  wrap.appendChild(label);

  let input: HTMLInputElement | HTMLSelectElement;
  if (control.control === "select") {
    const select = doc.createElement("select");
    const placeholder = doc.createElement("option");
    placeholder.value = "";
    placeholder.textContent = "— choose —";
    select.appendChild(placeholder);
    for (const choice of control.choices) {
      const option = doc.createElement("option");
      option.value = choice;
      option.textContent = choice;
      select.appendChild(option);
    }
    input = select;
  } else {
    const el = doc.createElement("input");
    el.type = {
      "input-text": "text",
      "input-barcode": "text",
      "input-number": "number",
      "input-checkbox": "checkbox",
      "input-datetime": "datetime-local",
    }[control.control];
    if (control.control === "input-barcode") {
      // barcode scanners type fast and finish with Enter; keep focus friendly
      el.autocomplete = "off";
      el.spellcheck = false;
      el.dataset.barcode = "true";
    }
    if (control.control === "input-datetime") {
      el.step = "1";
    }
    input = el;
  }
  input.id = `field-${control.name}`;
  input.name = control.name;
  wrap.appendChild(input);

  if (control.nowShortcut) {
    const now = doc.createElement("button");
    now.type = "button";
    now.className = "now-shortcut";
    now.textContent = "now";
    now.addEventListener("click", () => {
      (input as HTMLInputElement).value = localDatetimeValue(new Date());
      input.dispatchEvent(new Event("input", { bubbles: true }));
    });
    wrap.appendChild(now);
  }

  const error = doc.createElement("p");
  error.className = "field-error";
  error.dataset.errorFor = control.name;
  error.hidden = true;
  wrap.appendChild(error);
  return wrap;
}

/** datetime-local wants local wall-clock time without a zone suffix. */
function localDatetimeValue(date: Date): string {
  const pad = (n: number) => String(n).padStart(2, "0");
  return `${date.getFullYear()}-${pad(date.getMonth() + 1)}-${pad(date.getDate())}` +
    `T${pad(date.getHours())}:${pad(date.getMinutes())}:${pad(date.getSeconds())}`;
}

export function readValues(
  vm: FormViewModel,
  form: HTMLFormElement,
): Record<string, unknown> {
  const values: Record<string, unknown> = {};
  for (const control of vm.controls) {
    const el = form.elements.namedItem(control.name) as
      HTMLInputElement | HTMLSelectElement | null;
    if (el === null) continue;
    if (control.control === "input-checkbox") {
      values[control.name] = (el as HTMLInputElement).checked;
    } else if (control.control === "input-datetime") {
      // datetime-local values carry no zone; stamp the browser's offset on
      // so the agent's timezone-required rule is satisfied
      values[control.name] = el.value === "" ? "" : withLocalOffset(el.value);
    } else {
      values[control.name] = el.value;
    }
  }
  return values;
}

function withLocalOffset(local: string): string {
  const date = new Date(local);
  if (Number.isNaN(date.getTime())) return local; // let validation report it
  return date.toISOString();
}

export function isSubmittable(vm: FormViewModel, form: HTMLFormElement): boolean {
  if (vm.unsupported.length > 0) return false;
  const values = readValues(vm, form);
  for (const control of vm.controls) {
    const v = values[control.name];
    if (control.required && (v === undefined || v === "" || v === null)) {
      return false;
    }
  }
  return true;
}

/** Map validation errors onto their field controls; unknown fields and
 * template-level problems land in the form banner. */
export function showErrors(
  form: HTMLFormElement,
  errors: ValidationError[],
): void {
  clearErrors(form);
  const bannerLines: string[] = [];
  for (const error of errors) {
    const slot = form.querySelector<HTMLElement>(
      `[data-error-for="${error.field}"]`,
    );
    if (slot === null) {
      bannerLines.push(error.field === "" ? error.message
        : `${error.field}: ${error.message}`);
      continue;
    }
    slot.textContent = error.message;
    slot.hidden = false;
  }
  const banner = form.querySelector<HTMLElement>(".form-banner");
  if (banner !== null && bannerLines.length > 0) {
    banner.textContent = bannerLines.join("; ");
    banner.hidden = false;
  }
}

export function clearErrors(form: HTMLFormElement): void {
  for (const slot of form.querySelectorAll<HTMLElement>(".field-error")) {
    slot.textContent = "";
    slot.hidden = true;
  }
  const banner = form.querySelector<HTMLElement>(".form-banner");
  if (banner !== null) {
    banner.textContent = "";
    banner.hidden = true;
  }
}

/** Convenience used by main: advisory validation of current form state. */
export function validateForm(
  vm: FormViewModel,
  template: FormTemplate,
  form: HTMLFormElement,
): ValidationError[] {
  const values = readValues(vm, form);
  // blank optional fields are omitted rather than sent as empty strings
  for (const key of Object.keys(values)) {
    if (values[key] === "") delete values[key];
  }
  return validateSubmission(template, values).errors;
}
