/** Page wiring: protocol picker -> live collection form -> session dashboard. */

import { ApiError, LocalApi } from "./api.js";
import { renderDashboard, StatusPoller } from "./dashboard.js";
import {
  buildFormViewModel,
  clearErrors,
  renderForm,
  showErrors,
  validateForm,
} from "./form.js";
import type { FormTemplate, Protocol } from "./types.js";

const api = new LocalApi();

async function init(): Promise<void> {
  const picker = document.getElementById("protocol-picker") as HTMLSelectElement;
  const startButton = document.getElementById("start-session") as HTMLButtonElement;
  const formHost = document.getElementById("form-host") as HTMLElement;
  const dashHost = document.getElementById("dashboard-host") as HTMLElement;
  const banner = document.getElementById("app-banner") as HTMLElement;

  let protocols: Protocol[] = [];
  try {
    protocols = await api.listProtocols();
  } catch {
    banner.textContent = "Agent unreachable — is lp-agent running?";
    banner.hidden = false;
    return;
  }
  for (const protocol of protocols) {
    const option = document.createElement("option");
    option.value = protocol.protocol_id;
    option.textContent =
      `${protocol.protocol_id} (${protocol.study_id} / ${protocol.site_id} / ` +
      `${protocol.instrument_id})`;
    picker.appendChild(option);
  }

  startButton.addEventListener("click", () => {
    void startSession(picker.value, protocols, formHost, dashHost, banner);
  });
}

async function startSession(
  protocolId: string,
  protocols: Protocol[],
  formHost: HTMLElement,
  dashHost: HTMLElement,
  banner: HTMLElement,
): Promise<void> {
  const protocol = protocols.find((p) => p.protocol_id === protocolId);
  if (protocol === undefined) return;

  let template: FormTemplate;
  let sessionId: string;
  try {
    template = await api.getTemplate(
      protocol.template.template_id, protocol.template.version);
    sessionId = (await api.startSession(protocolId)).session_id;
  } catch (err) {
    banner.textContent = err instanceof ApiError
      ? err.message
      : "Agent unreachable — retry when it is back.";
    banner.hidden = false;
    return;
  }
  banner.hidden = true;

  const vm = buildFormViewModel(template);
  const form = renderForm(vm, document, (values) => {
    void submit(values);
  });
  formHost.replaceChildren(form);

  async function submit(values: Record<string, unknown>): Promise<void> {
    // advisory pre-check for instant feedback; the agent has the last word
    const advisory = validateForm(vm, template, form);
    if (advisory.length > 0) {
      showErrors(form, advisory);
      return;
    }
    clearErrors(form);
    for (const key of Object.keys(values)) {
      if (values[key] === "") delete values[key];
    }
    try {
      await api.submitRecord(sessionId, values);
      form.reset();
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        showErrors(form, err.details); // inputs keep their values
      } else {
        // agent briefly down: keep everything typed, offer a retry
        showErrors(form, [{
          field: "",
          code: "agent_unreachable",
          message: "Could not reach the agent — your entries are kept; " +
            "press Submit to retry.",
        }]);
      }
    }
  }

  const poller = new StatusPoller(
    () => api.sessionStatus(sessionId),
    (dashboard, stale) => {
      dashHost.replaceChildren(renderDashboard(dashboard, stale, document));
    },
    1000,
  );
  poller.start();
}

document.addEventListener("DOMContentLoaded", () => void init());
