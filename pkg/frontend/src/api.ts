/** Thin client for the agent's loopback API — the app's only egress. */

import type {
  FormTemplate,
  Protocol,
  SessionStatus,
  ValidationError,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly details: ValidationError[] = [],
  ) {
    super(message);
  }
}

export class LocalApi {
  constructor(private readonly base = "/local/v1") {}

  async listProtocols(): Promise<Protocol[]> {
    const body = await this.request("GET", "/protocols");
    return (body as { protocols: Protocol[] }).protocols;
  }

  async getTemplate(templateId: string, version?: number): Promise<FormTemplate> {
    const query = version === undefined ? "" : `?version=${version}`;
    return (await this.request(
      "GET", `/templates/${encodeURIComponent(templateId)}${query}`,
    )) as unknown as FormTemplate;
  }

  async startSession(protocolId: string): Promise<{ session_id: string }> {
    const body = await this.request("POST", "/sessions",
      { protocol_id: protocolId });
    return body as { session_id: string };
  }

  async submitRecord(
    sessionId: string,
    values: Record<string, unknown>,
  ): Promise<{ record_id: string; expected_file_id: string }> {
    return (await this.request(
      "POST", `/sessions/${encodeURIComponent(sessionId)}/records`, { values },
    )) as { record_id: string; expected_file_id: string };
  }

  async sessionStatus(sessionId: string): Promise<SessionStatus> {
    return (await this.request(
      "GET", `/sessions/${encodeURIComponent(sessionId)}/status`,
    )) as unknown as SessionStatus;
  }

  async syncNow(): Promise<{ attempted: number; acked: number; deferred: number }> {
    const body = await this.request("POST", "/sync");
    return body as { attempted: number; acked: number; deferred: number };
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<Record<string, unknown>> {
    const response = await fetch(this.base + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const parsed = (await response.json().catch(() => ({}))) as
      Record<string, unknown>;
    if (!response.ok) {
      throw new ApiError(
        response.status,
        String(parsed.code ?? "error"),
        String(parsed.message ?? response.statusText),
        (parsed.details as ValidationError[]) ?? [],
      );
    }
    return parsed;
  }
}
