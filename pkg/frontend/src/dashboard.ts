/** Session dashboard: a pure projection of GET /local/v1/sessions/{id}/status.
 *
 * No hidden client state: reloading the page and re-deriving from the same
 * status document reconstructs the identical dashboard.
 */

import type { SessionStatus } from "./types.js";

export type LinkageBadge = "linked" | "awaiting file" | "failed";

export interface DashboardRow {
  recordId: string;
  collectedAt: string;
  syncState: string;
  linkage: LinkageBadge;
  expectedFileId: string;
  fileCount: number;
  summary: string;
}

export interface Dashboard {
  connectivity: "online" | "offline" | "unknown";
  journalDepth: number;
  cacheVersion: number;
  unresolvedCount: number;
  rows: DashboardRow[];
}

const LINKAGE_BADGES: Record<string, LinkageBadge> = {
  linked: "linked",
  awaiting_file: "awaiting file",
  failed: "failed",
};

export function deriveDashboard(status: SessionStatus): Dashboard {
  const rows = status.records.map((record): DashboardRow => ({
    recordId: record.record_id,
    collectedAt: record.collected_at,
    syncState: record.sync_state,
    linkage: LINKAGE_BADGES[record.linkage_state] ?? "failed",
    expectedFileId: record.expected_file_id,
    fileCount: record.linkages.length,
    summary: Object.entries(record.values)
      .map(([k, v]) => `${k}=${v}`)
      .join(" "),
  }));
  const connectivity =
    status.connectivity === "online" || status.connectivity === "offline"
      ? status.connectivity
      : "unknown";
  return {
    connectivity,
    journalDepth: status.journal_depth,
    cacheVersion: status.cache_version,
    unresolvedCount: status.unresolved_linkages.length,
    rows,
  };
}

export function renderDashboard(
  dashboard: Dashboard,
  stale: boolean,
  doc: Document,
): HTMLElement {
  const root = doc.createElement("section");
  root.className = "dashboard";

  const badge = doc.createElement("span");
  badge.className = `badge badge-${dashboard.connectivity}`;
  badge.textContent = dashboard.connectivity;
  root.appendChild(badge);

  if (stale) {
    const staleTag = doc.createElement("span");
    staleTag.className = "badge badge-stale";
    staleTag.textContent = "stale";
    root.appendChild(staleTag);
  }

  const depth = doc.createElement("p");
  depth.className = "journal-depth";
  depth.textContent = `${dashboard.journalDepth} pending upload(s)` +
    (dashboard.unresolvedCount > 0
      ? `, ${dashboard.unresolvedCount} awaiting files`
      : "");
  root.appendChild(depth);

  const table = doc.createElement("table");
  table.className = "records";
  for (const row of dashboard.rows) {
    const tr = doc.createElement("tr");
    tr.dataset.recordId = row.recordId;
    tr.dataset.linkage = row.linkage;
    for (const text of [row.collectedAt, row.summary, row.syncState,
      row.linkage, String(row.fileCount)]) {
      const td = doc.createElement("td");
      td.textContent = text;
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  root.appendChild(table);
  return root;
}

/** Polls a status source on a fixed interval; a failed poll flips the stale
 * flag and polling continues. */
export class StatusPoller {
  stale = false;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(
    private readonly fetchStatus: () => Promise<SessionStatus>,
    private readonly onUpdate: (dashboard: Dashboard, stale: boolean) => void,
    private readonly intervalMs = 1000,
  ) {}

  start(): void {
    this.stopped = false;
    void this.tick();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
  }

  async tick(): Promise<void> {
    if (this.stopped) return;
    let dashboard: Dashboard | null = null;
    try {
      dashboard = deriveDashboard(await this.fetchStatus());
      this.stale = false;
    } catch {
      this.stale = true;
    }
    if (dashboard !== null || this.stale) {
      if (dashboard !== null) {
        this.lastGood = dashboard;
      }
      if (this.lastGood !== null) {
        this.onUpdate(this.lastGood, this.stale);
      }
    }
    if (!this.stopped) {
      this.timer = setTimeout(() => void this.tick(), this.intervalMs);
    }
  }

  private lastGood: Dashboard | null = null;
}
