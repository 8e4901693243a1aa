import { escapeHtml, formatTimestamp, severityClass } from "../format.js";
import type { DetectionPayload, StoredEventDoc } from "../types.js";

export interface AttackRow {
  eventId: number;
  detectionId: string;
  timestamp: number;
  attackerIp: string;
  victimIp: string;
  attackType: string;
  severity: string;
}

/** One row per detection id, newest first (the API already sorts). */
export function attackRows(events: StoredEventDoc<DetectionPayload>[]): AttackRow[] {
  const rows: AttackRow[] = [];
  const seen = new Set<string>();
  for (const event of events) {
    if (seen.has(event.payload.id)) continue;
    seen.add(event.payload.id);
    rows.push({
      eventId: event.id,
      detectionId: event.payload.id,
      timestamp: event.payload.timestamp,
      attackerIp: event.payload.attacker_ip,
      victimIp: event.payload.victim_ip,
      attackType: event.payload.attack_type,
      severity: event.payload.severity,
    });
  }
  return rows;
}

export function pageCount(total: number, pageSize: number): number {
  return Math.max(1, Math.ceil(total / pageSize));
}

function rowHtml(row: AttackRow): string {
  return `
    <td class="cell-time">${escapeHtml(formatTimestamp(row.timestamp))}</td>
    <td class="cell-type">${escapeHtml(row.attackType)}</td>
    <td class="cell-attacker">${escapeHtml(row.attackerIp)}</td>
    <td class="cell-victim">${escapeHtml(row.victimIp)}</td>
    <td><span class="badge ${severityClass(row.severity)}">${escapeHtml(row.severity)}</span></td>
  `;
}

function buildRow(row: AttackRow, onRowClick?: (row: AttackRow) => void): HTMLTableRowElement {
  const tr = document.createElement("tr");
  tr.className = "attack-row";
  tr.dataset.eventId = String(row.eventId);
  tr.dataset.detectionId = row.detectionId;
  tr.innerHTML = rowHtml(row);
  if (onRowClick) tr.addEventListener("click", () => onRowClick(row));
  return tr;
}

export interface TableHandlers {
  onRowClick?: (row: AttackRow) => void;
}

export function renderAttackTable(
  container: HTMLElement,
  events: StoredEventDoc<DetectionPayload>[],
  handlers: TableHandlers = {},
): void {
  const rows = attackRows(events);
  if (rows.length === 0) {
    container.innerHTML = `<p class="empty-state">No attacks recorded yet.</p>`;
    return;
  }
  const table = document.createElement("table");
  table.className = "attack-table";
  table.innerHTML = `
    <thead>
      <tr><th>Time</th><th>Attack type</th><th>Attacker</th><th>Victim</th><th>Severity</th></tr>
    </thead>
  `;
  const tbody = document.createElement("tbody");
  for (const row of rows) tbody.appendChild(buildRow(row, handlers.onRowClick));
  table.appendChild(tbody);
  container.innerHTML = "";
  container.appendChild(table);
}

/**
 * Insert a freshly streamed detection at the top of an already rendered
 * table. Returns false when the table is absent or the row is a duplicate.
 */
export function prependAttackRow(
  container: HTMLElement,
  event: StoredEventDoc<DetectionPayload>,
  handlers: TableHandlers = {},
): boolean {
  const tbody = container.querySelector<HTMLTableSectionElement>(".attack-table tbody");
  if (!tbody) return false;
  const [row] = attackRows([event]);
  if (!row) return false;
  if (tbody.querySelector(`tr[data-detection-id="${row.detectionId}"]`)) return false;
  tbody.prepend(buildRow(row, handlers.onRowClick));
  return true;
}
