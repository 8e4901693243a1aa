// Rendering helpers. Data rows only ever display server-provided
// timestamps — nothing here reads the client clock.

export function formatTimestamp(epochSeconds: number): string {
  return new Date(epochSeconds * 1000).toLocaleString(undefined, {
    year: "numeric",
    month: "short",
    day: "2-digit",
    hour: "2-digit",
    minute: "2-digit",
    second: "2-digit",
  });
}

const SEVERITY_LEVELS = new Set(["low", "medium", "high", "critical"]);

export function severityClass(severity: string): string {
  const level = severity.toLowerCase();
  return SEVERITY_LEVELS.has(level) ? `severity-${level}` : "severity-unknown";
}

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}
