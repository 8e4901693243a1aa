import { escapeHtml, formatTimestamp, severityClass } from "../format.js";
import type { AttackDetail } from "../types.js";

function techniquesHtml(detail: AttackDetail): string {
  if (detail.techniques.length === 0) {
    return `<p class="empty-state">No catalogued techniques for this detection.</p>`;
  }
  const items = detail.techniques
    .map((technique) => {
      const tactics = technique.tactics.map((t) => escapeHtml(t.name)).join(", ");
      return `
        <li class="technique">
          <span class="technique-id">${escapeHtml(technique.id)}</span>
          <strong class="technique-name">${escapeHtml(technique.name)}</strong>
          <span class="technique-tactics">${tactics}</span>
          <p class="technique-description">${escapeHtml(technique.description)}</p>
        </li>
      `;
    })
    .join("");
  return `<ul class="technique-list">${items}</ul>`;
}

function hypothesisHtml(detail: AttackDetail): string {
  const hypothesis = detail.hypothesis;
  if (!hypothesis) {
    return `<p class="hypothesis-pending">Hypothesis pending — correlation has not picked this detection up yet.</p>`;
  }
  const payload = hypothesis.payload;
  const future = payload.predicted_future
    .map(
      (pair) =>
        `<li><span class="technique-id">${escapeHtml(pair.technique_id)}</span></li>`,
    )
    .join("");
  const futureBlock = future
    ? `<p>Predicted future techniques:</p><ul class="future-list">${future}</ul>`
    : `<p>No further techniques predicted.</p>`;
  return `
    <div class="hypothesis-card" data-hypothesis-id="${escapeHtml(payload.id)}">
      <p>
        Hypothesis <code>${escapeHtml(payload.id)}</code>
        — status <span class="status status-${escapeHtml(payload.status)}">${escapeHtml(payload.status)}</span>
      </p>
      ${futureBlock}
      <a class="predictions-link" href="#/predictions/${encodeURIComponent(payload.id)}">
        View group attribution and predicted next moves
      </a>
    </div>
  `;
}

export function renderAttackDetail(container: HTMLElement, detail: AttackDetail): void {
  const payload = detail.event.payload;
  container.innerHTML = `
    <section class="attack-detail">
      <h2>${escapeHtml(payload.attack_type)}</h2>
      <dl class="attack-facts">
        <dt>Time</dt><dd class="fact-time">${escapeHtml(formatTimestamp(payload.timestamp))}</dd>
        <dt>Attacker</dt><dd class="fact-attacker">${escapeHtml(payload.attacker_ip)}</dd>
        <dt>Victim</dt><dd class="fact-victim">${escapeHtml(payload.victim_ip)}</dd>
        <dt>Rule</dt><dd class="fact-rule">${escapeHtml(payload.rule_id)}</dd>
        <dt>Severity</dt>
        <dd><span class="badge ${severityClass(payload.severity)}">${escapeHtml(payload.severity)}</span></dd>
      </dl>
      <h3>Mapped techniques</h3>
      ${techniquesHtml(detail)}
      <h3>Hunting hypothesis</h3>
      ${hypothesisHtml(detail)}
      <h3>Evidence</h3>
      <pre class="evidence">${escapeHtml(payload.evidence.join("\n"))}</pre>
    </section>
  `;
}

export function renderNotFound(container: HTMLElement, message: string): void {
  container.innerHTML = `
    <section class="not-found">
      <h2>Not found</h2>
      <p>${escapeHtml(message)}</p>
      <a href="#/attacks">Back to attack history</a>
    </section>
  `;
}
