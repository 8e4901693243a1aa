import { escapeHtml } from "../format.js";

/**
 * Local group page: the chart links land here so the app works offline;
 * the outbound anchor reaches the public ATT&CK site when it's available.
 */
export function renderGroupPage(container: HTMLElement, groupId: string, groupName: string): void {
  const outbound = `https://attack.mitre.org/groups/${encodeURIComponent(groupId)}/`;
  container.innerHTML = `
    <section class="group-page">
      <h2>${escapeHtml(groupName || groupId)}</h2>
      <p>Adversary group <code>${escapeHtml(groupId)}</code> from the loaded knowledge bundle.</p>
      <p><a class="outbound" href="${outbound}" target="_blank" rel="noopener">Open ${escapeHtml(groupId)} on the public ATT&amp;CK site</a></p>
      <a href="#/attacks">Back to attack history</a>
    </section>
  `;
}
