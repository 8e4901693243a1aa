import { escapeHtml } from "../format.js";
import type { PredictionsResponse } from "../types.js";

export interface ChartDatum {
  groupId: string;
  groupName: string;
  score: number;
  supersetMatch: boolean;
  href: string;
}

export function groupHref(groupId: string, groupName: string): string {
  return `#/groups/${encodeURIComponent(groupId)}?name=${encodeURIComponent(groupName)}`;
}

/** Bars sorted descending by score, whatever order the API used. */
export function chartData(predictions: PredictionsResponse): ChartDatum[] {
  return predictions.candidates
    .map((candidate) => ({
      groupId: candidate.group_id,
      groupName: candidate.group_name,
      score: candidate.score,
      supersetMatch: candidate.superset_match,
      href: groupHref(candidate.group_id, candidate.group_name),
    }))
    .sort((a, b) => b.score - a.score);
}

/** Linear width scale so the weakest bar stays visible. */
function barWidth(score: number, min: number, max: number): number {
  if (max === min) return 100;
  return 5 + 95 * ((score - min) / (max - min));
}

export interface ChartOptions {
  rejectionReason?: string | null;
}

export function renderPredictionChart(
  container: HTMLElement,
  predictions: PredictionsResponse,
  opts: ChartOptions = {},
): void {
  if (predictions.status === "rejected") {
    const reason = opts.rejectionReason
      ? escapeHtml(opts.rejectionReason)
      : "the observed techniques fit no catalogued group";
    container.innerHTML = `
      <p class="chart-empty">Hypothesis rejected — ${reason}.</p>
    `;
    return;
  }
  const data = chartData(predictions);
  if (data.length === 0) {
    container.innerHTML = `<p class="chart-empty">No candidate groups to chart.</p>`;
    return;
  }
  const min = Math.min(...data.map((d) => d.score));
  const max = Math.max(...data.map((d) => d.score));
  const rows = data
    .map((datum) => {
      const width = barWidth(datum.score, min, max).toFixed(1);
      const flag = datum.supersetMatch ? `<span class="superset-flag" title="profile covers every observed technique">&#9679;</span>` : "";
      return `
        <div class="chart-row" data-group-id="${escapeHtml(datum.groupId)}" data-score="${datum.score}">
          <a class="bar-label" href="${datum.href}">${escapeHtml(datum.groupName)} (${escapeHtml(datum.groupId)})</a>
          <div class="bar-track">
            <div class="bar" style="width: ${width}%"></div>
          </div>
          <span class="bar-score">${datum.score.toFixed(3)}${flag}</span>
        </div>
      `;
    })
    .join("");
  container.innerHTML = `<div class="prediction-chart">${rows}</div>`;
}
