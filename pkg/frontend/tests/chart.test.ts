import { beforeEach, describe, expect, it } from "vitest";

import type { PredictionsResponse } from "../src/types.js";
import { chartData, renderPredictionChart } from "../src/views/chart.js";
import { loadFixture } from "./helpers.js";

const predictions = loadFixture<PredictionsResponse>("predictions");

function container(): HTMLElement {
  const el = document.createElement("div");
  document.body.appendChild(el);
  return el;
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("chartData", () => {
  it("sorts descending by score even though the API lists members first", () => {
    // the fixture leads with the superset-matching group, not the top score
    expect(predictions.candidates[0].group_id).toBe("G0034");
    const data = chartData(predictions);
    expect(data[0].groupId).toBe("G1000");
    expect(data[0].groupName).toBe("ALLANITE");
    for (let i = 1; i < data.length; i++) {
      expect(data[i].score).toBeLessThanOrEqual(data[i - 1].score);
    }
    expect(data).toHaveLength(8);
  });

  it("builds a local group route for every bar", () => {
    const data = chartData(predictions);
    for (const datum of data) {
      expect(datum.href).toContain(`#/groups/${datum.groupId}`);
    }
    const lazarus = data.find((d) => d.groupId === "G0032");
    expect(lazarus?.href).toBe("#/groups/G0032?name=Lazarus%20Group");
  });
});

describe("renderPredictionChart", () => {
  it("orders the bars by descending score with non-increasing widths", () => {
    const el = container();
    renderPredictionChart(el, predictions);
    const rows = [...el.querySelectorAll<HTMLElement>(".chart-row")];
    expect(rows).toHaveLength(8);

    const scores = rows.map((row) => Number(row.dataset.score));
    const sorted = [...scores].sort((a, b) => b - a);
    expect(scores).toEqual(sorted);

    const widths = rows.map((row) => {
      const bar = row.querySelector<HTMLElement>(".bar");
      return Number.parseFloat(bar?.style.width ?? "0");
    });
    for (let i = 1; i < widths.length; i++) {
      expect(widths[i]).toBeLessThanOrEqual(widths[i - 1]);
    }
    expect(widths[0]).toBe(100);
    expect(widths[widths.length - 1]).toBe(5);
  });

  it("labels each bar with the group and links to its detail route", () => {
    const el = container();
    renderPredictionChart(el, predictions);
    const top = el.querySelector<HTMLAnchorElement>(".chart-row a.bar-label");
    expect(top?.textContent).toContain("ALLANITE (G1000)");
    expect(top?.getAttribute("href")).toBe("#/groups/G1000?name=ALLANITE");
    const flagged = el.querySelector(".chart-row[data-group-id='G0034'] .superset-flag");
    expect(flagged).not.toBeNull();
    expect(el.querySelectorAll(".superset-flag")).toHaveLength(1);
  });

  it("copes with a single candidate", () => {
    const el = container();
    const single = { ...predictions, candidates: [predictions.candidates[0]] };
    renderPredictionChart(el, single);
    const rows = el.querySelectorAll(".chart-row");
    expect(rows).toHaveLength(1);
    const width = rows[0].querySelector<HTMLElement>(".bar")?.style.width ?? "0";
    expect(Number.parseFloat(width)).toBe(100);
  });

  it("shows an empty-chart message when there are no candidates", () => {
    const el = container();
    renderPredictionChart(el, { ...predictions, candidates: [] });
    expect(el.querySelector(".chart-row")).toBeNull();
    expect(el.querySelector(".chart-empty")?.textContent).toContain("No candidate groups");
  });

  it("explains a rejected hypothesis instead of charting it", () => {
    const el = container();
    const rejected = { ...predictions, status: "rejected" };
    renderPredictionChart(el, rejected, { rejectionReason: "no group covers T0999" });
    expect(el.querySelector(".chart-row")).toBeNull();
    expect(el.querySelector(".chart-empty")?.textContent).toContain("Hypothesis rejected");
    expect(el.querySelector(".chart-empty")?.textContent).toContain("no group covers T0999");
  });
});
