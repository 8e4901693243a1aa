import { beforeEach, describe, expect, it } from "vitest";

import type { DetectionPayload, EventPage, StoredEventDoc } from "../src/types.js";
import { attackRows, pageCount, prependAttackRow, renderAttackTable } from "../src/views/table.js";
import { loadFixture } from "./helpers.js";

const page = loadFixture<EventPage<DetectionPayload>>("attacks");

function container(): HTMLElement {
  const el = document.createElement("div");
  document.body.appendChild(el);
  return el;
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("attackRows", () => {
  it("keeps the API's newest-first order and maps the fields", () => {
    const rows = attackRows(page.events);
    expect(rows.map((r) => r.eventId)).toEqual([11, 9, 7, 5, 3, 1]);
    expect(rows[0].attackType).toBe("Unauthorized Write");
    expect(rows[0].attackerIp).toBe("198.51.100.66");
    expect(rows[0].victimIp).toBe("192.0.2.10");
    expect(rows[0].severity).toBe("high");
    expect(rows[5].attackType).toBe("Network Scan");
  });

  it("collapses duplicate detection ids onto one row", () => {
    const twice = [page.events[0], { ...page.events[0], id: 99 }];
    const rows = attackRows(twice);
    expect(rows).toHaveLength(1);
    expect(rows[0].eventId).toBe(11);
  });
});

describe("pageCount", () => {
  it("rounds up and never reports zero pages", () => {
    expect(pageCount(25, 10)).toBe(3);
    expect(pageCount(6, 10)).toBe(1);
    expect(pageCount(20, 10)).toBe(2);
    expect(pageCount(0, 10)).toBe(1);
  });
});

describe("renderAttackTable", () => {
  it("renders one row per detection with the key columns filled in", () => {
    const el = container();
    renderAttackTable(el, page.events);
    const rows = el.querySelectorAll("tbody tr");
    expect(rows).toHaveLength(6);
    const first = rows[0] as HTMLTableRowElement;
    expect(first.dataset.eventId).toBe("11");
    expect(first.querySelector(".cell-type")?.textContent).toBe("Unauthorized Write");
    expect(first.querySelector(".cell-attacker")?.textContent).toBe("198.51.100.66");
    expect(first.querySelector(".cell-victim")?.textContent).toBe("192.0.2.10");
    expect(first.querySelector(".badge")?.className).toContain("severity-high");
  });

  it("invokes the row click handler with the row model", () => {
    const el = container();
    const clicked: number[] = [];
    renderAttackTable(el, page.events, { onRowClick: (row) => clicked.push(row.eventId) });
    (el.querySelectorAll("tbody tr")[2] as HTMLElement).click();
    expect(clicked).toEqual([7]);
  });

  it("shows an empty state when the store has nothing", () => {
    const el = container();
    renderAttackTable(el, []);
    expect(el.querySelector("table")).toBeNull();
    expect(el.querySelector(".empty-state")?.textContent).toContain("No attacks recorded yet");
  });
});

describe("prependAttackRow", () => {
  function streamed(id: number, detectionId: string): StoredEventDoc<DetectionPayload> {
    return {
      ...page.events[0],
      id,
      payload: { ...page.events[0].payload, id: detectionId },
    };
  }

  it("puts the new detection at the top of the table", () => {
    const el = container();
    renderAttackTable(el, page.events);
    const added = prependAttackRow(el, streamed(13, "fresh-detection"));
    expect(added).toBe(true);
    const rows = el.querySelectorAll("tbody tr");
    expect(rows).toHaveLength(7);
    expect((rows[0] as HTMLTableRowElement).dataset.eventId).toBe("13");
  });

  it("refuses duplicates of a detection already shown", () => {
    const el = container();
    renderAttackTable(el, page.events);
    const added = prependAttackRow(el, page.events[0]);
    expect(added).toBe(false);
    expect(el.querySelectorAll("tbody tr")).toHaveLength(6);
  });

  it("does nothing when no table is on screen", () => {
    const el = container();
    expect(prependAttackRow(el, streamed(13, "fresh-detection"))).toBe(false);
  });
});
