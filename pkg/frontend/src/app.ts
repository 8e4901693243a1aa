import { ApiClient, ApiError } from "./api.js";
import { escapeHtml } from "./format.js";
import { AlertStream, StreamStatus } from "./stream.js";
import { ToastHost } from "./toast.js";
import { DetectionPayload, StoredEventDoc } from "./types.js";
import { renderPredictionChart } from "./views/chart.js";
import { renderAttackDetail, renderNotFound } from "./views/detail.js";
import { renderGroupPage } from "./views/group.js";
import { pageCount, prependAttackRow, renderAttackTable, TableHandlers } from "./views/table.js";

export interface AppOptions {
  root: HTMLElement;
  api: ApiClient;
  pageSize?: number;
  toastTtlMs?: number;
  streamRetryMs?: number;
  streamMaxRetryMs?: number;
}

type ActiveView =
  | { name: "attacks"; page: number }
  | { name: "detail"; eventId: number }
  | { name: "predictions"; ref: string }
  | { name: "group" }
  | { name: "missing" }
  | { name: "error" }
  | { name: "none" };

const STATUS_LABELS: Record<StreamStatus, string> = {
  connecting: "connecting",
  open: "live",
  reconnecting: "reconnecting",
  closed: "offline",
};

function parseHash(hash: string): { path: string[]; params: URLSearchParams } {
  const raw = hash.startsWith("#") ? hash.slice(1) : hash;
  const splitAt = raw.indexOf("?");
  const pathPart = splitAt === -1 ? raw : raw.slice(0, splitAt);
  const queryPart = splitAt === -1 ? "" : raw.slice(splitAt + 1);
  const path = pathPart.split("/").filter((part) => part.length > 0);
  return { path, params: new URLSearchParams(queryPart) };
}

/** Hash-routed single page app over the hunt service API. */
export class App {
  /** Resolves when the most recently started route render has settled. */
  pending: Promise<void> = Promise.resolve();

  private readonly root: HTMLElement;
  private readonly api: ApiClient;
  private readonly pageSize: number;
  private readonly main: HTMLElement;
  private readonly statusEl: HTMLElement;
  private readonly toasts: ToastHost;
  private readonly stream: AlertStream;
  private view: ActiveView = { name: "none" };
  private lastHandled = "";

  private readonly tableHandlers: TableHandlers = {
    onRowClick: (row) => this.navigate(`#/attacks/${row.eventId}`),
  };

  private readonly onHashChange = (): void => {
    // navigate() already routed for hashes it set itself; only plain anchor
    // clicks and manual URL edits land here with something new.
    if (window.location.hash === this.lastHandled) return;
    this.pending = this.route();
  };

  constructor(opts: AppOptions) {
    this.root = opts.root;
    this.api = opts.api;
    this.pageSize = opts.pageSize ?? 10;
    this.root.innerHTML = `
      <header class="app-header">
        <h1><a href="#/attacks">icshunt</a></h1>
        <span class="stream-status stream-closed" data-status="closed">offline</span>
      </header>
      <div class="toast-host"></div>
      <main class="app-main"></main>
    `;
    this.main = this.root.querySelector("main") as HTMLElement;
    this.statusEl = this.root.querySelector(".stream-status") as HTMLElement;
    this.toasts = new ToastHost(this.root.querySelector(".toast-host") as HTMLElement, {
      ttlMs: opts.toastTtlMs,
    });
    this.stream = new AlertStream({
      url: this.api.streamUrl(),
      onEvent: (event) => this.handleStreamEvent(event),
      onStatus: (status) => this.handleStreamStatus(status),
      baseRetryMs: opts.streamRetryMs,
      maxRetryMs: opts.streamMaxRetryMs,
    });
  }

  start(): void {
    window.addEventListener("hashchange", this.onHashChange);
    this.stream.connect();
    if (window.location.hash) {
      this.lastHandled = window.location.hash;
      this.pending = this.route();
    } else {
      this.navigate("#/attacks");
    }
  }

  close(): void {
    window.removeEventListener("hashchange", this.onHashChange);
    this.stream.close();
  }

  navigate(hash: string): void {
    this.lastHandled = hash;
    if (window.location.hash !== hash) {
      window.location.hash = hash;
    }
    this.pending = this.route();
  }

  private async route(): Promise<void> {
    const hash = window.location.hash || "#/attacks";
    this.lastHandled = hash;
    const { path, params } = parseHash(hash);
    try {
      if (path.length === 0 || path[0] === "attacks") {
        if (path.length > 1) {
          await this.showAttackDetail(path[1]);
        } else {
          await this.showAttackList(Number(params.get("page") ?? "1"));
        }
      } else if (path[0] === "predictions" && path.length > 1) {
        await this.showPredictions(decodeURIComponent(path[1]));
      } else if (path[0] === "groups" && path.length > 1) {
        this.view = { name: "group" };
        renderGroupPage(this.main, decodeURIComponent(path[1]), params.get("name") ?? "");
      } else {
        this.view = { name: "missing" };
        renderNotFound(this.main, `No page matches ${hash}.`);
      }
    } catch (err) {
      this.showError(err);
    }
  }

  private async showAttackList(page: number): Promise<void> {
    const safePage = Number.isFinite(page) && page >= 1 ? Math.floor(page) : 1;
    const data = await this.api.attacks({
      limit: this.pageSize,
      offset: (safePage - 1) * this.pageSize,
    });
    this.view = { name: "attacks", page: safePage };
    renderAttackTable(this.main, data.events, this.tableHandlers);
    this.appendPager(safePage, pageCount(data.total, this.pageSize));
  }

  private appendPager(page: number, pages: number): void {
    if (pages <= 1) return;
    const nav = document.createElement("nav");
    nav.className = "pager";
    nav.innerHTML = `
      <button type="button" class="pager-prev" ${page <= 1 ? "disabled" : ""}>Previous</button>
      <span class="pager-label">Page ${page} of ${pages}</span>
      <button type="button" class="pager-next" ${page >= pages ? "disabled" : ""}>Next</button>
    `;
    nav.querySelector(".pager-prev")?.addEventListener("click", () => {
      this.navigate(`#/attacks?page=${page - 1}`);
    });
    nav.querySelector(".pager-next")?.addEventListener("click", () => {
      this.navigate(`#/attacks?page=${page + 1}`);
    });
    this.main.appendChild(nav);
  }

  private async showAttackDetail(rawId: string): Promise<void> {
    const eventId = Number(rawId);
    if (!Number.isInteger(eventId)) {
      this.view = { name: "missing" };
      renderNotFound(this.main, `"${rawId}" is not an attack id.`);
      return;
    }
    const detail = await this.api.attackDetail(eventId);
    this.view = { name: "detail", eventId };
    renderAttackDetail(this.main, detail);
  }

  private async showPredictions(ref: string): Promise<void> {
    const predictions = await this.api.predictions(ref);
    let rejectionReason: string | null = null;
    if (predictions.status === "rejected") {
      try {
        const hypothesis = await this.api.hypothesisDetail(ref);
        rejectionReason = hypothesis.event.payload.rejection_reason;
      } catch {
        // chart falls back to its stock rejection message
      }
    }
    this.view = { name: "predictions", ref };
    renderPredictionChart(this.main, predictions, { rejectionReason });
  }

  private showError(err: unknown): void {
    if (err instanceof ApiError && err.notFound) {
      this.view = { name: "missing" };
      renderNotFound(this.main, err.message);
      return;
    }
    const message = err instanceof Error ? err.message : String(err);
    this.view = { name: "error" };
    this.main.innerHTML = `
      <div class="error-banner" role="alert">
        <p>${escapeHtml(message)}</p>
        <button type="button" class="retry">Retry</button>
      </div>
    `;
    this.main.querySelector("button.retry")?.addEventListener("click", () => {
      this.pending = this.route();
    });
  }

  private handleStreamEvent(event: StoredEventDoc): void {
    if (event.kind !== "detection") return;
    const detection = event as unknown as StoredEventDoc<DetectionPayload>;
    const payload = detection.payload;
    this.toasts.show(`${payload.attack_type} from ${payload.attacker_ip}`, "alert");
    if (this.view.name === "attacks" && this.view.page === 1) {
      prependAttackRow(this.main, detection, this.tableHandlers);
    }
  }

  private handleStreamStatus(status: StreamStatus): void {
    this.statusEl.dataset.status = status;
    this.statusEl.className = `stream-status stream-${status}`;
    this.statusEl.textContent = STATUS_LABELS[status];
  }
}
