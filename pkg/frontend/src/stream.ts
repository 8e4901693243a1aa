import type { StoredEventDoc } from "./types.js";

export type StreamStatus = "connecting" | "open" | "reconnecting" | "closed";

export interface AlertStreamOptions {
  url: string;
  onEvent: (event: StoredEventDoc) => void;
  onStatus?: (status: StreamStatus) => void;
  /** First reconnect delay; doubles per failed attempt. */
  baseRetryMs?: number;
  maxRetryMs?: number;
}

/**
 * Server-sent-events client for /api/stream with exponential backoff.
 * The browser's own EventSource retry is disabled by closing the source
 * on error, so the indicator state always matches what the app shows.
 */
export class AlertStream {
  private source: EventSource | null = null;
  private retryMs: number;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(private readonly opts: AlertStreamOptions) {
    this.retryMs = opts.baseRetryMs ?? 1000;
  }

  connect(): void {
    if (this.stopped) return;
    this.setStatus(this.source === null ? "connecting" : "reconnecting");
    const source = new EventSource(this.opts.url);
    this.source = source;
    source.onopen = () => {
      this.retryMs = this.opts.baseRetryMs ?? 1000;
      this.setStatus("open");
    };
    source.onmessage = (message: MessageEvent) => {
      let parsed: StoredEventDoc;
      try {
        parsed = JSON.parse(message.data);
      } catch {
        return; // skip malformed frames rather than killing the stream
      }
      this.opts.onEvent(parsed);
    };
    source.onerror = () => {
      source.close();
      if (this.stopped) return;
      this.setStatus("reconnecting");
      this.scheduleReconnect();
    };
  }

  close(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.source?.close();
    this.setStatus("closed");
  }

  private scheduleReconnect(): void {
    this.timer = setTimeout(() => this.connect(), this.retryMs);
    this.retryMs = Math.min(this.retryMs * 2, this.opts.maxRetryMs ?? 15000);
  }

  private setStatus(status: StreamStatus): void {
    this.opts.onStatus?.(status);
  }
}
