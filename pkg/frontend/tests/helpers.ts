import { readFileSync } from "node:fs";
import { resolve } from "node:path";
import { vi } from "vitest";

export function loadFixture<T = any>(name: string): T {
  // import.meta.url is rewritten under jsdom, so resolve from the package root
  const path = resolve(process.cwd(), "tests", "fixtures", `${name}.json`);
  return JSON.parse(readFileSync(path, "utf8")) as T;
}

export interface RouteResponse {
  status: number;
  body: unknown;
}

function isRouteResponse(value: unknown): value is RouteResponse {
  return typeof value === "object" && value !== null && "status" in value && "body" in value;
}

export interface FetchStub {
  calls: string[];
  routes: Map<string, unknown>;
  /** While true every request rejects as if the network were down. */
  failAll: boolean;
  set(path: string, value: unknown): void;
}

/**
 * Replaces global fetch with a lookup keyed on the exact request path
 * (query string included). Values are either a plain body served with
 * status 200 or a {status, body} pair; unknown paths get the API's own
 * 404 envelope shape.
 */
export function installFetch(routes: Record<string, unknown> = {}): FetchStub {
  const stub: FetchStub = {
    calls: [],
    routes: new Map(Object.entries(routes)),
    failAll: false,
    set(path, value) {
      this.routes.set(path, value);
    },
  };
  vi.stubGlobal("fetch", async (input: unknown) => {
    const path = String(input);
    stub.calls.push(path);
    if (stub.failAll) {
      throw new TypeError("fetch failed");
    }
    const hit = stub.routes.get(path);
    if (hit === undefined) {
      return fakeResponse(404, { schema_version: 1, detail: `no fixture for ${path}` });
    }
    if (isRouteResponse(hit)) {
      return fakeResponse(hit.status, hit.body);
    }
    return fakeResponse(200, hit);
  });
  return stub;
}

function fakeResponse(status: number, body: unknown) {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: async () => body,
  };
}

type Handler<E> = ((event: E) => void) | null;

/**
 * Hand-driven EventSource stand-in. Tests call open/emit/fail on an
 * instance to simulate the server side of the SSE connection.
 */
export class MockEventSource {
  static instances: MockEventSource[] = [];

  onopen: Handler<unknown> = null;
  onmessage: Handler<{ data: string }> = null;
  onerror: Handler<unknown> = null;
  closed = false;

  constructor(readonly url: string) {
    MockEventSource.instances.push(this);
  }

  close(): void {
    this.closed = true;
  }

  open(): void {
    this.onopen?.({});
  }

  emit(payload: unknown): void {
    this.onmessage?.({ data: JSON.stringify(payload) });
  }

  emitRaw(data: string): void {
    this.onmessage?.({ data });
  }

  fail(): void {
    this.onerror?.({});
  }

  static latest(): MockEventSource {
    const source = MockEventSource.instances[MockEventSource.instances.length - 1];
    if (!source) throw new Error("no EventSource was constructed");
    return source;
  }

  static reset(): void {
    MockEventSource.instances = [];
  }
}

export function installEventSource(): typeof MockEventSource {
  MockEventSource.reset();
  vi.stubGlobal("EventSource", MockEventSource);
  return MockEventSource;
}
