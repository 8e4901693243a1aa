import type {
  AttackDetail,
  DetectionPayload,
  EventPage,
  HealthResponse,
  HypothesisDetail,
  HypothesisPayload,
  PredictionsResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }

  get notFound(): boolean {
    return this.status === 404;
  }

  /** True when the API never answered (network down, server gone). */
  get unreachable(): boolean {
    return this.status === 0;
  }
}

export interface AttackQuery {
  limit?: number;
  offset?: number;
  attackerIp?: string;
  attackType?: string;
}

function query(params: Record<string, string | number | undefined>): string {
  const search = new URLSearchParams();
  for (const [key, value] of Object.entries(params)) {
    if (value !== undefined) search.set(key, String(value));
  }
  const text = search.toString();
  return text ? `?${text}` : "";
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  streamUrl(): string {
    return `${this.baseUrl}/api/stream`;
  }

  private async get<T>(path: string): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, {
        headers: { accept: "application/json" },
      });
    } catch {
      throw new ApiError("API unreachable", 0);
    }
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      const detail =
        body && typeof body.detail === "string"
          ? body.detail
          : `request failed with status ${response.status}`;
      throw new ApiError(detail, response.status);
    }
    return body as T;
  }

  health(): Promise<HealthResponse> {
    return this.get("/api/health");
  }

  attacks(q: AttackQuery = {}): Promise<EventPage<DetectionPayload>> {
    const qs = query({
      limit: q.limit,
      offset: q.offset,
      attacker_ip: q.attackerIp,
      attack_type: q.attackType,
    });
    return this.get(`/api/attacks${qs}`);
  }

  attackDetail(eventId: number): Promise<AttackDetail> {
    return this.get(`/api/attacks/${eventId}`);
  }

  hypotheses(q: { limit?: number; offset?: number; status?: string } = {}): Promise<
    EventPage<HypothesisPayload>
  > {
    const qs = query({ limit: q.limit, offset: q.offset, status: q.status });
    return this.get(`/api/hypotheses${qs}`);
  }

  hypothesisDetail(ref: string): Promise<HypothesisDetail> {
    return this.get(`/api/hypotheses/${encodeURIComponent(ref)}`);
  }

  predictions(ref: string): Promise<PredictionsResponse> {
    return this.get(`/api/predictions/${encodeURIComponent(ref)}`);
  }
}
