// Payload shapes as served by the hunt API. Every response carries
// schema_version; errors come back as { schema_version, detail }.

export type EventKind = "detection" | "hypothesis" | "model_run";

export interface DetectionPayload {
  id: string;
  timestamp: number;
  attacker_ip: string;
  victim_ip: string;
  attack_type: string;
  rule_id: string;
  technique_ids: string[];
  tactic_ids: string[];
  severity: string;
  evidence: string[];
}

export interface CandidateDoc {
  group_id: string;
  score: number;
  superset_match: boolean;
}

export interface HypothesisPayload {
  id: string;
  attacker_ip: string;
  victim_ip: string;
  detection_ids: string[];
  observed_techniques: string[];
  observed_tactics: string[];
  candidates: CandidateDoc[];
  predicted_future: { technique_id: string; tactic_id: string }[];
  status: string;
  narrative: string;
  rejection_reason: string | null;
  created_at: number;
  updated_at: number;
}

export interface StoredEventDoc<P = Record<string, unknown>> {
  id: number;
  kind: EventKind;
  payload: P;
  created_at: number;
}

export interface EventPage<P = Record<string, unknown>> {
  schema_version: number;
  total: number;
  count: number;
  events: StoredEventDoc<P>[];
}

export interface TacticRef {
  id: string;
  name: string;
}

export interface TechniqueDoc {
  id: string;
  name: string;
  description: string;
  tactics: TacticRef[];
}

export interface AttackDetail {
  schema_version: number;
  event: StoredEventDoc<DetectionPayload>;
  techniques: TechniqueDoc[];
  hypothesis: StoredEventDoc<HypothesisPayload> | null;
}

export interface HypothesisDetail {
  schema_version: number;
  event: StoredEventDoc<HypothesisPayload>;
}

export interface NamedCandidate {
  group_id: string;
  group_name: string;
  score: number;
  superset_match: boolean;
}

export interface PredictedTechnique {
  id: string;
  name: string;
  description?: string;
  tactics: TacticRef[];
  tactic_id: string;
  tactic_name: string;
}

export interface PredictionsResponse {
  schema_version: number;
  hypothesis_id: string;
  event_id: number;
  status: string;
  attacker_ip: string;
  victim_ip: string;
  candidates: NamedCandidate[];
  predicted: PredictedTechnique[];
}

export interface HealthResponse {
  schema_version: number;
  status: string;
  uptime_seconds: number;
  store: { path: string; events: number };
  rules: { source: string; count: number };
  knowledge: {
    domain: string;
    bundle_version: string;
    tactics: number;
    techniques: number;
    groups: number;
  };
  model: { granularity: string; classes: number; features: number };
  stream_subscribers: number;
}
