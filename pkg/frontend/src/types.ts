// Gateway payload shapes. Every number shown in the UI comes verbatim from
// these payloads; the client never recomputes entropies, relevances, or
// digests.

export interface DecisionDistribution {
  p_fund: number;
  p_reject: number;
}

export interface ReviewItem {
  case_id: string;
  customer_id: string;
  distribution: DecisionDistribution;
  entropy: number;
  artifact_hash: string;
  status: "pending" | "decided";
  expert_decision: string | null;
  expert_id: string | null;
  decided_ms: number | null;
}

export interface ApplicationCase {
  case_id: string;
  customer_id: string;
  timestamp_ms: number;
  attributes: Record<string, string>;
  distribution: DecisionDistribution;
  entropy: number;
  route: "auto_decide" | "human_review";
  artifact_hash: string;
  status: "auto_decided" | "awaiting_review" | "reviewed";
  decision: string;
  expert_decision: string | null;
  expert_id: string | null;
  decided_ms: number | null;
}

export interface RelevanceMapView {
  method: string;
  params: Record<string, unknown>;
  target: string;
  feature_relevances: number[];
  attribute_relevances: number[];
  normalized_attribute_relevances: number[];
  high_importance: boolean[];
  stats: Record<string, number>;
}

export interface ExplanationArtifact {
  schema_version: number;
  customer_id: string;
  timestamp_ms: number;
  decision: { p_fund: number; p_reject: number; decision: string };
  entropy: number;
  route: string;
  attribute_names: string[];
  relevance_maps: RelevanceMapView[];
}

export interface ConsentStateView {
  expert_id: string;
  org_id: string;
  acquisition: string;
  withdrawal: string;
  access: string;
  updated_ms: number;
  legal_events: string[];
}

export interface TamperVerdict {
  tampered: boolean;
  reason: string;
  details: string;
}

export interface AuditReport {
  total_files: number;
  tampered_found: number;
  elapsed_seconds: number;
  audit_ops: number;
  verdicts: Array<{ id: string } & TamperVerdict>;
}

export interface RetrainRecord {
  iteration: number;
  annotated_added: number;
  labeled_size: number;
  mean_auc: number;
  fold_aucs: number[];
  config_hash: string;
}

export interface GatewayErrorBody {
  code: string;
  message: string;
}

export const CONSENT_EVENT_KINDS = [
  "GrantAcquisition",
  "RejectAcquisition",
  "RequestWithdrawal",
  "ProcessWithdrawal",
  "GrantAccess",
  "DenyAccess",
  "Invalidate",
] as const;

export type ConsentEventKind = (typeof CONSENT_EVENT_KINDS)[number];
