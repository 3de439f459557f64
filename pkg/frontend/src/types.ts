/** Response shapes of the cxreport REST API, mirrored one-to-one. */

export interface CaseSummary {
  case_id: string;
  label: string | null;
  split: "train" | "test";
  has_oracle: boolean;
}

export interface CasesList {
  cases: CaseSummary[];
}

export interface CaseDetail extends CaseSummary {
  concepts: string[];
  concept_values: number[];
}

export interface ModelInfo {
  classes: string[];
  concepts: string[];
  weights: { shape: [number, number]; min: number; max: number; frobenius_norm: number };
  bias: number[];
  deterministic_mode: boolean;
}

export interface Edit {
  index: number;
  value: number;
}

export interface Prediction {
  case_id: string;
  predicted_class: string;
  classes: string[];
  concepts: string[];
  logits: number[];
  log_probs: number[];
  concept_values: number[];
  contributions: number[][];
  edits: Edit[];
}

export interface EvidenceItem {
  chunk_id: string;
  text: string;
}

export interface ReportSections {
  findings: string;
  concept_analysis: string;
  impression: string;
  evidence: EvidenceItem[];
}

export interface InfluenceEntry {
  concept_name: string;
  contribution: number;
  normalized_contribution: number;
  evidence_support: number;
  influence: number;
  supporting_chunk_ids: string[];
}

export interface TraceStep {
  agent: "retriever" | "radiologist" | "writer";
  kind: "thought" | "action" | "observation" | "output";
  payload: string;
}

export interface ReportResponse {
  case_id: string;
  predicted_class: string;
  text: string;
  sections: ReportSections;
  influence: { lambda: number; entries: InfluenceEntry[] };
  trace: TraceStep[];
  edits: Edit[];
}

export interface ClusteringMetrics {
  silhouette: number;
  davies_bouldin: number;
  calinski_harabasz: number;
  dunn: number;
}

export interface ClusteringResponse {
  metrics: ClusteringMetrics;
  n_points: number;
  labels: string[];
  projection: [number, number][] | null;
}

export interface StructuredError {
  error_code: string;
  stage: string | null;
  message: string;
}
