// Payload types for the /v1 API. These mirror the service schemas; the UI
// never derives scores itself, it only formats what the server sends.

export type ClassName = 'pristine' | 'manipulated';

export interface ModelSummary {
  id: string;
  parent_id: string | null;
  note: string;
  prototype_count: number;
  current: boolean;
  initial: boolean;
}

export interface Confusion {
  tp: number;
  fp: number;
  tn: number;
  fn: number;
}

export interface LossBreakdown {
  cross_entropy: number;
  cluster: number;
  separation: number;
  diversity: number;
  l1: number;
  total: number;
}

export interface MetricsReport {
  accuracy: number;
  auc: number;
  confusion: Confusion;
  roc: [number, number][];
  loss: LossBreakdown;
  n_samples: number;
  prototype_count: number;
}

export interface SourceCitation {
  sample_id: string;
  cell: [number, number];
  bbox: [number, number, number, number];
  frame_range: [number, number];
}

export interface PrototypeInfo {
  id: string;
  class_name: ClassName;
  weights: [number, number];
  weight_own: number;
  source: SourceCitation | null;
  strip_url: string;
}

export interface PrototypeDetail extends PrototypeInfo {
  prp_url: string;
  landmark: string;
}

export interface CandidateInfo {
  sample_id: string;
  label: ClassName;
  cell: [number, number];
  bbox: [number, number, number, number];
  frame_range: [number, number];
  distance: number;
}

export interface EmbeddingPoint {
  id: string;
  kind: 'prototype' | 'candidate';
  class_name: ClassName;
  x: number;
  y: number;
}

export interface EmbeddingResponse {
  method: string;
  points: EmbeddingPoint[];
}

export interface RadarSeries {
  axes: string[];
  initial: number[];
  current: number[];
  candidate: number[];
  deltas: Record<string, number>;
  absolute_axes: string[];
}

export type DensityHistogram = Record<string, Record<ClassName, number>>;

export interface RefineOp {
  kind: 'delete' | 'replace' | 'add';
  delete_ids: string[];
  proto_id: string | null;
  candidate: CandidateInfo | null;
}

export interface ImpactReport {
  op: RefineOp;
  candidate_model_id: string;
  before: MetricsReport;
  after: MetricsReport;
  radar: RadarSeries;
  density_before: DensityHistogram;
  density_after: DensityHistogram;
  elapsed_ms: number;
  token: string;
}

export interface CommitResponse {
  model_id: string;
}

export interface VideoSummary {
  id: string;
  title: string;
  fps: number;
  frame_count: number;
  window_count: number;
  label: ClassName;
}

export interface TraceWindow {
  t: number;
  frame_span: [number, number];
  maxsims: number[];
  contributions: number[][]; // (P, 2) per-prototype class contributions
  logits: [number, number];
  probs: [number, number];
}

export interface Trace {
  video_id: string;
  model_version: string;
  proto_ids: string[];
  windows: TraceWindow[];
}

export interface Aggregate {
  frame_range: [number, number];
  windows: number[];
  mean_probs: [number, number];
  mean_contributions: [number, number][];
  top_windows: number[];
}

// Color scheme from the source interface: pristine blue, manipulated red.
export const CLASS_COLORS: Record<ClassName, string> = {
  pristine: '#2563eb',
  manipulated: '#dc2626',
};
