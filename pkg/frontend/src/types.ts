/** Payload shapes of the guidance service JSON API. */

export interface SampleInfo {
  id: string;
  class_label: number;
  domain_label: number;
  height: number;
  width: number;
  raster_ppm_base64: string;
}

export interface SamplesResponse {
  samples: SampleInfo[];
  embedding_dim: number;
  fill: number;
}

export interface GuidanceResponse {
  pair_id: string;
  num_pairs: number;
  obj_ppm_base64: string;
}

export interface PairSummary {
  pair_id: string;
  top_dimensions: number[];
  top_magnitudes: number[];
}

export interface PruneResponse {
  votes: number[];
  eliminated: number[];
  num_pairs: number;
  per_pair: PairSummary[];
}

export interface RetrainResponse {
  job_id: string;
}

export interface JobResponse {
  job_id: string;
  status: "queued" | "running" | "done" | "error";
  accuracy_before: number | null;
  accuracy_after: number | null;
  eliminated_count: number | null;
  error: string | null;
}

export interface SaliencyResponse {
  id: string;
  height: number;
  width: number;
  saliency_pgm_base64: string;
}

export interface ApiErrorDetail {
  field: string;
  message: string;
}
