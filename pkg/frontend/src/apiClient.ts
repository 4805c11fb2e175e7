/** Typed client for the guidance service. Every number the UI shows comes
 * from these payloads; nothing is recomputed client-side. */

import type {
  GuidanceResponse,
  JobResponse,
  PruneResponse,
  RetrainResponse,
  SaliencyResponse,
  SamplesResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;
  readonly field: string | null;

  constructor(status: number, message: string, field: string | null = null) {
    super(message);
    this.status = status;
    this.field = field;
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let message = `${response.status}`;
  let field: string | null = null;
  try {
    const body = await response.json();
    const detail = body.detail ?? body;
    if (typeof detail === "string") {
      message = detail;
    } else if (detail && typeof detail.message === "string") {
      message = detail.message;
      field = typeof detail.field === "string" ? detail.field : null;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, message, field);
}

export class GuidanceApi {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn: FetchLike = fetch) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`, init);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  getSamples(): Promise<SamplesResponse> {
    return this.request<SamplesResponse>("/samples");
  }

  submitGuidance(sampleId: string, maskPgmBase64: string, fill?: number): Promise<GuidanceResponse> {
    return this.request<GuidanceResponse>("/guidance", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        sample_id: sampleId,
        mask_pgm_base64: maskPgmBase64,
        ...(fill === undefined ? {} : { fill }),
      }),
    });
  }

  downloadMask(pairId: string): Promise<{ pair_id: string; mask_pgm_base64: string }> {
    return this.request(`/guidance/${encodeURIComponent(pairId)}/mask`);
  }

  prune(massFraction = 0.9): Promise<PruneResponse> {
    return this.request<PruneResponse>("/prune", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ mass_fraction: massFraction }),
    });
  }

  retrain(): Promise<RetrainResponse> {
    return this.request<RetrainResponse>("/retrain", { method: "POST" });
  }

  getJob(jobId: string): Promise<JobResponse> {
    return this.request<JobResponse>(`/jobs/${encodeURIComponent(jobId)}`);
  }

  getSaliency(sampleId: string): Promise<SaliencyResponse> {
    return this.request<SaliencyResponse>(`/saliency/${encodeURIComponent(sampleId)}`);
  }

  /** Poll a retrain job until it settles; `sleep` is injectable for tests. */
  async waitForJob(
    jobId: string,
    intervalMs = 500,
    sleep: (ms: number) => Promise<void> = (ms) => new Promise((r) => setTimeout(r, ms)),
    maxPolls = 10_000,
  ): Promise<JobResponse> {
    for (let i = 0; i < maxPolls; i++) {
      const job = await this.getJob(jobId);
      if (job.status === "done" || job.status === "error") return job;
      await sleep(intervalMs);
    }
    throw new ApiError(408, `job ${jobId} did not settle after ${maxPolls} polls`);
  }
}
