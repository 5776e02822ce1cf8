import type {
  Aggregate,
  CandidateInfo,
  CommitResponse,
  DensityHistogram,
  EmbeddingResponse,
  ImpactReport,
  MetricsReport,
  ModelSummary,
  PrototypeDetail,
  PrototypeInfo,
  Trace,
  VideoSummary,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`API ${status}: ${detail}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client over the /v1 endpoints. */
export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike = fetch,
    private readonly base: string = '',
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === 'string') detail = body.detail;
      } catch {
        // non-JSON error body, keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  models(): Promise<ModelSummary[]> {
    return this.request('/v1/models');
  }

  metrics(modelId: string): Promise<MetricsReport> {
    return this.request(`/v1/models/${modelId}/metrics`);
  }

  prototypes(modelId: string): Promise<PrototypeInfo[]> {
    return this.request(`/v1/models/${modelId}/prototypes`);
  }

  prototypeDetail(protoId: string, modelId?: string): Promise<PrototypeDetail> {
    const q = modelId ? `?model=${modelId}` : '';
    return this.request(`/v1/prototypes/${protoId}/detail${q}`);
  }

  candidates(protoId: string, count: number): Promise<CandidateInfo[]> {
    return this.request(`/v1/prototypes/${protoId}/candidates?count=${count}`);
  }

  embedding(protoId: string, count: number, method = 'pca'): Promise<EmbeddingResponse> {
    return this.request(
      `/v1/embedding?method=${method}&proto_id=${protoId}&count=${count}`,
    );
  }

  landmarkDensity(modelId: string): Promise<DensityHistogram> {
    return this.request(`/v1/models/${modelId}/landmark_density`);
  }

  videos(): Promise<VideoSummary[]> {
    return this.request('/v1/videos');
  }

  trace(videoId: string): Promise<Trace> {
    return this.request(`/v1/videos/${videoId}/trace`);
  }

  aggregate(videoId: string, start: number, end: number): Promise<Aggregate> {
    return this.request(`/v1/videos/${videoId}/aggregate?start=${start}&end=${end}`);
  }

  refine(modelId: string, op: object, dryRun = true): Promise<ImpactReport> {
    return this.request(`/v1/models/${modelId}/refine`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ op, dry_run: dryRun }),
    });
  }

  commit(modelId: string, token: string): Promise<CommitResponse> {
    return this.request(`/v1/models/${modelId}/commit`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ token }),
    });
  }
}
