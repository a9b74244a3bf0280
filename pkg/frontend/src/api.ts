/**
 * Typed client for the explainability service. Every number the UI shows
 * comes out of one of these response objects; the client never reshapes
 * or recomputes model outputs.
 */

export interface SampleSummary {
  id: number;
  class_label: number;
  class_name: string;
  thumbnail: string; // base64 binary PPM
}

export interface ConceptEntry {
  id: number;
  name: string;
  value: number;
  present: boolean;
}

export interface PredictResponse {
  concepts: ConceptEntry[];
  class_probs: number[];
  predicted_class: number;
}

export type TargetKind = "concept" | "class";
export type MethodName = "lrp" | "grad" | "ig";

export interface AttributeTarget {
  kind: TargetKind;
  index: number;
}

export interface AttributeRequest {
  sample_id: number;
  target: AttributeTarget;
  method: MethodName;
  options: Record<string, unknown>;
}

export interface AttributeResponse {
  map_png_or_ppm: string; // base64 binary PPM
  reduced_grid: number[][];
  peak: { row: number; col: number };
}

export interface InterveneRequest {
  sample_id: number;
  overrides: Record<number, number>;
  target_class?: number;
}

export interface ContributionEntry {
  concept_id: number;
  concept_name: string;
  concept_value: number;
  relevancy: number;
  contribution_percent: number;
}

export interface InterveneResponse {
  old_probs: number[];
  new_probs: number[];
  delta: number[];
  new_contributions: ContributionEntry[];
}

export interface ContributionsResponse {
  target_class: number;
  all_zero: boolean;
  rows: ContributionEntry[];
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown, signal?: AbortSignal): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
  }

  samples(): Promise<SampleSummary[]> {
    return this.request<SampleSummary[]>("/samples");
  }

  predict(sampleId: number, signal?: AbortSignal): Promise<PredictResponse> {
    return this.post<PredictResponse>("/predict", { sample_id: sampleId }, signal);
  }

  attribute(req: AttributeRequest, signal?: AbortSignal): Promise<AttributeResponse> {
    return this.post<AttributeResponse>("/attribute", req, signal);
  }

  intervene(req: InterveneRequest, signal?: AbortSignal): Promise<InterveneResponse> {
    return this.post<InterveneResponse>("/intervene", req, signal);
  }

  contributions(sampleId: number, targetClass: number): Promise<ContributionsResponse> {
    return this.request<ContributionsResponse>(
      `/contributions?sample_id=${sampleId}&class=${targetClass}`,
    );
  }
}
