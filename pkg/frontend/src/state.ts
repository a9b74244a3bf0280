/**
 * View state and actions. The store owns every server interaction:
 * selecting a sample issues exactly one /predict (cached per sample id),
 * attribution choices re-fetch /attribute, and any override change posts
 * /intervene. Each panel keeps at most one request in flight; when a newer
 * request starts, the older one is aborted and its response dropped, so
 * the view always shows the latest response. Rendered numbers are taken
 * verbatim from response objects, never recomputed.
 */

import {
  ApiClient,
  AttributeResponse,
  AttributeTarget,
  InterveneResponse,
  MethodName,
  PredictResponse,
  SampleSummary,
} from "./api.js";

/** Tri-state override: a concept is untouched, forced absent, or forced present. */
export type OverrideValue = 0 | 1;

export interface ViewState {
  samples: SampleSummary[] | null;
  selectedId: number | null;
  method: MethodName;
  target: AttributeTarget;
  overrides: Map<number, OverrideValue>;
  prediction: PredictResponse | null;
  attribution: AttributeResponse | null;
  intervention: InterveneResponse | null;
  error: string | null;
}

type Panel = "predict" | "attribute" | "intervene";
type Listener = (state: ViewState) => void;

export class Store {
  readonly state: ViewState = {
    samples: null,
    selectedId: null,
    method: "lrp",
    target: { kind: "concept", index: 0 },
    overrides: new Map(),
    prediction: null,
    attribution: null,
    intervention: null,
    error: null,
  };

  private listeners: Listener[] = [];
  private seq: Record<Panel, number> = { predict: 0, attribute: 0, intervene: 0 };
  private aborters: Partial<Record<Panel, AbortController>> = {};
  private predictCache = new Map<number, PredictResponse>();

  constructor(private readonly client: ApiClient) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const l of this.listeners) l(this.state);
  }

  /** Start a panel request; returns a token valid until the next start. */
  private begin(panel: Panel): { token: number; signal: AbortSignal | undefined } {
    this.seq[panel] += 1;
    this.aborters[panel]?.abort();
    const ctl = typeof AbortController !== "undefined" ? new AbortController() : undefined;
    this.aborters[panel] = ctl;
    return { token: this.seq[panel], signal: ctl?.signal };
  }

  private fresh(panel: Panel, token: number): boolean {
    return this.seq[panel] === token;
  }

  async loadSamples(): Promise<void> {
    try {
      this.state.samples = await this.client.samples();
      this.state.error = null;
    } catch (err) {
      this.state.error = String(err);
    }
    this.emit();
  }

  /** Selecting an already-selected sample with a loaded prediction is a no-op. */
  async selectSample(id: number): Promise<void> {
    if (id === this.state.selectedId && this.state.prediction !== null) {
      return;
    }
    this.state.selectedId = id;
    this.state.overrides = new Map();
    this.state.intervention = null;
    this.state.attribution = null;
    const cached = this.predictCache.get(id);
    if (cached !== undefined) {
      this.state.prediction = cached;
      this.state.error = null;
      this.emit();
      return;
    }
    this.state.prediction = null;
    const { token, signal } = this.begin("predict");
    this.emit();
    try {
      const resp = await this.client.predict(id, signal);
      if (!this.fresh("predict", token) || this.state.selectedId !== id) return;
      this.predictCache.set(id, resp);
      this.state.prediction = resp;
      this.state.error = null;
    } catch (err) {
      if (!this.fresh("predict", token)) return;
      this.state.error = String(err);
    }
    this.emit();
  }

  async setMethod(method: MethodName): Promise<void> {
    this.state.method = method;
    await this.fetchAttribution();
  }

  async setTarget(target: AttributeTarget): Promise<void> {
    this.state.target = target;
    await this.fetchAttribution();
  }

  async fetchAttribution(): Promise<void> {
    if (this.state.selectedId === null) return;
    const { token, signal } = this.begin("attribute");
    try {
      const resp = await this.client.attribute(
        {
          sample_id: this.state.selectedId,
          target: this.state.target,
          method: this.state.method,
          options: {},
        },
        signal,
      );
      if (!this.fresh("attribute", token)) return;
      this.state.attribution = resp;
      this.state.error = null;
    } catch (err) {
      if (!this.fresh("attribute", token)) return;
      this.state.error = String(err);
    }
    this.emit();
  }

  /** value null clears one override; an empty override set restores the
   * original prediction without a server round trip. */
  async setOverride(index: number, value: OverrideValue | null): Promise<void> {
    if (value === null) {
      this.state.overrides.delete(index);
    } else {
      this.state.overrides.set(index, value);
    }
    await this.pushInterventions();
  }

  async clearOverrides(): Promise<void> {
    this.state.overrides = new Map();
    await this.pushInterventions();
  }

  private async pushInterventions(): Promise<void> {
    if (this.state.selectedId === null) return;
    if (this.state.overrides.size === 0) {
      this.seq["intervene"] += 1; // invalidate any in-flight intervention
      this.aborters["intervene"]?.abort();
      this.state.intervention = null;
      this.emit();
      return;
    }
    const overrides: Record<number, number> = {};
    for (const [k, v] of this.state.overrides) overrides[k] = v;
    const { token, signal } = this.begin("intervene");
    try {
      const resp = await this.client.intervene(
        { sample_id: this.state.selectedId, overrides },
        signal,
      );
      if (!this.fresh("intervene", token)) return;
      this.state.intervention = resp;
      this.state.error = null;
    } catch (err) {
      if (!this.fresh("intervene", token)) return;
      this.state.error = String(err);
    }
    this.emit();
  }

  /** The class distribution the UI renders: the latest /intervene response
   * when overrides are active, otherwise the /predict response. */
  displayedProbs(): number[] | null {
    if (this.state.intervention !== null) return this.state.intervention.new_probs;
    return this.state.prediction?.class_probs ?? null;
  }

  displayedDelta(): number[] | null {
    return this.state.intervention?.delta ?? null;
  }
}
