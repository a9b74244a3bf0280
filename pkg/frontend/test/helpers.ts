/** Canned-response fetch double shared by the client and store tests. */

import type {
  ContributionEntry,
  InterveneResponse,
  PredictResponse,
  SampleSummary,
} from "../src/api.js";

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

type Handler = (call: RecordedCall) => { status?: number; body: unknown } | Promise<{ status?: number; body: unknown }>;

export function mockFetch(handler: Handler) {
  const calls: RecordedCall[] = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    const call: RecordedCall = {
      url,
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(init.body as string) : null,
    };
    calls.push(call);
    const { status = 200, body } = await handler(call);
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  };
  return { fetchFn, calls };
}

export function samplesFixture(n = 3): SampleSummary[] {
  // 1x1 white PPM: "P6\n1 1\n255\n" + three 0xff bytes
  const ppm = Buffer.concat([
    Buffer.from("P6\n1 1\n255\n", "ascii"),
    Buffer.from([255, 255, 255]),
  ]).toString("base64");
  return Array.from({ length: n }, (_, i) => ({
    id: i,
    class_label: i % 2,
    class_name: `class_${i % 2}`,
    thumbnail: ppm,
  }));
}

export function predictFixture(k = 4): PredictResponse {
  return {
    concepts: Array.from({ length: k }, (_, i) => ({
      id: i,
      name: `concept_${i}`,
      value: 0.1 + 0.2 * i,
      present: i % 2 === 0,
    })),
    class_probs: [0.7, 0.2, 0.1],
    predicted_class: 0,
  };
}

export function contributionsFixture(k: number): ContributionEntry[] {
  const raw = Array.from({ length: k }, (_, i) => k - i);
  const total = raw.reduce((a, b) => a + b, 0);
  return raw.map((v, i) => ({
    concept_id: i,
    concept_name: `concept_${i}`,
    concept_value: 1.0,
    relevancy: v / 10,
    contribution_percent: (100 * v) / total,
  }));
}

export function interveneFixture(shift: number): InterveneResponse {
  const newProbs = [0.7 - shift, 0.2 + shift, 0.1];
  return {
    old_probs: [0.7, 0.2, 0.1],
    new_probs: newProbs,
    delta: [-shift, shift, 0],
    new_contributions: contributionsFixture(4),
  };
}
