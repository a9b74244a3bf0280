/**
 * DOM rendering. Pure functions from state to elements: the browser list,
 * the concept rows with tri-state override switches, the saliency canvas
 * with its peak marker, and the probability and contribution bars. All
 * displayed numbers are formatted response fields.
 */

import type { ContributionEntry, PredictResponse, SampleSummary } from "./api.js";
import type { AttributeResponse } from "./api.js";
import { rollUpContributions } from "./contributions.js";
import { decodePpm } from "./ppm.js";
import type { OverrideValue, ViewState } from "./state.js";

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function drawPpmToCanvas(canvas: HTMLCanvasElement, base64: string,
                                scale = 3): void {
  const img = decodePpm(base64);
  canvas.width = img.width;
  canvas.height = img.height;
  canvas.style.width = `${img.width * scale}px`;
  canvas.style.height = `${img.height * scale}px`;
  canvas.style.imageRendering = "pixelated";
  const ctx = canvas.getContext("2d");
  if (!ctx) return; // headless test environments have no raster context
  ctx.putImageData(new ImageData(img.rgba, img.width, img.height), 0, 0);
}

export function renderSampleBrowser(
  root: HTMLElement,
  samples: SampleSummary[] | null,
  selectedId: number | null,
  onSelect: (id: number) => void,
): void {
  root.replaceChildren();
  if (samples === null) {
    root.append(el("p", "loading", "loading samples..."));
    return;
  }
  if (samples.length === 0) {
    root.append(el("p", "empty-state", "no samples in the loaded dataset"));
    return;
  }
  const list = el("ul", "sample-list");
  for (const s of samples) {
    const item = el("li", s.id === selectedId ? "sample selected" : "sample");
    const canvas = document.createElement("canvas");
    canvas.className = "thumb";
    try {
      drawPpmToCanvas(canvas, s.thumbnail, 1);
    } catch {
      // thumbnail decode failure leaves an empty canvas
    }
    item.append(canvas, el("span", "label", `#${s.id} ${s.class_name}`));
    item.addEventListener("click", () => onSelect(s.id));
    list.append(item);
  }
  root.append(list);
}

export function renderConceptRows(
  root: HTMLElement,
  prediction: PredictResponse | null,
  overrides: Map<number, OverrideValue>,
  onOverride: (index: number, value: OverrideValue | null) => void,
): void {
  root.replaceChildren();
  if (prediction === null) {
    root.append(el("p", "empty-state", "select a sample to see its concepts"));
    return;
  }
  const table = el("table", "concept-table");
  for (const c of prediction.concepts) {
    const row = el("tr", "concept-row");
    row.append(el("td", "name", c.name));
    row.append(el("td", "value", c.value.toFixed(4)));
    row.append(el("td", c.present ? "presence present" : "presence absent",
                  c.present ? "present" : "absent"));
    const controls = el("td", "override");
    const current = overrides.get(c.id);
    for (const [label, value] of [["unset", null], ["0", 0], ["1", 1]] as const) {
      const btn = el("button",
                     (value === null && current === undefined) || current === value
                       ? "override-btn active" : "override-btn",
                     label) as HTMLButtonElement;
      btn.addEventListener("click", () => onOverride(c.id, value));
      controls.append(btn);
    }
    row.append(controls);
    table.append(row);
  }
  root.append(table);
}

export function renderSaliencyPanel(root: HTMLElement,
                                    attribution: AttributeResponse | null): void {
  root.replaceChildren();
  if (attribution === null) {
    root.append(el("p", "empty-state", "no attribution requested yet"));
    return;
  }
  const frame = el("div", "saliency-frame");
  const canvas = document.createElement("canvas");
  canvas.className = "saliency-map";
  drawPpmToCanvas(canvas, attribution.map_png_or_ppm);
  const marker = el("div", "peak-marker");
  marker.dataset.row = String(attribution.peak.row);
  marker.dataset.col = String(attribution.peak.col);
  marker.style.left = `${attribution.peak.col * 3}px`;
  marker.style.top = `${attribution.peak.row * 3}px`;
  frame.append(canvas, marker);
  root.append(frame);
  const segments = attribution.reduced_grid.length === 1
    ? attribution.reduced_grid[0].length : null;
  if (segments !== null) {
    root.append(el("p", "strip-note", `${segments} concept segments`));
  }
}

export function renderProbabilityPanel(
  root: HTMLElement,
  classNames: string[] | null,
  oldProbs: number[] | null,
  newProbs: number[] | null,
  delta: number[] | null,
): void {
  root.replaceChildren();
  if (newProbs === null) {
    root.append(el("p", "empty-state", "no prediction yet"));
    return;
  }
  const table = el("table", "prob-table");
  for (let i = 0; i < newProbs.length; i++) {
    const row = el("tr", "prob-row");
    row.append(el("td", "name", classNames?.[i] ?? `class ${i}`));
    if (oldProbs !== null && delta !== null) {
      row.append(el("td", "old", oldProbs[i].toFixed(4)));
    }
    const bar = el("td", "bar");
    const fill = el("div", "bar-fill");
    fill.style.width = `${Math.max(0, Math.min(1, newProbs[i])) * 100}%`;
    bar.append(fill, el("span", "new", newProbs[i].toFixed(4)));
    row.append(bar);
    if (delta !== null) {
      const d = delta[i];
      row.append(el("td", d >= 0 ? "delta up" : "delta down",
                    `${d >= 0 ? "+" : ""}${d.toFixed(4)}`));
    }
    table.append(row);
  }
  root.append(table);
}

export function renderContributionBars(root: HTMLElement,
                                       rows: ContributionEntry[] | null): void {
  root.replaceChildren();
  if (rows === null || rows.length === 0) {
    root.append(el("p", "empty-state", "no contribution data"));
    return;
  }
  const list = el("ul", "contrib-list");
  for (const bar of rollUpContributions(rows)) {
    const item = el("li", bar.isRollup ? "contrib rollup" : "contrib");
    const fill = el("div", "contrib-fill");
    fill.style.width = `${Math.max(0, Math.min(100, bar.percent))}%`;
    item.append(el("span", "label", bar.label), fill,
                el("span", "pct", `${bar.percent.toFixed(2)}%`));
    list.append(item);
  }
  root.append(list);
}

/** One full refresh from state; panels are independent subtrees. */
export function renderApp(
  roots: {
    browser: HTMLElement;
    concepts: HTMLElement;
    saliency: HTMLElement;
    probs: HTMLElement;
    contribs: HTMLElement;
  },
  state: ViewState,
  actions: {
    onSelect: (id: number) => void;
    onOverride: (index: number, value: OverrideValue | null) => void;
  },
  classNames: string[] | null,
): void {
  renderSampleBrowser(roots.browser, state.samples, state.selectedId, actions.onSelect);
  renderConceptRows(roots.concepts, state.prediction, state.overrides, actions.onOverride);
  renderSaliencyPanel(roots.saliency, state.attribution);
  const iv = state.intervention;
  renderProbabilityPanel(
    roots.probs, classNames,
    iv !== null ? iv.old_probs : null,
    iv !== null ? iv.new_probs : state.prediction?.class_probs ?? null,
    iv !== null ? iv.delta : null);
  renderContributionBars(roots.contribs, iv?.new_contributions ?? null);
}
