/** Bootstrap: wire the store to the page and to the service. */

import { ApiClient, MethodName, TargetKind } from "./api.js";
import { renderApp } from "./render.js";
import { Store } from "./state.js";

function mount(): void {
  const byId = (id: string): HTMLElement => {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing #${id}`);
    return node;
  };
  const roots = {
    browser: byId("sample-browser"),
    concepts: byId("concept-panel"),
    saliency: byId("saliency-panel"),
    probs: byId("probability-panel"),
    contribs: byId("contribution-panel"),
  };
  const store = new Store(new ApiClient(""));

  const methodSelect = byId("method-select") as HTMLSelectElement;
  const targetKind = byId("target-kind") as HTMLSelectElement;
  const targetIndex = byId("target-index") as HTMLInputElement;
  const clearButton = byId("clear-overrides") as HTMLButtonElement;

  const refreshTarget = () => {
    void store.setTarget({
      kind: targetKind.value as TargetKind,
      index: parseInt(targetIndex.value, 10) || 0,
    });
  };
  methodSelect.addEventListener("change", () => {
    void store.setMethod(methodSelect.value as MethodName);
  });
  targetKind.addEventListener("change", refreshTarget);
  targetIndex.addEventListener("change", refreshTarget);
  clearButton.addEventListener("click", () => void store.clearOverrides());

  const classNames = (): string[] | null => {
    const samples = store.state.samples;
    if (!samples) return null;
    const names: string[] = [];
    for (const s of samples) names[s.class_label] = s.class_name;
    return names;
  };

  store.subscribe((state) => {
    renderApp(roots, state, {
      onSelect: (id) => {
        void store.selectSample(id).then(() => store.fetchAttribution());
      },
      onOverride: (index, value) => void store.setOverride(index, value),
    }, classNames());
  });
  void store.loadSamples();
}

mount();
