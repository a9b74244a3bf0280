/**
 * Round-trip against the real service: a scripted toggle sequence must
 * render exactly what the last /intervene response said, and clearing
 * the overrides must restore the original distribution.
 *
 * Spawns the Python CLI to generate a small fixture dataset, train a
 * one-epoch model, and serve it; skips if the backend is unavailable.
 */

import { spawn, spawnSync } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { Store } from "../src/state.js";

const PORT = 8700 + Math.floor(Math.random() * 200);
const BASE = `http://127.0.0.1:${PORT}`;

function cli(args: string[]): boolean {
  const proc = spawnSync("python3", ["-m", "cbx.cli", ...args], {
    encoding: "utf-8",
    timeout: 120_000,
  });
  return proc.status === 0;
}

let server: ReturnType<typeof spawn> | null = null;
let available = false;

async function waitForServer(): Promise<boolean> {
  for (let i = 0; i < 100; i++) {
    try {
      const resp = await fetch(`${BASE}/samples`);
      if (resp.ok) return true;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  return false;
}

beforeAll(async () => {
  const probe = spawnSync("python3", ["-c", "import cbx"], { encoding: "utf-8" });
  if (probe.status !== 0) return;
  const root = mkdtempSync(join(tmpdir(), "cbx-ui-"));
  const data = join(root, "data");
  const model = join(root, "model.json");
  if (!cli(["gen", "--out", data, "--seed", "41", "--samples", "25"])) return;
  if (!cli(["train", "--data", data, "--regime", "independent",
            "--sigmoid", "true", "--epochs", "1", "--seed", "1",
            "--out", model])) return;
  server = spawn("python3", ["-m", "cbx.cli", "serve", "--model", model,
                             "--data", data, "--port", String(PORT)],
                 { stdio: "ignore" });
  available = await waitForServer();
}, 180_000);

afterAll(() => {
  server?.kill();
});

describe("against the live service", () => {
  it("scripted toggles render the last response; clearing restores", async (ctx) => {
    if (!available) return ctx.skip();
    const client = new ApiClient(BASE);
    const store = new Store(client);
    await store.loadSamples();
    expect(store.state.samples!.length).toBeGreaterThan(0);

    await store.selectSample(0);
    const original = store.state.prediction!.class_probs;
    expect(original.reduce((a, b) => a + b, 0)).toBeCloseTo(1.0, 9);

    // scripted sequence: three override changes in a row
    await store.setOverride(0, 1);
    await store.setOverride(5, 0);
    await store.setOverride(7, 1);

    // independent oracle: ask the service directly for the same overrides
    const expected = await client.intervene({
      sample_id: 0,
      overrides: { 0: 1, 5: 0, 7: 1 },
    });
    expect(store.displayedProbs()).toEqual(expected.new_probs);
    expect(store.displayedDelta()).toEqual(expected.delta);
    const pct = store.state.intervention!.new_contributions
      .reduce((acc, r) => acc + r.contribution_percent, 0);
    expect(Math.abs(pct - 100)).toBeLessThanOrEqual(1e-9);

    await store.clearOverrides();
    expect(store.displayedProbs()).toBe(original);
  }, 60_000);

  it("attribution peak matches the service's reduced grid", async (ctx) => {
    if (!available) return ctx.skip();
    const client = new ApiClient(BASE);
    const store = new Store(client);
    await store.selectSample(1);
    await store.setTarget({ kind: "concept", index: 2 });
    const grid = store.state.attribution!.reduced_grid;
    let best = { row: 0, col: 0 };
    for (let r = 0; r < grid.length; r++) {
      for (let c = 0; c < grid[r].length; c++) {
        if (grid[r][c] > grid[best.row][best.col]) best = { row: r, col: c };
      }
    }
    expect(store.state.attribution!.peak).toEqual(best);
  }, 60_000);
});
