/** End-to-end against a live local server: scripted wizard walkthrough, a
 * three-iteration dataset-mode campaign driven through measurement entry,
 * and a CSV download byte-compared with the CLI export. */

import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { campaignConfigSchema } from "../src/config.js";
import { validateMeasurements } from "../src/measure.js";
import { paretoView } from "../src/charts.js";
import { WizardState } from "../src/wizard.js";

const PORT = 18311;
const BASE = `http://127.0.0.1:${PORT}`;
const TOKEN = "itest-admin";

const cliAvailable = spawnSync("matloop", ["--help"], { stdio: "ignore" }).status === 0;
const maybe = cliAvailable ? describe : describe.skip;

let server: ChildProcess | null = null;
let workdir = "";

async function waitForServer(): Promise<void> {
  const deadline = Date.now() + 30_000;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/v1/healthz`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error("server did not come up");
}

maybe("live-server integration", () => {
  beforeAll(async () => {
    workdir = mkdtempSync(join(tmpdir(), "console-itest-"));
    const tokensPath = join(workdir, "tokens.txt");
    writeFileSync(tokensPath, `${TOKEN},admin,lab\n`);
    server = spawn(
      "matloop",
      ["serve", "--host", "127.0.0.1", "--port", String(PORT),
        "--tokens", tokensPath, "--data", join(workdir, "data")],
      { stdio: "ignore" },
    );
    await waitForServer();
  }, 60_000);

  afterAll(() => {
    server?.kill();
  });

  it("drives a dataset campaign to completion and matches the CLI export", async () => {
    const client = new ApiClient(BASE, TOKEN);

    // seed a governed table over the API
    const template = {
      name: "slurry_trials",
      archetype: "research",
      fields: [
        { name: "x1", dtype: "real" },
        { name: "x2", dtype: "real" },
        { name: "strength", dtype: "real" },
        { name: "porosity", dtype: "real" },
      ],
    };
    const createResp = await fetch(`${BASE}/v1/tables`, {
      method: "POST",
      headers: { Authorization: `Bearer ${TOKEN}`, "Content-Type": "application/json" },
      body: JSON.stringify({ template }),
    });
    expect(createResp.status).toBe(201);

    const objective = (x1: number, x2: number) => [
      Math.sin(3 * x1) + x2,
      Math.cos(2 * x2) - x1,
    ];
    const records = [];
    for (let i = 0; i < 6; i++) {
      const x1 = (i + 0.5) / 6;
      const x2 = ((i * 2.3) % 6) / 6;
      const [a, b] = objective(x1, x2);
      records.push({ x1, x2, strength: a, porosity: b });
    }
    const ingest = await fetch(`${BASE}/v1/tables/slurry_trials/records`, {
      method: "POST",
      headers: { Authorization: `Bearer ${TOKEN}`, "Content-Type": "application/json" },
      body: JSON.stringify({ records }),
    });
    expect(ingest.status).toBe(201);

    // scripted walkthrough of all five wizard steps
    const wizard = new WizardState();
    wizard.selections.mode = "dataset";
    wizard.selections.tableId = "slurry_trials";
    wizard.tableMetadata = await client.tableMetadata("slurry_trials");
    expect(wizard.advance()).toBe(true);            // -> 2
    wizard.selections.iterations = 3;
    wizard.selections.initN = 4;
    wizard.selections.seed = 21;
    wizard.selections.acquisition = "EHVI";
    expect(wizard.advance()).toBe(true);            // -> 3
    wizard.selections.imputation = "drop_rows";
    expect(wizard.advance()).toBe(true);            // -> 4
    wizard.selections.xColumns = ["x1", "x2"];
    wizard.selections.yColumns = ["strength", "porosity"];
    wizard.selections.directions = ["maximize", "maximize"];
    wizard.selections.bounds = [[0, 1], [0, 1]];
    expect(wizard.advance()).toBe(true);            // -> 5
    expect(wizard.statusOf(5).valid).toBe(true);
    const config = wizard.toConfig();
    expect(campaignConfigSchema.safeParse(config).success).toBe(true);

    let view = await client.createCampaign(config);
    expect(view.phase).toBe("configured");
    expect(view.observations.X.length).toBe(6);

    // measure step: three full propose -> enter -> submit cycles
    for (let iter = 1; iter <= 3; iter++) {
      const { proposals } = await client.propose(view.id);
      expect(proposals.length).toBe(1);
      const p = proposals[0];
      const [a, b] = objective(p.x[0], p.x[1]);
      const batch = validateMeasurements(proposals, [{
        proposalId: p.id,
        values: [String(a), String(b)],
        fidelity: null,
        expire: false,
      }], 2);
      expect(batch.ok).toBe(true);
      view = await client.submitMeasurements(view.id, batch.payload);
      expect(view.iteration).toBe(iter);
    }
    expect(view.phase).toBe("converged");
    expect(view.observations.X.length).toBe(9);

    // the console view renders with the server-declared front
    const scatter = paretoView(view);
    expect(scatter.kind).toBe("scatter");
    if (scatter.kind === "scatter") {
      expect(scatter.frontCount).toBe(view.front_indices.length);
    }
    const diag = await client.diagnostics(view.id);
    expect(diag.hv.length).toBe(3);

    // downloaded CSV equals the CLI export byte for byte
    const downloaded = await client.exportCsv(view.id, "observations");
    const outDir = join(workdir, "cli-export");
    const snapshot = join(workdir, "data", "campaigns", `${view.id}.json`);
    const run = spawnSync("matloop", [
      "campaign", "export", "--snapshot", snapshot,
      "--out", outDir, "--which", "observations",
    ]);
    expect(run.status).toBe(0);
    const cliBytes = readFileSync(join(outDir, "observations.csv"), "utf-8");
    expect(downloaded).toBe(cliBytes);
  }, 120_000);

  it("surfaces server 4xx inline for stale proposals", async () => {
    const client = new ApiClient(BASE, TOKEN);
    const config = {
      mode: "benchmark" as const,
      benchmark: "branin_currin",
      iterations: 2, init_n: 4, init_method: "lhs" as const,
      acquisition: "EHVI" as const, q: 1, beta: 1, mc_samples: 256, seed: 4,
      budget: null, imputation: "drop_rows" as const, fidelity: null,
    };
    const view = await client.createCampaign(config);
    await expect(
      client.submitMeasurements(view.id, [
        { proposal_id: "does-not-exist", values: [1, 2] },
      ]),
    ).rejects.toMatchObject({ status: 400 });
  }, 60_000);
});
