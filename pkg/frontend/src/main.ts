/** Browser shell: connection form, wizard, measurement entry, live dashboard.
 *
 * All state changes flow through the REST API; the page re-renders from the
 * latest server view on a 2 s poll. At most one mutation is in flight per
 * campaign.
 */

import { ApiClient, ApiError, CampaignView, ProposalView } from "./api.js";
import { paretoView } from "./charts.js";
import { buildDashboard } from "./dashboard.js";
import { MeasurementDraft, validateMeasurements } from "./measure.js";
import { WizardState } from "./wizard.js";

const POLL_MS = 2000;

interface AppState {
  client: ApiClient | null;
  wizard: WizardState;
  campaignId: string | null;
  view: CampaignView | null;
  drafts: Map<string, MeasurementDraft>;
  inlineErrors: Map<string, string>;
  mutationInFlight: boolean;
  toggles: { logHv: boolean; logAcq: boolean; logGd: boolean; logX: boolean; logY: boolean };
  notice: string;
}

const state: AppState = {
  client: null,
  wizard: new WizardState(),
  campaignId: null,
  view: null,
  drafts: new Map(),
  inlineErrors: new Map(),
  mutationInFlight: false,
  toggles: { logHv: false, logAcq: true, logGd: true, logX: false, logY: false },
  notice: "",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (k === "class") node.className = v;
    else node.setAttribute(k, v);
  }
  node.append(...children);
  return node;
}

function root(): HTMLElement {
  return document.getElementById("app") as HTMLElement;
}

// -- connection ---------------------------------------------------------------

function renderConnect() {
  const url = el("input", { value: "http://127.0.0.1:8080", size: "36" });
  const token = el("input", { placeholder: "API token", size: "24" });
  const status = el("span", { class: "status" });
  const button = el("button", {}, "Connect");
  button.onclick = async () => {
    const client = new ApiClient(url.value, token.value);
    try {
      await client.health();
      state.client = client;
      render();
    } catch {
      status.textContent = "server unreachable";
    }
  };
  root().replaceChildren(
    el("h1", {}, "Campaign console"),
    el("div", { class: "connect" },
      el("label", {}, "Server "), url,
      el("label", {}, " Token "), token,
      button, status),
  );
}

// -- wizard ---------------------------------------------------------------------

async function loadWizardSources() {
  const client = state.client!;
  const [tables, benchmarks] = await Promise.all([
    client.listTables(),
    client.listBenchmarks(),
  ]);
  state.wizard.benchmarks = benchmarks.benchmarks;
  return tables.tables;
}

function wizardField(label: string, input: HTMLElement): HTMLElement {
  return el("div", { class: "field" }, el("label", {}, label), input);
}

function numberInput(value: number, onchange: (v: number) => void): HTMLInputElement {
  const input = el("input", { type: "number", value: String(value) });
  input.onchange = () => onchange(Number(input.value));
  return input;
}

async function renderWizard() {
  const w = state.wizard;
  const tables = await loadWizardSources();
  const container = el("div", { class: "wizard" });

  const heading = el("h2", {}, `Step ${w.step} of 5`);
  const body = el("div", { class: "step-body" });
  const problems = el("ul", { class: "problems" });

  const refresh = () => {
    const status = w.statusOf(w.step);
    problems.replaceChildren(
      ...status.problems.map((p) => el("li", {}, p)),
    );
  };

  const s = w.selections;
  if (w.step === 1) {
    const mode = el("select", {});
    mode.append(el("option", { value: "" }, "choose mode"),
      el("option", { value: "benchmark" }, "benchmark function"),
      el("option", { value: "dataset" }, "dataset table"));
    mode.value = s.mode ?? "";
    const target = el("select", {});
    const fillTarget = () => {
      target.replaceChildren();
      if (s.mode === "benchmark") {
        target.append(...w.benchmarks.map((b) =>
          el("option", { value: b.name }, `${b.name} (${b.kind}, d=${b.dim})`)));
        if (s.benchmark) target.value = s.benchmark;
      } else {
        target.append(...tables.map((t) => el("option", { value: t }, t)));
        if (s.tableId) target.value = s.tableId;
      }
    };
    mode.onchange = () => {
      s.mode = (mode.value || null) as typeof s.mode;
      fillTarget();
      refresh();
    };
    target.onchange = async () => {
      if (s.mode === "benchmark") s.benchmark = target.value;
      else {
        s.tableId = target.value;
        w.tableMetadata = await state.client!.tableMetadata(target.value);
      }
      refresh();
    };
    fillTarget();
    body.append(wizardField("Mode", mode), wizardField("Function or table", target));
  } else if (w.step === 2) {
    body.append(
      wizardField("Iterations", numberInput(s.iterations, (v) => { s.iterations = v; refresh(); })),
      wizardField("Initial samples", numberInput(s.initN, (v) => { s.initN = v; refresh(); })),
      wizardField("Batch size q", numberInput(s.q, (v) => { s.q = v; refresh(); })),
      wizardField("Exploration beta", numberInput(s.beta, (v) => { s.beta = v; refresh(); })),
      wizardField("MC samples", numberInput(s.mcSamples, (v) => { s.mcSamples = v; refresh(); })),
      wizardField("Seed", numberInput(s.seed, (v) => { s.seed = v; refresh(); })),
    );
    const acq = el("select", {});
    acq.append(el("option", { value: "" }, "auto"),
      ...["EI", "PI", "LCB", "EHVI", "qEHVI"].map((k) => el("option", { value: k }, k)));
    acq.value = s.acquisition ?? "";
    acq.onchange = () => { s.acquisition = (acq.value || null) as typeof s.acquisition; refresh(); };
    body.append(wizardField("Acquisition", acq));

    const budget = el("input", { type: "number", value: s.budget === null ? "" : String(s.budget) });
    budget.onchange = () => { s.budget = budget.value === "" ? null : Number(budget.value); refresh(); };
    body.append(wizardField("Budget (blank = none)", budget));

    const fidelity = el("select", {});
    fidelity.append(el("option", { value: "none" }, "single fidelity"),
      el("option", { value: "discrete" }, "discrete levels 0.5 / 1.0"),
      el("option", { value: "continuous" }, "continuous cost curve"));
    fidelity.value = s.fidelity === null ? "none" : s.fidelity.mode;
    fidelity.onchange = () => {
      if (fidelity.value === "none") s.fidelity = null;
      else if (fidelity.value === "discrete")
        s.fidelity = { mode: "discrete", levels: [0.5, 1.0], ratios: [1.0, 5.0] };
      else s.fidelity = { mode: "continuous", c0: 0.2, exponent: 2.0 };
      refresh();
    };
    body.append(wizardField("Fidelity mode", fidelity));
  } else if (w.step === 3) {
    if (s.mode === "dataset" && w.tableMetadata) {
      const meta = w.tableMetadata;
      const rows = meta.columns.map((c) =>
        el("tr", {},
          el("td", {}, c), el("td", {}, meta.dtypes[c]),
          el("td", {}, meta.units[c] ?? "-"),
          el("td", {}, String(meta.missing_counts[c]))));
      body.append(
        el("p", {}, `table ${meta.table}: ${meta.row_count} rows`),
        el("table", { class: "meta" },
          el("tr", {}, el("th", {}, "column"), el("th", {}, "dtype"),
            el("th", {}, "unit"), el("th", {}, "missing")),
          ...rows),
      );
      const imputation = el("select", {});
      imputation.append(...["drop_rows", "mean", "median", "constant"].map(
        (k) => el("option", { value: k }, k)));
      imputation.value = s.imputation;
      imputation.onchange = () => { s.imputation = imputation.value as typeof s.imputation; refresh(); };
      body.append(wizardField("Missing-value strategy", imputation));
    } else {
      body.append(el("p", {}, "Benchmark mode: no table to review."));
    }
  } else if (w.step === 4) {
    if (s.mode === "dataset" && w.tableMetadata) {
      const realCols = w.tableMetadata.columns.filter(
        (c) => w.tableMetadata!.dtypes[c] === "real");
      const makePicker = (selected: string[], onTick: (col: string, on: boolean) => void) =>
        el("div", { class: "cols" }, ...realCols.map((c) => {
          const box = el("input", { type: "checkbox" });
          box.checked = selected.includes(c);
          box.onchange = () => { onTick(c, box.checked); refresh(); };
          return el("label", { class: "col" }, box, c);
        }));
      body.append(
        el("h3", {}, "Input columns (X)"),
        makePicker(s.xColumns, (c, on) => {
          s.xColumns = on ? [...s.xColumns, c] : s.xColumns.filter((v) => v !== c);
          s.bounds = s.xColumns.map((_, i) => s.bounds[i] ?? [0, 1]);
        }),
        el("h3", {}, "Objective columns (Y)"),
        makePicker(s.yColumns, (c, on) => {
          s.yColumns = on ? [...s.yColumns, c] : s.yColumns.filter((v) => v !== c);
          s.directions = s.yColumns.map((_, i) => s.directions[i] ?? "maximize");
        }),
      );
      const boundsBox = el("div", {});
      s.xColumns.forEach((c, i) => {
        const lo = numberInput(s.bounds[i]?.[0] ?? 0, (v) => { s.bounds[i] = [v, s.bounds[i][1]]; refresh(); });
        const hi = numberInput(s.bounds[i]?.[1] ?? 1, (v) => { s.bounds[i] = [s.bounds[i][0], v]; refresh(); });
        boundsBox.append(el("div", { class: "field" }, el("label", {}, `${c} bounds`), lo, hi));
      });
      body.append(el("h3", {}, "Bounds"), boundsBox);
      const dirBox = el("div", {});
      s.yColumns.forEach((c, i) => {
        const sel = el("select", {});
        sel.append(el("option", { value: "maximize" }, "maximize"),
          el("option", { value: "minimize" }, "minimize"));
        sel.value = s.directions[i] ?? "maximize";
        sel.onchange = () => { s.directions[i] = sel.value as "maximize" | "minimize"; refresh(); };
        dirBox.append(el("div", { class: "field" }, el("label", {}, `${c} direction`), sel));
      });
      body.append(el("h3", {}, "Directions"), dirBox);
    } else {
      body.append(el("p", {}, "Benchmark mode: columns come from the registry."));
    }
  } else {
    const cfg = w.toConfig();
    body.append(el("pre", {}, JSON.stringify(cfg, null, 2)));
    const launch = el("button", {}, "Launch campaign");
    launch.onclick = async () => {
      try {
        const view = await state.client!.createCampaign(w.toConfig());
        state.campaignId = view.id;
        state.view = view;
        render();
        pollLoop();
      } catch (err) {
        state.notice = err instanceof ApiError ? err.message : String(err);
        render();
      }
    };
    body.append(launch);
  }

  const nav = el("div", { class: "nav" });
  const backBtn = el("button", {}, "Back");
  backBtn.onclick = () => { w.back(); render(); };
  const nextBtn = el("button", {}, "Next");
  nextBtn.onclick = () => { if (w.advance()) render(); else refresh(); };
  nav.append(backBtn, nextBtn);

  refresh();
  container.append(heading, body, problems, nav);
  root().replaceChildren(el("h1", {}, "New campaign"), container,
    el("p", { class: "notice" }, state.notice));
}

// -- campaign view -----------------------------------------------------------------

function proposalRow(p: ProposalView, objectives: string[]): HTMLElement {
  const draft = state.drafts.get(p.id) ?? {
    proposalId: p.id,
    values: objectives.map(() => ""),
    fidelity: p.fidelity,
    expire: false,
  };
  state.drafts.set(p.id, draft);
  const inputs = objectives.map((name, k) => {
    const input = el("input", { size: "10", placeholder: name, value: draft.values[k] ?? "" });
    input.oninput = () => { draft.values[k] = input.value; };
    return input;
  });
  const error = el("span", { class: "inline-error" },
    state.inlineErrors.get(p.id) ?? "");
  const row = el("div", { class: "proposal" },
    el("code", {}, p.id.slice(0, 8)),
    el("span", {}, ` x = (${p.x.join(", ")})`),
    el("span", {}, p.fidelity === null ? "" : ` fidelity ${p.fidelity}`),
    el("span", {}, ` acq ${p.acq_value}`),
    ...inputs);
  const submit = el("button", {}, "Submit");
  submit.onclick = () => submitMeasurement(p.id);
  const expire = el("button", {}, "Expire");
  expire.onclick = () => submitExpire(p.id);
  row.append(submit, expire, error);
  return row;
}

async function submitMeasurement(proposalId: string) {
  const view = state.view!;
  const draft = state.drafts.get(proposalId)!;
  const batch = validateMeasurements(view.pending, [draft],
    view.objective_names.length);
  if (!batch.ok) {
    state.inlineErrors.set(proposalId, batch.errors[0].message);
    render();
    return;   // no request leaves the client on invalid input
  }
  await runMutation(proposalId, () =>
    state.client!.submitMeasurements(view.id, batch.payload));
}

async function submitExpire(proposalId: string) {
  const view = state.view!;
  await runMutation(proposalId, () =>
    state.client!.submitMeasurements(view.id, [
      { proposal_id: proposalId, expire: true },
    ]));
}

async function runMutation(proposalId: string, call: () => Promise<CampaignView>) {
  if (state.mutationInFlight) return;
  state.mutationInFlight = true;
  try {
    state.view = await call();
    state.inlineErrors.delete(proposalId);
    state.drafts.delete(proposalId);
  } catch (err) {
    if (err instanceof ApiError) {
      state.inlineErrors.set(proposalId, `${err.status}: ${err.body.message}`);
      if (err.status === 404 || err.body.code === "unknown-proposal") {
        state.view = await state.client!.getCampaign(state.campaignId!);
      }
    } else {
      state.inlineErrors.set(proposalId, String(err));
    }
  } finally {
    state.mutationInFlight = false;
    render();
  }
}

function downloadButton(which: string): HTMLElement {
  const btn = el("button", {}, `Download ${which}.csv`);
  btn.onclick = async () => {
    const text = await state.client!.exportCsv(state.campaignId!, which);
    const blob = new Blob([text], { type: "text/csv" });
    const a = el("a", { href: URL.createObjectURL(blob), download: `${which}.csv` });
    a.click();
    URL.revokeObjectURL(a.href);
  };
  return btn;
}

function toggleButton(label: string, key: keyof AppState["toggles"]): HTMLElement {
  const btn = el("button", { class: state.toggles[key] ? "on" : "" },
    `${label}: ${state.toggles[key] ? "log" : "linear"}`);
  btn.onclick = () => {
    state.toggles[key] = !state.toggles[key];
    render();
  };
  return btn;
}

function renderCampaign() {
  const view = state.view!;
  const container = el("div", { class: "campaign" });
  container.append(
    el("h2", {}, `Campaign ${view.id}`),
    el("p", {}, `phase ${view.phase}, iteration ${view.iteration}, ` +
      `evaluations ${view.observations.X.length}, cost ${view.cum_cost}`),
  );

  // objective-space view
  const scatter = paretoView(view, { logX: state.toggles.logX, logY: state.toggles.logY });
  const panel = el("div", { class: "pareto" });
  if (scatter.kind === "empty") {
    panel.append(el("div", { class: "empty-state" }, scatter.message));
  } else {
    panel.innerHTML = scatter.svg;
    panel.prepend(el("div", {},
      toggleButton("x axis", "logX"), toggleButton("y axis", "logY")));
  }
  container.append(panel);

  // pending measurements
  const pendingBox = el("div", { class: "pending" },
    el("h3", {}, `Pending proposals (${view.pending.length})`));
  if (view.phase === "awaiting_measurement") {
    view.pending.forEach((p) => pendingBox.append(proposalRow(p, view.objective_names)));
  } else if ((view.config as { mode?: string }).mode === "benchmark" &&
             view.phase !== "converged" && view.phase !== "budget_exhausted") {
    const stepBtn = el("button", {}, "Run next step");
    stepBtn.onclick = async () => {
      await state.client!.step(view.id);
      state.view = await state.client!.getCampaign(view.id);
      render();
    };
    pendingBox.append(stepBtn);
  } else {
    pendingBox.append(el("p", {}, "none"));
  }
  container.append(pendingBox);

  // diagnostics
  const dash = el("div", { class: "dashboard" },
    el("h3", {}, "Diagnostics"),
    el("div", {},
      toggleButton("hv", "logHv"), toggleButton("acq", "logAcq"),
      toggleButton("gd", "logGd")),
  );
  if (view.records.length > 0) {
    state.client!.diagnostics(view.id).then((bundle) => {
      const panels = buildDashboard(bundle, {
        logHv: state.toggles.logHv,
        logAcq: state.toggles.logAcq,
        logGd: state.toggles.logGd,
      });
      const grid = el("div", { class: "grid" });
      for (const p of panels) {
        if (p.kind === "panel") {
          const cell = el("div", { class: "cell" });
          cell.innerHTML = p.svg;
          grid.append(cell);
        }
      }
      dash.append(grid);
    });
  } else {
    dash.append(el("p", { class: "empty-state" }, "no iterations recorded yet"));
  }
  container.append(dash,
    el("div", { class: "downloads" },
      ...["observations", "iterations", "proposals", "front"].map(downloadButton)));

  root().replaceChildren(container, el("p", { class: "notice" }, state.notice));
}

// -- polling -----------------------------------------------------------------------

let pollTimer: ReturnType<typeof setTimeout> | null = null;

async function pollLoop() {
  if (pollTimer) clearTimeout(pollTimer);
  if (!state.campaignId || !state.client) return;
  try {
    if (!state.mutationInFlight) {
      state.view = await state.client.getCampaign(state.campaignId);
      render();
    }
  } finally {
    pollTimer = setTimeout(pollLoop, POLL_MS);
  }
}

function render() {
  if (!state.client) renderConnect();
  else if (!state.campaignId) void renderWizard();
  else renderCampaign();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  render();
}
