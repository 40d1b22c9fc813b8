/** Five-step campaign setup wizard.
 *
 * Step 1: mode and function/table selection.
 * Step 2: hyperparameters (iterations, initial samples, batch size,
 *         exploration weight, fidelity mode, budget).
 * Step 3: table metadata review and missing-value strategy (dataset mode).
 * Step 4: input/objective/fidelity column specification (dataset mode).
 * Step 5: review and launch.
 *
 * A later step is unreachable until every earlier step validates, and the
 * final selections serialize to a server-valid campaign config.
 */

import {
  CampaignConfig,
  CostModel,
  campaignConfigSchema,
  configDefaults,
} from "./config.js";
import type { BenchmarkDef, TableMetadata } from "./api.js";

export interface WizardSelections {
  mode: "benchmark" | "dataset" | null;
  benchmark: string | null;
  tableId: string | null;
  iterations: number;
  initN: number;
  initMethod: "lhs" | "sobol" | "uniform";
  acquisition: "EI" | "PI" | "LCB" | "EHVI" | "qEHVI" | null;
  q: number;
  beta: number;
  mcSamples: number;
  seed: number;
  budget: number | null;
  fidelity: CostModel | null;
  imputation: "drop_rows" | "mean" | "median" | "constant";
  imputationConstant: number;
  xColumns: string[];
  yColumns: string[];
  directions: ("maximize" | "minimize")[];
  bounds: [number, number][];
}

export type StepStatus = { valid: boolean; problems: string[] };

const STEP_COUNT = 5;

export class WizardState {
  step = 1;
  selections: WizardSelections = {
    mode: null,
    benchmark: null,
    tableId: null,
    iterations: configDefaults.iterations,
    initN: configDefaults.init_n,
    initMethod: configDefaults.init_method,
    acquisition: configDefaults.acquisition,
    q: configDefaults.q,
    beta: configDefaults.beta,
    mcSamples: configDefaults.mc_samples,
    seed: configDefaults.seed,
    budget: configDefaults.budget,
    fidelity: configDefaults.fidelity,
    imputation: configDefaults.imputation,
    imputationConstant: 0,
    xColumns: [],
    yColumns: [],
    directions: [],
    bounds: [],
  };
  tableMetadata: TableMetadata | null = null;
  benchmarks: BenchmarkDef[] = [];

  statusOf(step: number): StepStatus {
    const s = this.selections;
    const problems: string[] = [];
    switch (step) {
      case 1:
        if (s.mode === null) problems.push("choose benchmark or dataset mode");
        if (s.mode === "benchmark" && !s.benchmark)
          problems.push("pick a benchmark function");
        if (s.mode === "dataset" && !s.tableId) problems.push("pick a table");
        break;
      case 2:
        if (!Number.isInteger(s.iterations) || s.iterations < 1)
          problems.push("iterations must be a positive integer");
        if (!Number.isInteger(s.initN) || s.initN < 2)
          problems.push("initial samples must be at least 2");
        if (!Number.isInteger(s.q) || s.q < 1) problems.push("q must be >= 1");
        if (s.q > 1 && s.acquisition !== "qEHVI" && s.acquisition !== null)
          problems.push("q > 1 requires qEHVI");
        if (!(s.beta >= 0)) problems.push("beta must be >= 0");
        if (s.budget !== null && !(s.budget > 0))
          problems.push("budget must be positive when set");
        if (s.fidelity?.mode === "discrete") {
          const lv = s.fidelity.levels;
          if (lv[lv.length - 1] !== 1.0)
            problems.push("highest fidelity level must be 1.0");
          if (s.fidelity.ratios.length !== lv.length)
            problems.push("one cost ratio per fidelity level");
        }
        break;
      case 3:
        if (s.mode === "dataset") {
          if (!this.tableMetadata) problems.push("load table metadata first");
          if (s.imputation === "constant" && !Number.isFinite(s.imputationConstant))
            problems.push("constant imputation needs a finite value");
        }
        break;
      case 4:
        if (s.mode === "dataset") {
          if (s.xColumns.length === 0) problems.push("select input columns");
          if (s.yColumns.length === 0) problems.push("select objective columns");
          const overlap = s.xColumns.filter((c) => s.yColumns.includes(c));
          if (overlap.length) problems.push(`columns used twice: ${overlap}`);
          if (this.tableMetadata) {
            for (const c of [...s.xColumns, ...s.yColumns]) {
              if (!this.tableMetadata.columns.includes(c))
                problems.push(`unknown column ${c}`);
              else if (this.tableMetadata.dtypes[c] !== "real")
                problems.push(`column ${c} is not real-typed`);
            }
          }
          if (s.bounds.length !== s.xColumns.length)
            problems.push("per-input bounds required");
          if (s.bounds.some(([lo, hi]) => !(hi > lo)))
            problems.push("each bound needs hi > lo");
          if (
            s.directions.length !== 0 &&
            s.directions.length !== s.yColumns.length
          )
            problems.push("directions must align with objectives");
        }
        break;
      case 5: {
        for (let k = 1; k < 5; k++) {
          if (!this.statusOf(k).valid) problems.push(`step ${k} incomplete`);
        }
        if (problems.length === 0) {
          const parse = campaignConfigSchema.safeParse(this.toConfig());
          if (!parse.success)
            problems.push(...parse.error.issues.map((i) => i.message));
        }
        break;
      }
    }
    return { valid: problems.length === 0, problems };
  }

  /** The furthest step the user may enter. */
  maxReachable(): number {
    for (let k = 1; k < STEP_COUNT; k++) {
      if (!this.statusOf(k).valid) return k;
    }
    return STEP_COUNT;
  }

  advance(): boolean {
    if (this.step >= STEP_COUNT) return false;
    if (!this.statusOf(this.step).valid) return false;
    this.step += 1;
    return true;
  }

  back(): boolean {
    if (this.step <= 1) return false;
    this.step -= 1;
    return true;
  }

  goTo(step: number): boolean {
    if (step < 1 || step > STEP_COUNT || step > this.maxReachable()) return false;
    this.step = step;
    return true;
  }

  toConfig(): CampaignConfig {
    const s = this.selections;
    const common = {
      iterations: s.iterations,
      init_n: s.initN,
      init_method: s.initMethod,
      acquisition: s.acquisition,
      q: s.q,
      beta: s.beta,
      mc_samples: s.mcSamples,
      seed: s.seed,
      budget: s.budget,
      imputation: s.imputation,
      imputation_constant: s.imputationConstant,
      fidelity: s.fidelity,
    };
    if (s.mode === "dataset") {
      return {
        mode: "dataset",
        table_id: s.tableId ?? "",
        x_columns: s.xColumns as [string, ...string[]],
        y_columns: s.yColumns as [string, ...string[]],
        directions: s.directions,
        bounds: s.bounds as [[number, number], ...[number, number][]],
        ...common,
      };
    }
    return { mode: "benchmark", benchmark: s.benchmark ?? "", ...common };
  }
}
