/** Typed fetch client for the /v1 campaign server routes. */

import type { CampaignConfig } from "./config.js";

export interface ApiErrorBody {
  code: string;
  message: string;
  path?: string;
  incident_id?: string;
}

export class ApiError extends Error {
  status: number;
  body: ApiErrorBody;
  constructor(status: number, body: ApiErrorBody) {
    super(`${status} ${body.code}: ${body.message}`);
    this.status = status;
    this.body = body;
  }
}

export interface TableMetadata {
  table: string;
  archetype: string;
  columns: string[];
  dtypes: Record<string, string>;
  units: Record<string, string | null>;
  ontology_tags: Record<string, string | null>;
  row_count: number;
  missing_counts: Record<string, number>;
  form_id: string | null;
}

export interface BenchmarkDef {
  name: string;
  kind: "single" | "multi";
  dim: number;
  bounds: [number, number][];
  objectives: number;
  directions: string[];
  optima: { value: number; at: number[] }[];
  description: string;
}

export interface ProposalView {
  id: string;
  x: number[];
  fidelity: number | null;
  acq_value: number;
  acq_value_weighted: number | null;
  predicted_mean: number[];
  predicted_sd: number[];
  status: "pending" | "measured" | "expired";
}

export interface IterationRecordView {
  iteration: number;
  hv: number;
  delta_hv: number;
  gd: number | null;
  acq_raw: number;
  acq_weighted: number | null;
  fidelities: number[];
  cum_cost: number;
  wall_ms: number;
  step_size: number | null;
  best_value: number | null;
}

export interface CampaignView {
  id: string;
  phase: string;
  config: Record<string, unknown>;
  iteration: number;
  cum_cost: number;
  observations: {
    X: number[][];
    Y: number[][];
    fidelity: (number | null)[];
    cost: number[];
    iter: number[];
    proposal_id: string[];
  };
  front_indices: number[];
  pending: ProposalView[];
  input_names: string[];
  objective_names: string[];
  directions: string[];
  imputation_report: { rows_dropped: number; cells_filled: number } | null;
  records: IterationRecordView[];
}

export interface DiagnosticsBundle {
  iteration: number[];
  hv: number[];
  delta_hv: number[];
  gd?: (number | null)[];
  acq_raw: number[];
  acq_weighted: (number | null)[];
  cum_cost: number[];
  wall_ms: number[];
  step_size: (number | null)[];
  fidelity_histogram?: Record<string, number>;
  fidelity_per_iteration?: number[][];
  best_value?: number[];
  distance_to_optimum?: number[];
}

export class ApiClient {
  baseUrl: string;
  token: string;

  constructor(baseUrl: string, token: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.token = token;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const doFetch = () =>
      fetch(`${this.baseUrl}${path}`, {
        method,
        headers: {
          Authorization: `Bearer ${this.token}`,
          ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
        },
        body: body !== undefined ? JSON.stringify(body) : undefined,
      });
    let resp: Response;
    try {
      resp = await doFetch();
    } catch {
      // one retry on transport failure (dropped keep-alive, brief restart)
      resp = await doFetch();
    }
    if (!resp.ok) {
      let errBody: ApiErrorBody = { code: "unknown", message: resp.statusText };
      try {
        const doc = (await resp.json()) as { error?: ApiErrorBody };
        if (doc.error) errBody = doc.error;
      } catch {
        // non-JSON error body: keep the fallback
      }
      throw new ApiError(resp.status, errBody);
    }
    return (await resp.json()) as T;
  }

  health(): Promise<{ ok: boolean }> {
    return this.request("GET", "/v1/healthz");
  }

  listTables(): Promise<{ tables: string[] }> {
    return this.request("GET", "/v1/tables");
  }

  tableMetadata(tableId: string): Promise<TableMetadata> {
    return this.request("GET", `/v1/tables/${encodeURIComponent(tableId)}/metadata`);
  }

  listBenchmarks(): Promise<{ benchmarks: BenchmarkDef[] }> {
    return this.request("GET", "/v1/benchmarks");
  }

  createCampaign(config: CampaignConfig): Promise<CampaignView> {
    return this.request("POST", "/v1/campaigns", config);
  }

  getCampaign(id: string): Promise<CampaignView> {
    return this.request("GET", `/v1/campaigns/${encodeURIComponent(id)}`);
  }

  propose(id: string): Promise<{ proposals: ProposalView[]; phase: string }> {
    return this.request("POST", `/v1/campaigns/${encodeURIComponent(id)}/propose`);
  }

  submitMeasurements(
    id: string,
    measurements: {
      proposal_id: string;
      values?: number[];
      fidelity?: number;
      expire?: boolean;
    }[],
  ): Promise<CampaignView> {
    return this.request("POST", `/v1/campaigns/${encodeURIComponent(id)}/measurements`, {
      measurements,
    });
  }

  step(id: string): Promise<{ record: IterationRecordView | null; phase: string }> {
    return this.request("POST", `/v1/campaigns/${encodeURIComponent(id)}/step`);
  }

  diagnostics(id: string): Promise<DiagnosticsBundle> {
    return this.request("GET", `/v1/campaigns/${encodeURIComponent(id)}/diagnostics`);
  }

  async exportCsv(id: string, which: string): Promise<string> {
    const resp = await fetch(
      `${this.baseUrl}/v1/campaigns/${encodeURIComponent(id)}/export?which=${which}`,
      { headers: { Authorization: `Bearer ${this.token}`, Accept: "text/csv" } },
    );
    if (!resp.ok) {
      const doc = (await resp.json()) as { error: ApiErrorBody };
      throw new ApiError(resp.status, doc.error);
    }
    return resp.text();
  }
}
