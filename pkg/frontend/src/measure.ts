/** Measurement entry: client-side checks mirror the server's 400 rules, so a
 * request is only sent once it would be accepted. */

import type { ProposalView } from "./api.js";

export interface MeasurementDraft {
  proposalId: string;
  /** raw text per objective field, as typed by the user */
  values: string[];
  fidelity: number | null;
  expire: boolean;
}

export interface FieldError {
  proposalId: string;
  field: number | null;
  message: string;
}

export interface ValidatedBatch {
  ok: boolean;
  errors: FieldError[];
  payload: {
    proposal_id: string;
    values?: number[];
    fidelity?: number;
    expire?: boolean;
  }[];
}

export function validateMeasurements(
  pending: ProposalView[],
  drafts: MeasurementDraft[],
  objectiveCount: number,
): ValidatedBatch {
  const pendingIds = new Set(pending.map((p) => p.id));
  const errors: FieldError[] = [];
  const payload: ValidatedBatch["payload"] = [];

  for (const draft of drafts) {
    if (!pendingIds.has(draft.proposalId)) {
      errors.push({
        proposalId: draft.proposalId,
        field: null,
        message: "proposal is no longer pending",
      });
      continue;
    }
    if (draft.expire) {
      payload.push({ proposal_id: draft.proposalId, expire: true });
      continue;
    }
    if (draft.values.length !== objectiveCount) {
      errors.push({
        proposalId: draft.proposalId,
        field: null,
        message: `expected ${objectiveCount} objective values`,
      });
      continue;
    }
    const parsed: number[] = [];
    let bad = false;
    draft.values.forEach((text, k) => {
      const trimmed = text.trim();
      const value = Number(trimmed);
      if (trimmed === "" || !Number.isFinite(value)) {
        errors.push({
          proposalId: draft.proposalId,
          field: k,
          message: `objective ${k + 1} must be a finite number`,
        });
        bad = true;
      } else {
        parsed.push(value);
      }
    });
    if (bad) continue;
    const item: ValidatedBatch["payload"][number] = {
      proposal_id: draft.proposalId,
      values: parsed,
    };
    if (draft.fidelity !== null) item.fidelity = draft.fidelity;
    payload.push(item);
  }
  return { ok: errors.length === 0, errors, payload };
}
