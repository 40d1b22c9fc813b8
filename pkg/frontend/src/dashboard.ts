/** Diagnostics dashboard composition: which panels exist for a bundle. */

import type { DiagnosticsBundle } from "./api.js";
import { barPanel, histogramPanel, linePanel, Panel, HiddenPanel } from "./charts.js";

export interface AxisToggles {
  logHv?: boolean;
  logAcq?: boolean;
  logGd?: boolean;
}

export function buildDashboard(
  d: DiagnosticsBundle,
  toggles: AxisToggles = {},
): (Panel | HiddenPanel)[] {
  const it = d.iteration;
  const panels: (Panel | HiddenPanel)[] = [
    linePanel("Hypervolume evolution", it, d.hv, {
      ylab: "HV",
      logY: toggles.logHv,
    }),
    barPanel("Hypervolume improvement", it, d.delta_hv, { ylab: "ΔHV" }),
    linePanel("Distance to reference front", it, d.gd, {
      ylab: "GD",
      logY: toggles.logGd,
    }),
    linePanel("Acquisition progression", it, d.acq_raw, {
      ylab: "best acquisition",
      logY: toggles.logAcq,
    }),
    linePanel("Cost-weighted acquisition", it, d.acq_weighted, {
      ylab: "per-cost acquisition",
      logY: toggles.logAcq,
    }),
    histogramPanel("Fidelity usage", d.fidelity_histogram),
    linePanel("Best value so far", it, d.best_value, { ylab: "best value" }),
    linePanel("Distance to optimum", it, d.distance_to_optimum, {
      ylab: "|best - optimum|",
      logY: true,
    }),
    linePanel("Step size", it, d.step_size, { ylab: "‖x_t − x_{t−1}‖" }),
  ];
  return panels;
}

export function visiblePanels(panels: (Panel | HiddenPanel)[]): Panel[] {
  return panels.filter((p): p is Panel => p.kind === "panel");
}
