/** Pure SVG chart builders.
 *
 * Every number shown (labels, hover text) is taken verbatim from API data;
 * the console adds layout only. Builders return a view model so tests can
 * assert structure without a DOM.
 */

import type { CampaignView } from "./api.js";

export interface Panel {
  kind: "panel";
  title: string;
  svg: string;
  /** numbers displayed on this panel, exactly as received */
  shown: number[];
}

export interface HiddenPanel {
  kind: "hidden";
  title: string;
  reason: string;
}

export interface EmptyState {
  kind: "empty";
  message: string;
}

export interface ScatterView {
  kind: "scatter";
  svg: string;
  pointCount: number;
  frontCount: number;
  shown: number[];
}

const W = 360;
const H = 220;
const PAD = 42;

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(v: number): string {
  return String(v);
}

interface Scale {
  toPx(v: number): number;
  lo: number;
  hi: number;
  log: boolean;
}

function makeScale(values: number[], pxLo: number, pxHi: number, log: boolean): Scale {
  const finite = values.filter((v) => Number.isFinite(v));
  const usable = log ? finite.filter((v) => v > 0) : finite;
  const useLog = log && usable.length === finite.length && usable.length > 0;
  const pool = useLog ? usable : finite;
  let lo = Math.min(...pool);
  let hi = Math.max(...pool);
  if (!Number.isFinite(lo) || !Number.isFinite(hi)) {
    lo = 0;
    hi = 1;
  }
  if (lo === hi) {
    lo = useLog ? lo / 2 : lo - 1;
    hi = useLog ? hi * 2 : hi + 1;
  }
  const t = (v: number) => (useLog ? Math.log10(v) : v);
  const a = t(lo);
  const b = t(hi);
  return {
    lo,
    hi,
    log: useLog,
    toPx: (v: number) => pxLo + ((t(v) - a) / (b - a)) * (pxHi - pxLo),
  };
}

function frame(title: string, body: string, xlab: string, ylab: string,
               xScale: Scale, yScale: Scale): { svg: string; shown: number[] } {
  const svg =
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${W} ${H}" ` +
    `class="panel-chart" role="img" aria-label="${esc(title)}">` +
    `<text x="${W / 2}" y="14" text-anchor="middle" class="title">${esc(title)}</text>` +
    `<line x1="${PAD}" y1="${H - PAD}" x2="${W - 10}" y2="${H - PAD}" class="axis"/>` +
    `<line x1="${PAD}" y1="${H - PAD}" x2="${PAD}" y2="20" class="axis"/>` +
    `<text x="${PAD}" y="${H - PAD + 14}" class="tick">${fmt(xScale.lo)}</text>` +
    `<text x="${W - 10}" y="${H - PAD + 14}" text-anchor="end" class="tick">${fmt(xScale.hi)}</text>` +
    `<text x="${PAD - 4}" y="${H - PAD}" text-anchor="end" class="tick">${fmt(yScale.lo)}</text>` +
    `<text x="${PAD - 4}" y="24" text-anchor="end" class="tick">${fmt(yScale.hi)}</text>` +
    `<text x="${(W + PAD) / 2}" y="${H - 4}" text-anchor="middle" class="lab">${esc(xlab)}</text>` +
    `<text x="10" y="${H / 2}" transform="rotate(-90 10 ${H / 2})" text-anchor="middle" class="lab">${esc(ylab)}</text>` +
    body +
    `</svg>`;
  return { svg, shown: [xScale.lo, xScale.hi, yScale.lo, yScale.hi] };
}

export function linePanel(
  title: string,
  xs: number[] | undefined,
  ys: (number | null)[] | undefined,
  opts: { xlab?: string; ylab?: string; logY?: boolean } = {},
): Panel | HiddenPanel {
  if (!xs || !ys || xs.length === 0 || ys.every((v) => v === null)) {
    return { kind: "hidden", title, reason: "series not available" };
  }
  const pairs = xs
    .map((x, i) => [x, ys[i]] as const)
    .filter((p): p is readonly [number, number] => p[1] !== null && p[1] !== undefined);
  if (pairs.length === 0) return { kind: "hidden", title, reason: "no data points" };
  const xScale = makeScale(pairs.map((p) => p[0]), PAD, W - 10, false);
  const yScale = makeScale(pairs.map((p) => p[1]), H - PAD, 20, opts.logY ?? false);
  const pts = pairs
    .map((p) => `${xScale.toPx(p[0]).toFixed(1)},${yScale.toPx(p[1]).toFixed(1)}`)
    .join(" ");
  const markers = pairs
    .map(
      (p) =>
        `<circle cx="${xScale.toPx(p[0]).toFixed(1)}" cy="${yScale.toPx(p[1]).toFixed(1)}"` +
        ` r="2.5" class="dot"><title>${fmt(p[0])}: ${fmt(p[1])}</title></circle>`,
    )
    .join("");
  const body = `<polyline fill="none" class="series" points="${pts}"/>` + markers;
  const { svg, shown } = frame(title, body, opts.xlab ?? "iteration",
    opts.ylab ?? "", xScale, yScale);
  return { kind: "panel", title, svg, shown: shown.concat(pairs.map((p) => p[1])) };
}

export function barPanel(
  title: string,
  xs: number[] | undefined,
  ys: (number | null)[] | undefined,
  opts: { xlab?: string; ylab?: string } = {},
): Panel | HiddenPanel {
  if (!xs || !ys || xs.length === 0) {
    return { kind: "hidden", title, reason: "series not available" };
  }
  const pairs = xs
    .map((x, i) => [x, ys[i]] as const)
    .filter((p): p is readonly [number, number] => p[1] !== null && p[1] !== undefined);
  if (pairs.length === 0) return { kind: "hidden", title, reason: "no data points" };
  const xScale = makeScale(pairs.map((p) => p[0]), PAD + 6, W - 16, false);
  const yScale = makeScale([0, ...pairs.map((p) => p[1])], H - PAD, 20, false);
  const width = Math.max(2, (W - PAD - 26) / (pairs.length * 1.6));
  const bars = pairs
    .map((p) => {
      const x = xScale.toPx(p[0]) - width / 2;
      const y0 = yScale.toPx(0);
      const y1 = yScale.toPx(p[1]);
      return (
        `<rect x="${x.toFixed(1)}" y="${Math.min(y0, y1).toFixed(1)}" width="${width.toFixed(1)}"` +
        ` height="${Math.abs(y0 - y1).toFixed(1)}" class="bar">` +
        `<title>${fmt(p[0])}: ${fmt(p[1])}</title></rect>`
      );
    })
    .join("");
  const { svg, shown } = frame(title, bars, opts.xlab ?? "iteration",
    opts.ylab ?? "", xScale, yScale);
  return { kind: "panel", title, svg, shown: shown.concat(pairs.map((p) => p[1])) };
}

export function histogramPanel(
  title: string,
  hist: Record<string, number> | undefined,
): Panel | HiddenPanel {
  if (!hist || Object.keys(hist).length === 0) {
    return { kind: "hidden", title, reason: "no fidelity data" };
  }
  const entries = Object.entries(hist);
  const yScale = makeScale([0, ...entries.map(([, v]) => v)], H - PAD, 20, false);
  const width = (W - PAD - 26) / entries.length;
  const bars = entries
    .map(([label, count], i) => {
      const x = PAD + 8 + i * width;
      const y = yScale.toPx(count);
      return (
        `<rect x="${x.toFixed(1)}" y="${y.toFixed(1)}" width="${(width * 0.7).toFixed(1)}"` +
        ` height="${(H - PAD - y).toFixed(1)}" class="bar">` +
        `<title>fidelity ${esc(label)}: ${count}</title></rect>` +
        `<text x="${(x + width * 0.35).toFixed(1)}" y="${H - PAD + 14}"` +
        ` text-anchor="middle" class="tick">${esc(label)}</text>` +
        `<text x="${(x + width * 0.35).toFixed(1)}" y="${(y - 4).toFixed(1)}"` +
        ` text-anchor="middle" class="tick">${count}</text>`
      );
    })
    .join("");
  const svg =
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${W} ${H}" class="panel-chart">` +
    `<text x="${W / 2}" y="14" text-anchor="middle" class="title">${esc(title)}</text>` +
    bars +
    `</svg>`;
  return { kind: "panel", title, svg, shown: entries.map(([, v]) => v) };
}

/** Objective-space scatter: observed points, highlighted front, trajectory. */
export function paretoView(
  campaign: CampaignView,
  opts: { logX?: boolean; logY?: boolean } = {},
): ScatterView | EmptyState {
  const Y = campaign.observations.Y;
  if (!Y || Y.length === 0) {
    return { kind: "empty", message: "no observations yet" };
  }
  if (Y[0].length < 2) {
    return { kind: "empty", message: "objective-space view needs two objectives" };
  }
  const xs = Y.map((row) => row[0]);
  const ys = Y.map((row) => row[1]);
  const xScale = makeScale(xs, PAD, W - 14, opts.logX ?? false);
  const yScale = makeScale(ys, H - PAD, 20, opts.logY ?? false);
  const frontSet = new Set(campaign.front_indices);
  const ids = campaign.observations.proposal_id;
  const traj = Y.map(
    (row) => `${xScale.toPx(row[0]).toFixed(1)},${yScale.toPx(row[1]).toFixed(1)}`,
  ).join(" ");
  const points = Y.map((row, i) => {
    const cx = xScale.toPx(row[0]).toFixed(1);
    const cy = yScale.toPx(row[1]).toFixed(1);
    const cls = frontSet.has(i) ? "pt front" : "pt";
    const r = frontSet.has(i) ? 5 : 3;
    const id = ids[i] || "initial";
    return (
      `<circle cx="${cx}" cy="${cy}" r="${r}" class="${cls}">` +
      `<title>${esc(id)}: (${fmt(row[0])}, ${fmt(row[1])})</title></circle>`
    );
  }).join("");
  const body =
    `<polyline fill="none" class="trajectory" points="${traj}"/>` + points;
  const { svg, shown } = frame(
    "Objective space",
    body,
    campaign.objective_names[0] ?? "objective 1",
    campaign.objective_names[1] ?? "objective 2",
    xScale,
    yScale,
  );
  return {
    kind: "scatter",
    svg,
    pointCount: Y.length,
    frontCount: campaign.front_indices.length,
    shown: shown.concat(xs, ys),
  };
}
