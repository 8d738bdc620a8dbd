/**
 * The three figure layouts rendered from arcdyn CSV artifacts:
 *
 *  - landscape: adiabatic surfaces (left) and derivative coupling (right);
 *  - growth: de-orthogonalisation and interference magnitude at the
 *    readout coordinate versus dimensionless time, one curve per input;
 *  - snapshots: Re/Im of the interference density (top) and the diagonal
 *    densities (bottom) with one marker family per snapshot time.
 *
 * Values are never transformed beyond the axis scaling; invalid points
 * (validity = 0) break the line into gaps and are skipped, not
 * interpolated. In test mode every panel re-checks three seeded-random
 * plotted points by inverting their formatted pixel coordinates.
 */

import { assertSchema, column, readTable, Table } from "./csv.js";
import { linearScale, paddedExtent, Scale, ticks } from "./scale.js";
import { fmtTick, px, SvgDoc } from "./svg.js";

export const COLORS = ["#d62728", "#000000", "#1f77b4"]; // red, black, blue
export const DASHES = ["", "7,4", "2,3"]; // solid, dashed, dotted
const MARKERS = ["circle", "cross", "star"] as const;

export interface PlotSpec {
  layout: "landscape" | "growth" | "snapshots";
  inputs: string[];
  output: string;
  title?: string;
}

export interface RenderOptions {
  testMode?: boolean;
  seed?: number;
}

interface SeriesDef {
  x: number[];
  y: number[];
  valid?: boolean[];
  color: string;
  dash?: string;
  marker?: (typeof MARKERS)[number];
  label?: string;
}

interface PlottedPoint {
  x: number;
  y: number;
  pxs: string; // formatted pixel strings actually emitted
  pys: string;
}

interface Box {
  x0: number;
  y0: number;
  w: number;
  h: number;
}

function drawPanel(
  doc: SvgDoc,
  box: Box,
  series: SeriesDef[],
  xLabel: string,
  yLabel: string,
): { xScale: Scale; yScale: Scale; points: PlottedPoint[] } {
  const xs = series.flatMap((s) => s.x);
  const ys = series.flatMap((s) =>
    s.y.filter((_, i) => (s.valid ? s.valid[i] : true)),
  );
  const xd = paddedExtent(xs, 0.02);
  const yd = paddedExtent(ys, 0.08);
  const xScale = linearScale(xd, [box.x0, box.x0 + box.w]);
  const yScale = linearScale(yd, [box.y0 + box.h, box.y0]);
  // frame
  doc.add(
    `<rect x="${px(box.x0)}" y="${px(box.y0)}" width="${px(box.w)}" ` +
      `height="${px(box.h)}" fill="none" stroke="#444" stroke-width="1"/>`,
  );
  for (const t of ticks(xd[0], xd[1], 6)) {
    const tx = xScale.apply(t);
    doc.line(tx, box.y0 + box.h, tx, box.y0 + box.h + 4, "#444");
    doc.text(tx, box.y0 + box.h + 15, fmtTick(t));
  }
  for (const t of ticks(yd[0], yd[1], 5)) {
    const ty = yScale.apply(t);
    doc.line(box.x0 - 4, ty, box.x0, ty, "#444");
    doc.text(box.x0 - 7, ty + 3.5, fmtTick(t), "end");
  }
  doc.text(box.x0 + box.w / 2, box.y0 + box.h + 30, xLabel);
  doc.text(box.x0 - 46, box.y0 + box.h / 2, yLabel, "middle", -90);
  const points: PlottedPoint[] = [];
  for (const s of series) {
    let run: Array<[number, number]> = [];
    const flush = () => {
      if (run.length > 1) doc.polyline(run, s.color, 1.3, s.dash ?? "");
      run = [];
    };
    for (let i = 0; i < s.x.length; i++) {
      if (s.valid && !s.valid[i]) {
        flush();
        continue;
      }
      const gx = xScale.apply(s.x[i]);
      const gy = yScale.apply(s.y[i]);
      run.push([gx, gy]);
      points.push({ x: s.x[i], y: s.y[i], pxs: px(gx), pys: px(gy) });
      if (s.marker && i % 2 === 0) {
        doc.marker(s.marker, gx, gy, s.color);
      }
    }
    flush();
  }
  return { xScale, yScale, points };
}

function legend(doc: SvgDoc, box: Box, series: SeriesDef[]): void {
  let row = 0;
  for (const s of series) {
    if (!s.label) continue;
    const y = box.y0 + 14 + row * 14;
    const x = box.x0 + box.w - 130;
    doc.line(x, y - 3, x + 22, y - 3, s.color, 1.3, s.dash ?? "");
    if (s.marker) doc.marker(s.marker, x + 11, y - 3, s.color);
    doc.text(x + 27, y, s.label, "start");
    row++;
  }
}

/** Deterministic LCG for the test-mode spot picks. */
function lcg(seed: number): () => number {
  let state = seed >>> 0 || 1;
  return () => {
    state = (1664525 * state + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
}

function spotAssert(
  panel: { xScale: Scale; yScale: Scale; points: PlottedPoint[] },
  seed: number,
): void {
  if (panel.points.length === 0) return;
  const rand = lcg(seed);
  for (let k = 0; k < 3; k++) {
    const p = panel.points[Math.floor(rand() * panel.points.length)];
    const xBack = panel.xScale.invert(Number(p.pxs));
    const yBack = panel.yScale.invert(Number(p.pys));
    const xTol =
      Math.abs(panel.xScale.domain[1] - panel.xScale.domain[0]) * 1e-5 + 1e-12;
    const yTol =
      Math.abs(panel.yScale.domain[1] - panel.yScale.domain[0]) * 1e-5 + 1e-12;
    if (Math.abs(xBack - p.x) > xTol || Math.abs(yBack - p.y) > yTol) {
      throw new Error(
        `spot check failed: (${p.x}, ${p.y}) plotted as ` +
          `(${p.pxs}, ${p.pys}) inverts to (${xBack}, ${yBack})`,
      );
    }
  }
}

function baseName(path: string): string {
  const parts = path.split(/[\\/]/);
  return parts[parts.length - 1].replace(/\.csv$/, "");
}

/** Pull "wbt = X" out of a snapshot's comment lines. */
function wbtLabel(table: Table): string {
  for (const c of table.comments) {
    const m = /^wbt = ([-0-9.eE+]+)/.exec(c);
    if (m) return `wbt = ${Number(m[1])}`;
  }
  return baseName(table.path);
}

function renderLandscape(inputs: string[], opts: RenderOptions): string {
  const table = readTable(inputs[0]);
  assertSchema(table, "bo profile");
  const R = column(table, "R");
  const doc = new SvgDoc(760, 380);
  doc.text(380, 20, "adiabatic surfaces and derivative coupling");
  const left = drawPanel(
    doc,
    { x0: 70, y0: 45, w: 260, h: 260 },
    [
      { x: R, y: column(table, "eps0"), color: COLORS[1], label: "eps0" },
      { x: R, y: column(table, "eps1"), color: COLORS[0], label: "eps1" },
    ],
    "R [sigma]",
    "energy [g0]",
  );
  legend(doc, { x0: 70, y0: 45, w: 260, h: 260 }, [
    { x: [], y: [], color: COLORS[1], label: "eps0" },
    { x: [], y: [], color: COLORS[0], label: "eps1" },
  ]);
  const right = drawPanel(
    doc,
    { x0: 450, y0: 45, w: 260, h: 260 },
    [{ x: R, y: column(table, "nac"), color: COLORS[2] }],
    "R [sigma]",
    "coupling [1/sigma]",
  );
  if (opts.testMode) {
    spotAssert(left, (opts.seed ?? 7) + 1);
    spotAssert(right, (opts.seed ?? 7) + 2);
  }
  return doc.render();
}

function renderGrowth(inputs: string[], opts: RenderOptions): string {
  const tables = inputs.map((p) => {
    const t = readTable(p);
    assertSchema(t, "growth series");
    return t;
  });
  const doc = new SvgDoc(640, 520);
  doc.text(320, 20, "de-orthogonalisation and interference growth");
  const mk = (col: string): SeriesDef[] =>
    tables.map((t, i) => ({
      x: column(t, "wbt"),
      y: column(t, col),
      color: COLORS[i % COLORS.length],
      dash: DASHES[i % DASHES.length],
      label: baseName(t.path),
    }));
  const top = drawPanel(
    doc,
    { x0: 80, y0: 45, w: 500, h: 190 },
    mk("abs_overlap_r0"),
    "",
    "|<phi0|phi1>| (R0)",
  );
  legend(doc, { x0: 80, y0: 45, w: 500, h: 190 }, mk("abs_overlap_r0"));
  const bottom = drawPanel(
    doc,
    { x0: 80, y0: 280, w: 500, h: 190 },
    mk("abs_n01_r0"),
    "omega_B t",
    "|n01| (R0)",
  );
  if (opts.testMode) {
    spotAssert(top, (opts.seed ?? 7) + 1);
    spotAssert(bottom, (opts.seed ?? 7) + 2);
  }
  return doc.render();
}

function renderSnapshots(inputs: string[], opts: RenderOptions): string {
  const tables = inputs.map((p) => {
    const t = readTable(p);
    assertSchema(t, "snapshot profile");
    return t;
  });
  const doc = new SvgDoc(760, 560);
  doc.text(380, 20, "nuclear density contributions");
  const panels: Array<{ col: string; box: Box; ylab: string }> = [
    { col: "re_n01", box: { x0: 70, y0: 45, w: 260, h: 190 }, ylab: "Re n01" },
    { col: "im_n01", box: { x0: 450, y0: 45, w: 260, h: 190 },
      ylab: "Im n01" },
    { col: "n0", box: { x0: 70, y0: 300, w: 260, h: 190 }, ylab: "n0" },
    { col: "n1", box: { x0: 450, y0: 300, w: 260, h: 190 }, ylab: "n1" },
  ];
  let seedOffset = 1;
  for (const p of panels) {
    const series: SeriesDef[] = tables.map((t, i) => ({
      x: column(t, "R"),
      y: column(t, p.col),
      valid: column(t, "validity").map((v) => v !== 0),
      color: COLORS[i % COLORS.length],
      marker: MARKERS[i % MARKERS.length],
      dash: DASHES[i % DASHES.length],
      label: wbtLabel(t),
    }));
    const panel = drawPanel(doc, p.box, series, "R [sigma]", p.ylab);
    if (p.col === "re_n01") legend(doc, p.box, series);
    if (opts.testMode) spotAssert(panel, (opts.seed ?? 7) + seedOffset);
    seedOffset++;
  }
  return doc.render();
}

export function renderSpec(spec: PlotSpec, opts: RenderOptions = {}): string {
  if (!Array.isArray(spec.inputs) || spec.inputs.length === 0) {
    throw new Error("plot spec needs at least one input file");
  }
  switch (spec.layout) {
    case "landscape":
      return renderLandscape(spec.inputs, opts);
    case "growth":
      return renderGrowth(spec.inputs, opts);
    case "snapshots":
      return renderSnapshots(spec.inputs, opts);
    default:
      throw new Error(`unknown layout "${(spec as PlotSpec).layout}"`);
  }
}
