/**
 * Figure renderers for qsl experiment manifests.
 *
 * One figure per manifest: the renderer dispatches on the manifest's
 * experiment kind and assembles a single SVG from the CSV files the run
 * emitted. It never recomputes physics; every number drawn comes from the
 * manifest or the listed tables. The only arithmetic applied is display
 * arithmetic: axis scaling, color normalization, summing a plotted Wigner
 * grid into its marginal curves, and the documented overlay radius
 * sqrt((kappa1 - gamma1) / gamma2) of the classical limit cycle.
 *
 * Output is deterministic: same manifest, same bytes.
 */

import { ManifestError, UnsupportedFormat, UnsupportedKind } from "./errors.js";
import {
  FileEntry,
  ManifestDir,
  Table,
  entryField,
  filesByRole,
  kindConfig,
  loadManifest,
  loadRole,
  loadTable,
  requireFile,
} from "./manifest.js";
import { Scale, cellEdges, fmt } from "./scale.js";
import {
  Frame,
  INVALID_FILL,
  SvgDoc,
  divColor,
  drawAxes,
  drawColorbar,
  drawLine,
  seqColor,
  tag,
} from "./svg.js";

export interface FigureStyle {
  /** Normalize each Wigner panel by its own max |W| (default) or by the row max. */
  normalizePerPanel?: boolean;
}

export interface FigureSpec {
  manifestPath: string;
  format?: "svg" | "png";
  style?: FigureStyle;
}

export interface RenderedFile {
  name: string;
  content: string;
}

const SQRT2 = Math.sqrt(2);

const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#17becf",
  "#e377c2",
];

export function render(spec: FigureSpec): RenderedFile[] {
  if (spec.format === "png") {
    throw new UnsupportedFormat(
      "png output is not supported: this renderer emits svg only (re-run with --format svg)",
    );
  }
  const md = loadManifest(spec.manifestPath);
  const kind = md.manifest.kind;
  const renderer = RENDERERS[kind];
  if (!renderer) {
    const hint = kind === "derive_eom" ? "; its output is text, not a plot" : "";
    throw new UnsupportedKind(`no figure renderer for experiment kind "${kind}"${hint}`);
  }
  const style: FigureStyle = { normalizePerPanel: true, ...(spec.style ?? {}) };
  return [{ name: `${kind}.svg`, content: renderer(md, style) }];
}

// ── Small manifest accessors ────────────────────────────

function metaNum(obj: Record<string, unknown>, key: string, where: string): number {
  const v = obj[key];
  if (typeof v !== "number") {
    throw new ManifestError(`manifest ${where} lacks numeric "${key}"`);
  }
  return v;
}

function metaList(obj: Record<string, unknown>, key: string, where: string): unknown[] {
  const v = obj[key];
  if (!Array.isArray(v)) {
    throw new ManifestError(`manifest ${where} lacks list "${key}"`);
  }
  return v;
}

function axisLog(cfg: Record<string, unknown>, key: string): boolean {
  const axis = cfg[key];
  if (axis && typeof axis === "object") {
    return (axis as Record<string, unknown>)["spacing"] === "log";
  }
  return false;
}

// ── Tile plumbing ───────────────────────────────────────

/**
 * Long-format tile table -> dense lookup. Axis values are deduplicated by
 * their emitted strings, so equality is exact rather than float-fuzzy.
 */
interface TileData {
  xs: number[];
  ys: number[];
  idx: (ix: number, iy: number) => number;
}

function tiles(t: Table, xCol: string, yCol: string): TileData {
  const xRaw = t.strCol(xCol);
  const yRaw = t.strCol(yCol);
  const uniq = (raw: string[]) => {
    const seen = new Map<string, number>();
    for (const s of raw) if (!seen.has(s)) seen.set(s, Number(s));
    return [...seen.entries()].sort((a, b) => a[1] - b[1]);
  };
  const xu = uniq(xRaw);
  const yu = uniq(yRaw);
  const xPos = new Map(xu.map(([s], i) => [s, i]));
  const yPos = new Map(yu.map(([s], i) => [s, i]));
  const cell = new Map<number, number>();
  for (let r = 0; r < xRaw.length; r++) {
    cell.set(xPos.get(xRaw[r])! * yu.length + yPos.get(yRaw[r])!, r);
  }
  return {
    xs: xu.map(([, v]) => v),
    ys: yu.map(([, v]) => v),
    idx: (ix, iy) => cell.get(ix * yu.length + iy) ?? -1,
  };
}

interface HeatOpts {
  xLog?: boolean;
  yLog?: boolean;
  /** Matrix orientation: first y value at the top. */
  yDown?: boolean;
}

interface HeatScales {
  xScale: Scale;
  yScale: Scale;
}

/**
 * Paint one heatmap into `frame`. `fill` returns a color per cell or null
 * for "no data here". Runs of equally colored cells merge into one rect so
 * smooth regions stay cheap.
 */
function drawHeatmap(
  doc: SvgDoc,
  f: Frame,
  xs: number[],
  ys: number[],
  opts: HeatOpts,
  fill: (ix: number, iy: number) => string | null,
): HeatScales {
  const xe = cellEdges(xs, !!opts.xLog);
  const ye = cellEdges(ys, !!opts.yLog);
  const xScale = new Scale(xe[0], xe[xe.length - 1], f.x, f.x + f.w, !!opts.xLog);
  const yScale = opts.yDown
    ? new Scale(ye[0], ye[ye.length - 1], f.y, f.y + f.h, !!opts.yLog)
    : new Scale(ye[0], ye[ye.length - 1], f.y + f.h, f.y, !!opts.yLog);
  for (let iy = 0; iy < ys.length; iy++) {
    let runColor: string | null = null;
    let runStart = 0;
    const flush = (endIx: number) => {
      if (runColor === null) return;
      const x1 = xScale.map(xe[runStart]);
      const x2 = xScale.map(xe[endIx]);
      const y1 = yScale.map(ye[iy]);
      const y2 = yScale.map(ye[iy + 1]);
      doc.add(
        tag("rect", {
          x: Math.min(x1, x2),
          y: Math.min(y1, y2),
          width: Math.abs(x2 - x1) + 0.3,
          height: Math.abs(y2 - y1) + 0.3,
          fill: runColor,
        }),
      );
    };
    for (let ix = 0; ix < xs.length; ix++) {
      const c = fill(ix, iy);
      if (c !== runColor) {
        flush(ix);
        runColor = c;
        runStart = ix;
      }
    }
    flush(xs.length);
  }
  return { xScale, yScale };
}

function finiteRange(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (!Number.isFinite(v)) continue;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo > hi) return [0, 1];
  return lo === hi ? [lo - 0.5, hi + 0.5] : [lo, hi];
}

function normalizer(lo: number, hi: number): (v: number) => number {
  const span = hi - lo;
  return (v) => (span === 0 ? 0.5 : Math.min(1, Math.max(0, (v - lo) / span)));
}

// ── Line panels ─────────────────────────────────────────

interface Series {
  pts: Array<[number, number]>;
  color: string;
  label?: string;
  dash?: string;
  width?: number;
  markers?: boolean;
}

interface LineOpts {
  xLog?: boolean;
  yLog?: boolean;
  xLabel?: string;
  yLabel?: string;
  title?: string;
  yFromZero?: boolean;
}

function linePanel(doc: SvgDoc, f: Frame, series: Series[], opts: LineOpts): HeatScales {
  const xsAll: number[] = [];
  const ysAll: number[] = [];
  for (const s of series) {
    for (const [x, y] of s.pts) {
      if (Number.isFinite(x) && (!opts.xLog || x > 0)) xsAll.push(x);
      if (Number.isFinite(y) && (!opts.yLog || y > 0)) ysAll.push(y);
    }
  }
  let [xLo, xHi] = finiteRange(xsAll);
  let [yLo, yHi] = finiteRange(ysAll);
  if (opts.yFromZero && !opts.yLog) yLo = 0;
  const pad = (lo: number, hi: number, log: boolean | undefined): [number, number] => {
    if (log) return [lo / 1.15, hi * 1.15];
    const m = (hi - lo) * 0.05 || 0.5;
    return [lo - m, hi + m];
  };
  if (!opts.xLog) [xLo, xHi] = pad(xLo, xHi, false);
  else [xLo, xHi] = pad(xLo, xHi, true);
  const padded = pad(yLo, yHi, opts.yLog);
  if (opts.yFromZero && !opts.yLog) {
    yHi = padded[1];
  } else {
    [yLo, yHi] = padded;
  }
  const xScale = new Scale(xLo, xHi, f.x, f.x + f.w, !!opts.xLog);
  const yScale = new Scale(yLo, yHi, f.y + f.h, f.y, !!opts.yLog);
  for (const s of series) {
    const pts = s.pts
      .filter(([x, y]) => Number.isFinite(x) && Number.isFinite(y) && (!opts.xLog || x > 0) && (!opts.yLog || y > 0))
      .map(([x, y]) => [xScale.map(x), yScale.map(y)] as [number, number]);
    drawLine(doc, pts, { stroke: s.color, width: s.width ?? 1.8, dash: s.dash });
    if (s.markers) {
      for (const [mx, my] of pts) {
        doc.add(tag("circle", { cx: mx, cy: my, r: 2.2, fill: s.color }));
      }
    }
  }
  drawAxes(doc, f, xScale, yScale, {
    xLabel: opts.xLabel,
    yLabel: opts.yLabel,
    title: opts.title,
  });
  return { xScale, yScale };
}

function drawLegend(
  doc: SvgDoc,
  x: number,
  y: number,
  entries: Array<{ label: string; color: string; dash?: string }>,
): void {
  entries.forEach((e, i) => {
    const yy = y + i * 15;
    drawLine(doc, [
      [x, yy],
      [x + 20, yy],
    ], { stroke: e.color, width: 2, dash: e.dash });
    doc.text(x + 25, yy + 3.5, e.label, { size: 10 });
  });
}

// ── steady_tiles ────────────────────────────────────────

function renderSteadyTiles(md: ManifestDir, _style: FigureStyle): string {
  const cfg = kindConfig(md.manifest);
  const t = loadRole(md, "tiles", ["A", "B", "C", "value", "valid_flag"]);
  const grid = tiles(t, "A", "B");
  const value = t.col("value");
  const flag = t.col("valid_flag");

  const f: Frame = { x: 80, y: 52, w: 330, h: 300 };
  const doc = new SvgDoc(f.x + f.w + 140, f.y + f.h + 72);
  const [vLo, vHi] = finiteRange(value.filter((_, i) => flag[i] === 1));
  const norm = normalizer(vLo, vHi);
  const scales = drawHeatmap(
    doc,
    f,
    grid.xs,
    grid.ys,
    { xLog: axisLog(cfg, "grid_a"), yLog: axisLog(cfg, "grid_b") },
    (ix, iy) => {
      const r = grid.idx(ix, iy);
      if (r < 0) return null;
      if (flag[r] !== 1 || !Number.isFinite(value[r])) return INVALID_FILL;
      return seqColor(norm(value[r]));
    },
  );
  const title = typeof md.manifest.meta["value"] === "string"
    ? (md.manifest.meta["value"] as string)
    : "steady-state energy over B/2";
  drawAxes(doc, f, scales.xScale, scales.yScale, { xLabel: "A", yLabel: "B", title });
  drawColorbar(doc, f, seqColor, [fmt(vLo), fmt((vLo + vHi) / 2), fmt(vHi)], "energy / (B/2)");
  return doc.render();
}

// ── wigner_cuts ─────────────────────────────────────────

function renderWignerCuts(md: ManifestDir, _style: FigureStyle): string {
  const cases = metaList(md.manifest.meta, "cases", "meta") as Array<Record<string, unknown>>;
  const pw = 300;
  const ph = 220;
  const doc = new SvgDoc(80 + pw + 90 + pw + 40, 60 + cases.length * (ph + 72));

  cases.forEach((c, ci) => {
    const label = String(c["case"] ?? `case${ci}`);
    const rClassical = metaNum(c, "r_classical", `cases[${ci}]`);
    const cut = loadRole(md, "wigner_cut", ["x", "w", "w_guess"], (e) => entryField(e, "case") === label, label);
    const pops = loadRole(md, "populations", ["n", "p"], (e) => entryField(e, "case") === label, label);
    const rowY = 60 + ci * (ph + 72);

    const xCol = cut.col("x");
    const w = cut.col("w");
    const wGuess = cut.col("w_guess");
    const fCut: Frame = { x: 80, y: rowY, w: pw, h: ph };
    const title = `A = ${fmt(metaNum(c, "A", "case"))}, B = ${fmt(metaNum(c, "B", "case"))}, C = ${fmt(metaNum(c, "C", "case"))}`;
    const sc = linePanel(
      doc,
      fCut,
      [
        { pts: xCol.map((x, i) => [x, w[i]] as [number, number]), color: PALETTE[0], width: 2 },
        { pts: xCol.map((x, i) => [x, wGuess[i]] as [number, number]), color: PALETTE[1], dash: "6 3" },
      ],
      { xLabel: "x", yLabel: "W(x, 0)", title },
    );
    // Classical ring radius marker, dotted fuchsia by convention.
    const rx = sc.xScale.map(rClassical);
    drawLine(doc, [
      [rx, fCut.y],
      [rx, fCut.y + fCut.h],
    ], { stroke: "#ff00ff", width: 1.2, dash: "2 3", cls: "limit-cycle-cut" });
    drawLegend(doc, fCut.x + fCut.w - 118, fCut.y + 14, [
      { label: "radial cut", color: PALETTE[0] },
      { label: "ring ansatz", color: PALETTE[1], dash: "6 3" },
      { label: "classical radius", color: "#ff00ff", dash: "2 3" },
    ]);

    const n = pops.col("n");
    const p = pops.col("p");
    const fPop: Frame = { x: 80 + pw + 90, y: rowY, w: pw, h: ph };
    const nMax = Math.max(...n);
    const pMax = Math.max(...p);
    const xScale = new Scale(-0.5, nMax + 0.5, fPop.x, fPop.x + fPop.w);
    const yScale = new Scale(0, pMax * 1.08 || 1, fPop.y + fPop.h, fPop.y);
    const unit = xScale.pxPerUnit();
    n.forEach((ni, i) => {
      const barH = yScale.map(0) - yScale.map(p[i]);
      doc.add(
        tag("rect", {
          x: xScale.map(ni) - 0.4 * unit,
          y: yScale.map(p[i]),
          width: 0.8 * unit,
          height: barH,
          fill: PALETTE[0],
        }),
      );
    });
    drawAxes(doc, fPop, xScale, yScale, { xLabel: "n", yLabel: "P_n", title: "number populations" });
  });
  return doc.render();
}

// ── evolution_snapshots ─────────────────────────────────

interface WignerGrid {
  xs: number[];
  ys: number[];
  w: (ix: number, iy: number) => number;
  absMax: number;
}

function wignerGrid(t: Table): WignerGrid {
  const grid = tiles(t, "x", "p");
  const w = t.col("w");
  let absMax = 0;
  for (const v of w) if (Number.isFinite(v)) absMax = Math.max(absMax, Math.abs(v));
  return {
    xs: grid.xs,
    ys: grid.ys,
    w: (ix, iy) => {
      const r = grid.idx(ix, iy);
      return r < 0 ? NaN : w[r];
    },
    absMax,
  };
}

/**
 * One phase-space panel: diverging heatmap of W plus the standard overlays.
 * The limit-cycle radius comes in from the manifest rates; trajectories and
 * markers come from the trajectory tables.
 */
function wignerPanel(
  doc: SvgDoc,
  f: Frame,
  g: WignerGrid,
  vMax: number,
  overlays: {
    circleR: number;
    classicalPath?: Array<[number, number]>;
    meanPath?: Array<[number, number]>;
    classicalPoint?: [number, number];
    meanPoint?: [number, number];
  },
  axes: { title?: string; xLabel?: string; yLabel?: string },
): HeatScales {
  const scales = drawHeatmap(doc, f, g.xs, g.ys, {}, (ix, iy) => {
    const v = g.w(ix, iy);
    if (!Number.isFinite(v)) return null;
    const t = vMax === 0 ? 0.5 : (v / vMax + 1) / 2;
    return divColor(t);
  });
  const { xScale, yScale } = scales;

  // Marginal curves along the bottom (x) and left (p) edges: the plotted
  // grid summed across the other axis, peak-normalized for display.
  const mx = g.xs.map((_, ix) => g.ys.reduce((acc, _y, iy) => acc + (g.w(ix, iy) || 0), 0));
  const mp = g.ys.map((_, iy) => g.xs.reduce((acc, _x, ix) => acc + (g.w(ix, iy) || 0), 0));
  const mxMax = Math.max(...mx.map(Math.abs)) || 1;
  const mpMax = Math.max(...mp.map(Math.abs)) || 1;
  const rise = 0.16;
  drawLine(
    doc,
    g.xs.map((x, ix) => [xScale.map(x), f.y + f.h - (mx[ix] / mxMax) * rise * f.h] as [number, number]),
    { stroke: "#111111", width: 1, opacity: 0.85, cls: "marginal-x" },
  );
  drawLine(
    doc,
    g.ys.map((p, iy) => [f.x + (mp[iy] / mpMax) * rise * f.w, yScale.map(p)] as [number, number]),
    { stroke: "#111111", width: 1, opacity: 0.85, cls: "marginal-p" },
  );

  if (overlays.classicalPath) {
    drawLine(doc, overlays.classicalPath.map(([x, p]) => [xScale.map(x), yScale.map(p)] as [number, number]), {
      stroke: "#ff00ff",
      width: 1,
      opacity: 0.75,
      cls: "classical-path",
    });
  }
  if (overlays.meanPath) {
    drawLine(doc, overlays.meanPath.map(([x, p]) => [xScale.map(x), yScale.map(p)] as [number, number]), {
      stroke: "#333333",
      width: 1,
      cls: "mean-path",
    });
  }

  // Classical limit cycle x^2 + p^2 = (kappa1 - gamma1) / gamma2, drawn as
  // the conventional dotted fuchsia circle.
  doc.add(
    tag("circle", {
      class: "limit-cycle",
      cx: xScale.map(0),
      cy: yScale.map(0),
      r: overlays.circleR * xScale.pxPerUnit(),
      fill: "none",
      stroke: "#ff00ff",
      "stroke-width": 1.5,
      "stroke-dasharray": "2 3",
    }),
  );

  if (overlays.classicalPoint) {
    const [cx, cy] = overlays.classicalPoint;
    doc.add(
      tag("rect", {
        class: "classical-point",
        x: xScale.map(cx) - 3,
        y: yScale.map(cy) - 3,
        width: 6,
        height: 6,
        fill: "#ff00ff",
        stroke: "#ffffff",
        "stroke-width": 1,
      }),
    );
  }
  if (overlays.meanPoint) {
    const [ax, ay] = overlays.meanPoint;
    doc.add(
      tag("circle", {
        class: "mean-marker",
        cx: xScale.map(ax),
        cy: yScale.map(ay),
        r: 3.5,
        fill: "#111111",
        stroke: "#ffffff",
        "stroke-width": 1,
      }),
    );
  }

  drawAxes(doc, f, xScale, yScale, { ...axes, frameClass: "frame snap-frame", xTicks: 4, yTicks: 4 });
  return scales;
}

function nearestRow(ts: number[], t: number): number {
  let best = 0;
  let bestD = Infinity;
  ts.forEach((v, i) => {
    const d = Math.abs(v - t);
    if (d < bestD) {
      bestD = d;
      best = i;
    }
  });
  return best;
}

function renderEvolutionSnapshots(md: ManifestDir, style: FigureStyle): string {
  const cases = metaList(md.manifest.meta, "cases", "meta") as Array<Record<string, unknown>>;
  const side = 200;
  const gapX = 26;
  const gapY = 84;
  const maxCols = Math.max(...cases.map((c) => metaList(c, "times", "case").length));
  const doc = new SvgDoc(
    70 + maxCols * (side + gapX) + 110,
    66 + cases.length * (side + gapY),
  );

  cases.forEach((c, ci) => {
    const label = String(c["case"] ?? `case${ci}`);
    const times = metaList(c, "times", `cases[${ci}]`) as number[];
    const kappa1 = metaNum(c, "kappa1", `cases[${ci}]`);
    const gamma1 = metaNum(c, "gamma1", `cases[${ci}]`);
    const gamma2 = metaNum(c, "gamma2", `cases[${ci}]`);
    const circleR = Math.sqrt((kappa1 - gamma1) / gamma2);

    const traj = loadRole(md, "trajectory", ["t", "re_a", "im_a"], (e) => entryField(e, "case") === label, label);
    const classical = loadRole(
      md,
      "classical_trajectory",
      ["t", "re_alpha", "im_alpha"],
      (e) => entryField(e, "case") === label,
      label,
    );
    const trajT = traj.col("t");
    const trajX = traj.col("re_a").map((v) => SQRT2 * v);
    const trajP = traj.col("im_a").map((v) => SQRT2 * v);
    const clT = classical.col("t");
    const clX = classical.col("re_alpha").map((v) => SQRT2 * v);
    const clP = classical.col("im_alpha").map((v) => SQRT2 * v);

    const grids = times.map((tj, j) => {
      const entry = requireFile(
        md.manifest,
        "wigner_snapshot",
        (e) => entryField(e, "case") === label && entryField(e, "time") === tj,
        `${label}, t = ${fmt(tj)}`,
      );
      return wignerGrid(loadTable(md, entry, ["x", "p", "w"]));
    });
    const rowMax = Math.max(...grids.map((g) => g.absMax));

    const rowY = 66 + ci * (side + gapY);
    doc.text(70, rowY - 26, `${label}:  β = ${String(c["beta"] ?? "?")},  κ₁ = ${fmt(kappa1)},  γ₁ = ${fmt(gamma1)},  γ₂ = ${fmt(gamma2)}`, {
      bold: true,
      size: 12,
    });

    times.forEach((tj, j) => {
      const f: Frame = { x: 70 + j * (side + gapX), y: rowY, w: side, h: side };
      const upTo = (ts: number[], xs: number[], ps: number[]) => {
        const pts: Array<[number, number]> = [];
        for (let i = 0; i < ts.length; i++) {
          if (ts[i] <= tj + 1e-12) pts.push([xs[i], ps[i]]);
        }
        return pts;
      };
      const ti = nearestRow(trajT, tj);
      const cli = nearestRow(clT, tj);
      wignerPanel(
        doc,
        f,
        grids[j],
        style.normalizePerPanel === false ? rowMax : grids[j].absMax,
        {
          circleR,
          classicalPath: upTo(clT, clX, clP),
          meanPath: upTo(trajT, trajX, trajP),
          classicalPoint: [clX[cli], clP[cli]],
          meanPoint: [trajX[ti], trajP[ti]],
        },
        { title: `t = ${fmt(tj)}`, xLabel: "x", yLabel: j === 0 ? "p" : undefined },
      );
      if (j === times.length - 1) {
        drawColorbar(doc, f, divColor, ["-1", "0", "+1"], "W / max|W|");
      }
    });
  });
  return doc.render();
}

// ── coherence_tiles ─────────────────────────────────────

function renderCoherenceTiles(md: ManifestDir, _style: FigureStyle): string {
  const entries = filesByRole(md.manifest, "coherence_deviation");
  if (entries.length === 0) {
    requireFile(md.manifest, "coherence_deviation");
  }
  const sorted = [...entries].sort(
    (a, b) => Number(entryField(a, "time") ?? 0) - Number(entryField(b, "time") ?? 0),
  );
  const floor = typeof md.manifest.meta["display_floor"] === "number"
    ? (md.manifest.meta["display_floor"] as number)
    : 1e-3;

  const tablesData = sorted.map((e) => {
    const t = loadTable(md, e, ["m", "n", "value"]);
    return { grid: tiles(t, "n", "m"), value: t.col("value"), time: Number(entryField(e, "time") ?? 0) };
  });
  let vMax = floor;
  for (const td of tablesData) {
    for (const v of td.value) if (Number.isFinite(v)) vMax = Math.max(vMax, v);
  }
  const lf = Math.log10(floor);
  const lm = Math.log10(vMax);

  const side = 220;
  const gapX = 30;
  const doc = new SvgDoc(70 + tablesData.length * (side + gapX) + 110, 66 + side + 60);
  tablesData.forEach((td, j) => {
    const f: Frame = { x: 70 + j * (side + gapX), y: 56, w: side, h: side };
    const scales = drawHeatmap(doc, f, td.grid.xs, td.grid.ys, { yDown: true }, (ix, iy) => {
      const r = td.grid.idx(ix, iy);
      if (r < 0) return null;
      const v = td.value[r];
      const t = !Number.isFinite(v) || v <= floor ? 0 : (Math.log10(v) - lf) / (lm - lf || 1);
      return seqColor(t);
    });
    drawAxes(doc, f, scales.xScale, scales.yScale, {
      xLabel: "n",
      yLabel: j === 0 ? "m" : undefined,
      title: `t = ${fmt(td.time)}`,
      xTicks: 4,
      yTicks: 4,
    });
    if (j === tablesData.length - 1) {
      drawColorbar(
        doc,
        f,
        seqColor,
        [fmt(floor), fmt(Math.pow(10, (lf + lm) / 2)), fmt(vMax)],
        "|ρ(t) − ρ_ss| (log)",
      );
    }
  });
  return doc.render();
}

// ── negativity_traces ───────────────────────────────────

function renderNegativityTraces(md: ManifestDir, _style: FigureStyle): string {
  const traceEntries = filesByRole(md.manifest, "negativity_trace");
  if (traceEntries.length === 0) {
    requireFile(md.manifest, "negativity_trace");
  }
  const insetEntries = filesByRole(md.manifest, "negativity_trace_inset");

  const fMain: Frame = { x: 80, y: 52, w: 400, h: 290 };
  const hasInset = insetEntries.length > 0;
  const fInset: Frame = { x: fMain.x + fMain.w + 90, y: 52, w: 230, h: 180 };
  const doc = new SvgDoc(
    hasInset ? fInset.x + fInset.w + 40 : fMain.x + fMain.w + 60,
    fMain.y + fMain.h + 70,
  );

  const loadSeries = (entries: FileEntry[]): Series[] =>
    entries.map((e, i) => {
      const t = loadTable(md, e, ["t", "V"]);
      const ts = t.col("t");
      const vs = t.col("V");
      return {
        pts: ts.map((x, k) => [x, vs[k]] as [number, number]),
        color: PALETTE[i % PALETTE.length],
        label: String(entryField(e, "state") ?? e.path),
        markers: true,
      };
    });

  const main = loadSeries(traceEntries);
  linePanel(doc, fMain, main, {
    xLabel: "t",
    yLabel: "V",
    title: "negative-volume evolution",
    yFromZero: true,
  });
  drawLegend(
    doc,
    fMain.x + fMain.w - 150,
    fMain.y + 16,
    main.map((s) => ({ label: s.label ?? "", color: s.color })),
  );

  if (hasInset) {
    const inset = loadSeries(insetEntries);
    const tMax = Math.max(...inset.flatMap((s) => s.pts.map(([x]) => x)));
    linePanel(doc, fInset, inset, {
      xLabel: "t",
      yLabel: "V",
      title: `inset: t ≤ ${fmt(tMax)}`,
    });
  }
  return doc.render();
}

// ── gap_tiles ───────────────────────────────────────────

/** Log-scale color normalization over strictly positive values. */
function logNorm(values: number[]): { t: (v: number) => number; lo: number; hi: number } {
  const pos = values.filter((v) => Number.isFinite(v) && v > 0);
  const [lo, hi] = finiteRange(pos);
  const la = Math.log10(lo);
  const lb = Math.log10(hi);
  return {
    t: (v) => (!Number.isFinite(v) || v <= 0 ? 0 : lb === la ? 0.5 : (Math.log10(v) - la) / (lb - la)),
    lo,
    hi,
  };
}

function renderGapTiles(md: ManifestDir, _style: FigureStyle): string {
  const cfg = kindConfig(md.manifest);
  const xLog = axisLog(cfg, "grid_a");
  const yLog = axisLog(cfg, "grid_b");
  const dims = metaList(md.manifest.meta, "dims", "meta").map((d) => Number(d));

  const gapTables = dims.map((dim) => ({
    dim,
    table: loadRole(md, "gap_tile", ["A", "B", "value", "valid_flag", "valid"], (e) => entryField(e, "dim") === dim, `N = ${dim}`),
  }));
  const nhiTable = loadRole(md, "n_hi_tile", ["A", "B", "n_hi", "valid_flag"]);

  const side = 230;
  const gapX = 108;
  const gapY = 92;
  const cols = dims.length + 1;
  const doc = new SvgDoc(80 + cols * (side + gapX) + 20, 60 + 2 * (side + gapY) + 10);

  const gapNorm = logNorm(gapTables.flatMap(({ table }) => {
    const v = table.col("value");
    const fl = table.col("valid_flag");
    return v.filter((_, i) => fl[i] === 1);
  }));

  gapTables.forEach(({ dim, table }, di) => {
    const grid = tiles(table, "A", "B");
    const value = table.col("value");
    const flag = table.col("valid_flag");
    const trusted = table.col("valid");
    const f: Frame = { x: 80 + di * (side + gapX), y: 56, w: side, h: side };
    const scales = drawHeatmap(doc, f, grid.xs, grid.ys, { xLog, yLog }, (ix, iy) => {
      const r = grid.idx(ix, iy);
      if (r < 0) return null;
      if (flag[r] !== 1 || !Number.isFinite(value[r])) return INVALID_FILL;
      return seqColor(gapNorm.t(value[r]));
    });
    // Slash cells whose truncation is not trusted (n_hi too close to N).
    const xe = cellEdges(grid.xs, xLog);
    const ye = cellEdges(grid.ys, yLog);
    for (let ix = 0; ix < grid.xs.length; ix++) {
      for (let iy = 0; iy < grid.ys.length; iy++) {
        const r = grid.idx(ix, iy);
        if (r < 0 || flag[r] !== 1 || trusted[r] === 1) continue;
        doc.add(
          tag("line", {
            class: "untrusted-cell",
            x1: scales.xScale.map(xe[ix]),
            y1: scales.yScale.map(ye[iy]),
            x2: scales.xScale.map(xe[ix + 1]),
            y2: scales.yScale.map(ye[iy + 1]),
            stroke: "#ffffff",
            "stroke-width": 0.8,
          }),
        );
      }
    }
    drawAxes(doc, f, scales.xScale, scales.yScale, {
      xLabel: "A",
      yLabel: di === 0 ? "B" : undefined,
      title: `spectral gap, N = ${dim}`,
    });
    if (di === dims.length - 1) {
      drawColorbar(doc, f, seqColor, [fmt(gapNorm.lo), fmt(Math.sqrt(gapNorm.lo * gapNorm.hi)), fmt(gapNorm.hi)], "gap (log)");
    }
  });

  {
    const grid = tiles(nhiTable, "A", "B");
    const nhi = nhiTable.col("n_hi");
    const flag = nhiTable.col("valid_flag");
    const [lo, hi] = finiteRange(nhi.filter((_, i) => flag[i] === 1));
    const norm = normalizer(lo, hi);
    const f: Frame = { x: 80 + dims.length * (side + gapX), y: 56, w: side, h: side };
    const scales = drawHeatmap(doc, f, grid.xs, grid.ys, { xLog, yLog }, (ix, iy) => {
      const r = grid.idx(ix, iy);
      if (r < 0) return null;
      if (flag[r] !== 1 || !Number.isFinite(nhi[r])) return INVALID_FILL;
      return seqColor(norm(nhi[r]));
    });
    drawAxes(doc, f, scales.xScale, scales.yScale, { xLabel: "A", title: "analytic n_hi" });
    drawColorbar(doc, f, seqColor, [fmt(lo), fmt((lo + hi) / 2), fmt(hi)], "n_hi");
  }

  // Second row: slices along each axis and the leading-eigenvalue scatter.
  const rowY = 56 + side + gapY;
  const sliceSeries = (role: string, xCol: string): { series: Series[]; fixedLabel: string } => {
    const series: Series[] = [];
    let fixedLabel = "";
    dims.forEach((dim, di) => {
      const entry = requireFile(md.manifest, role, (e) => entryField(e, "dim") === dim, `N = ${dim}`);
      const t = loadTable(md, entry, [xCol, "value", "valid_flag"]);
      const xs = t.col(xCol);
      const vs = t.col("value");
      const fl = t.col("valid_flag");
      const fixed = role === "gap_slice_a" ? entryField(entry, "fixed_b") : entryField(entry, "fixed_a");
      fixedLabel = `${role === "gap_slice_a" ? "B" : "A"} = ${fmt(Number(fixed ?? NaN))}`;
      series.push({
        pts: xs.map((x, i) => [x, fl[i] === 1 ? vs[i] : NaN] as [number, number]),
        color: PALETTE[di % PALETTE.length],
        label: `N = ${dim}`,
        markers: true,
      });
    });
    return { series, fixedLabel };
  };

  {
    const { series, fixedLabel } = sliceSeries("gap_slice_a", "A");
    const f: Frame = { x: 80, y: rowY, w: side, h: side };
    linePanel(doc, f, series, {
      xLog,
      yLog: true,
      xLabel: "A",
      yLabel: "gap",
      title: `slice at ${fixedLabel}`,
    });
    drawLegend(doc, f.x + 10, f.y + 14, series.map((s) => ({ label: s.label ?? "", color: s.color })));
  }
  {
    const { series, fixedLabel } = sliceSeries("gap_slice_b", "B");
    const f: Frame = { x: 80 + (side + gapX), y: rowY, w: side, h: side };
    linePanel(doc, f, series, {
      xLog: yLog,
      yLog: true,
      xLabel: "B",
      yLabel: "gap",
      title: `slice at ${fixedLabel}`,
    });
  }
  {
    const entry = requireFile(md.manifest, "spectrum_scatter");
    const t = loadTable(md, entry, ["B", "j", "re_lambda", "im_lambda"]);
    const bRaw = t.strCol("B");
    const re = t.col("re_lambda");
    const im = t.col("im_lambda");
    const f: Frame = { x: 80 + 2 * (side + gapX), y: rowY, w: side, h: side };
    const [xLo, xHi] = finiteRange(re);
    const [yLo, yHi] = finiteRange(im);
    const padX = (xHi - xLo) * 0.08 || 0.5;
    const padY = (yHi - yLo) * 0.08 || 0.5;
    const xScale = new Scale(xLo - padX, xHi + padX, f.x, f.x + f.w);
    const yScale = new Scale(yLo - padY, yHi + padY, f.y + f.h, f.y);
    const groups: string[] = [];
    for (const s of bRaw) if (!groups.includes(s)) groups.push(s);
    bRaw.forEach((s, i) => {
      const gi = groups.indexOf(s);
      const cx = xScale.map(re[i]);
      const cy = yScale.map(im[i]);
      doc.add(
        tag("path", {
          class: "eig-marker",
          d: `M${fmtPx(cx - 3)} ${fmtPx(cy - 3)}L${fmtPx(cx + 3)} ${fmtPx(cy + 3)}M${fmtPx(cx - 3)} ${fmtPx(cy + 3)}L${fmtPx(cx + 3)} ${fmtPx(cy - 3)}`,
          stroke: PALETTE[gi % PALETTE.length],
          "stroke-width": 1.5,
          fill: "none",
        }),
      );
    });
    const cFixed = entryField(entry, "c_fixed");
    drawAxes(doc, f, xScale, yScale, {
      xLabel: "Re λ",
      yLabel: "Im λ",
      title: `leading eigenvalues at C = ${fmt(Number(cFixed ?? NaN))}`,
    });
    drawLegend(
      doc,
      f.x + 10,
      f.y + 14,
      groups.map((s, gi) => ({ label: `B = ${fmt(Number(s))}`, color: PALETTE[gi % PALETTE.length] })),
    );
  }
  return doc.render();
}

function fmtPx(v: number): string {
  const r = Math.round(v * 100) / 100;
  return Object.is(r, -0) ? "0" : String(r);
}

// ── tss_tiles ───────────────────────────────────────────

function renderTssTiles(md: ManifestDir, _style: FigureStyle): string {
  const cfg = kindConfig(md.manifest);
  const xLog = axisLog(cfg, "grid_a");
  const yLog = axisLog(cfg, "grid_b");
  const entries = filesByRole(md.manifest, "tss_tile");
  if (entries.length === 0) {
    requireFile(md.manifest, "tss_tile");
  }

  const data = entries.map((e) => {
    const t = loadTable(md, e, ["A", "B", "T_ss", "converged_flag"]);
    return {
      grid: tiles(t, "A", "B"),
      tss: t.col("T_ss"),
      flag: t.col("converged_flag"),
      state: String(entryField(e, "state") ?? "?"),
      energy: Number(entryField(e, "energy") ?? NaN),
    };
  });
  const norm = logNorm(data.flatMap((d) => d.tss.filter((_, i) => d.flag[i] === 1)));

  const side = 230;
  const gapX = 46;
  const gapY = 92;
  const perRow = Math.min(3, data.length);
  const nRows = Math.ceil(data.length / perRow);
  const doc = new SvgDoc(80 + perRow * (side + gapX) + 110, 60 + nRows * (side + gapY));

  data.forEach((d, i) => {
    const col = i % perRow;
    const row = Math.floor(i / perRow);
    const f: Frame = { x: 80 + col * (side + gapX), y: 56 + row * (side + gapY), w: side, h: side };
    const scales = drawHeatmap(doc, f, d.grid.xs, d.grid.ys, { xLog, yLog }, (ix, iy) => {
      const r = d.grid.idx(ix, iy);
      if (r < 0) return null;
      if (d.flag[r] !== 1 || !Number.isFinite(d.tss[r])) return INVALID_FILL;
      return seqColor(norm.t(d.tss[r]));
    });
    drawAxes(doc, f, scales.xScale, scales.yScale, {
      xLabel: "A",
      yLabel: col === 0 ? "B" : undefined,
      title: `${d.state}, E₀ = ${fmt(d.energy)}`,
    });
    if (i === data.length - 1) {
      drawColorbar(
        doc,
        f,
        seqColor,
        [fmt(norm.lo), fmt(Math.sqrt(norm.lo * norm.hi)), fmt(norm.hi)],
        "T_ss (log)",
      );
    }
  });
  return doc.render();
}

// ── tss_slices ──────────────────────────────────────────

function renderTssSlices(md: ManifestDir, _style: FigureStyle): string {
  const cfg = kindConfig(md.manifest);
  const meta = md.manifest.meta;
  const factor = typeof meta["factor"] === "number" ? (meta["factor"] as number) : NaN;
  const panels: Array<{ role: string; xCol: string; xLogKey: string; title: string }> = [
    { role: "tss_slice_fixed_a", xCol: "B", xLogKey: "grid_b", title: `A = ${fmt(metaNum(meta, "a_star", "meta"))}` },
    { role: "tss_slice_fixed_b", xCol: "A", xLogKey: "grid_a", title: `B = ${fmt(metaNum(meta, "b_star", "meta"))}` },
    { role: "tss_slice_fixed_c", xCol: "A", xLogKey: "grid_a", title: `C = ${fmt(metaNum(meta, "c_star", "meta"))}` },
  ];

  const side = 250;
  const gapX = 92;
  const doc = new SvgDoc(80 + panels.length * (side + gapX) + 20, 60 + side + 72);

  panels.forEach((p, pi) => {
    const t = loadRole(md, p.role, [p.xCol, "state", "T_ss", "converged_flag", "scaled_inverse_gap"]);
    const xs = t.col(p.xCol);
    const states = t.strCol("state");
    const tss = t.col("T_ss");
    const flag = t.col("converged_flag");
    const ref = t.col("scaled_inverse_gap");

    const stateNames: string[] = [];
    for (const s of states) if (!stateNames.includes(s)) stateNames.push(s);
    const series: Series[] = stateNames.map((name, si) => {
      const pts: Array<[number, number]> = [];
      xs.forEach((x, i) => {
        if (states[i] === name && flag[i] === 1) pts.push([x, tss[i]]);
      });
      return { pts, color: PALETTE[si % PALETTE.length], label: name, markers: true };
    });
    const refPts: Array<[number, number]> = [];
    const seen = new Set<string>();
    xs.forEach((x, i) => {
      const key = t.rows[i][p.xCol];
      if (seen.has(key)) return;
      seen.add(key);
      refPts.push([x, ref[i]]);
    });
    series.push({
      pts: refPts,
      color: "#111111",
      dash: "6 3",
      label: Number.isFinite(factor) ? `${fmt(factor)} / gap` : "scaled 1/gap",
    });

    const f: Frame = { x: 80 + pi * (side + gapX), y: 56, w: side, h: side };
    linePanel(doc, f, series, {
      xLog: axisLog(cfg, p.xLogKey),
      yLog: true,
      xLabel: p.xCol,
      yLabel: pi === 0 ? "T_ss" : undefined,
      title: p.title,
    });
    if (pi === 0) {
      drawLegend(doc, f.x + 10, f.y + 14, series.map((s) => ({ label: s.label ?? "", color: s.color, dash: s.dash })));
    }
  });
  return doc.render();
}

// ── dispatch ────────────────────────────────────────────

const RENDERERS: Record<string, (md: ManifestDir, style: FigureStyle) => string> = {
  steady_tiles: renderSteadyTiles,
  wigner_cuts: renderWignerCuts,
  evolution_snapshots: renderEvolutionSnapshots,
  coherence_tiles: renderCoherenceTiles,
  negativity_traces: renderNegativityTraces,
  gap_tiles: renderGapTiles,
  tss_tiles: renderTssTiles,
  tss_slices: renderTssSlices,
};

export const RENDERABLE_KINDS = Object.keys(RENDERERS);
