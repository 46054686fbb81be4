/**
 * Minimal SVG document builder. Elements are plain strings assembled in a
 * fixed order with fixed attribute order, so identical inputs give an
 * identical byte stream.
 */

import { Scale, fmt } from "./scale.js";

export interface Frame {
  x: number;
  y: number;
  w: number;
  h: number;
}

const XML_ESCAPES: Record<string, string> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
};

export function esc(s: string): string {
  return s.replace(/[&<>"]/g, (c) => XML_ESCAPES[c]);
}

/** Fixed-precision coordinate formatting keeps the output stable. */
export function px(v: number): string {
  const r = Math.round(v * 100) / 100;
  return Object.is(r, -0) ? "0" : String(r);
}

export function tag(
  name: string,
  attrs: Record<string, string | number>,
  content?: string,
): string {
  let s = `<${name}`;
  for (const [k, v] of Object.entries(attrs)) {
    s += ` ${k}="${typeof v === "number" ? px(v) : esc(v)}"`;
  }
  return content === undefined ? s + "/>" : s + `>${content}</${name}>`;
}

export class SvgDoc {
  private parts: string[] = [];
  private defs: string[] = [];

  constructor(readonly width: number, readonly height: number) {}

  add(s: string): void {
    this.parts.push(s);
  }

  addDef(s: string): void {
    this.defs.push(s);
  }

  text(
    x: number,
    y: number,
    content: string,
    opts: { size?: number; anchor?: string; fill?: string; rotate?: boolean; bold?: boolean } = {},
  ): void {
    const attrs: Record<string, string | number> = {
      x,
      y,
      "font-family": "Helvetica, Arial, sans-serif",
      "font-size": opts.size ?? 11,
      "text-anchor": opts.anchor ?? "start",
      fill: opts.fill ?? "#222",
    };
    if (opts.bold) attrs["font-weight"] = "bold";
    if (opts.rotate) attrs.transform = `rotate(-90 ${px(x)} ${px(y)})`;
    this.add(tag("text", attrs, esc(content)));
  }

  render(): string {
    const head = tag("svg", {
      xmlns: "http://www.w3.org/2000/svg",
      width: this.width,
      height: this.height,
      viewBox: `0 0 ${this.width} ${this.height}`,
    }).replace(/\/>$/, ">");
    const defs = this.defs.length ? `<defs>${this.defs.join("")}</defs>` : "";
    const bg = tag("rect", { x: 0, y: 0, width: this.width, height: this.height, fill: "#ffffff" });
    return `${head}${defs}${bg}${this.parts.join("")}</svg>\n`;
  }
}

// ── Colormaps ───────────────────────────────────────────

type Rgb = [number, number, number];

// Perceptually ordered dark-to-bright ramp for magnitude heatmaps.
const SEQUENTIAL: Rgb[] = [
  [68, 1, 84],
  [71, 44, 122],
  [59, 81, 139],
  [44, 113, 142],
  [33, 144, 141],
  [39, 173, 129],
  [92, 200, 99],
  [170, 220, 50],
  [253, 231, 37],
];

// Blue-white-red ramp for signed data (Wigner functions).
const DIVERGING: Rgb[] = [
  [33, 102, 172],
  [103, 169, 207],
  [209, 229, 240],
  [247, 247, 247],
  [253, 219, 199],
  [239, 138, 98],
  [178, 24, 43],
];

function ramp(anchors: Rgb[]): (t: number) => string {
  return (t: number) => {
    const u = Math.min(1, Math.max(0, t)) * (anchors.length - 1);
    const i = Math.min(anchors.length - 2, Math.floor(u));
    const f = u - i;
    const hex = (k: number) => {
      const v = Math.round(anchors[i][k] + f * (anchors[i + 1][k] - anchors[i][k]));
      return v.toString(16).padStart(2, "0");
    };
    return `#${hex(0)}${hex(1)}${hex(2)}`;
  };
}

/** t in [0, 1] -> color for unsigned magnitudes. */
export const seqColor = ramp(SEQUENTIAL);

/** t in [0, 1] with 0.5 at zero -> color for signed values. */
export const divColor = ramp(DIVERGING);

/** Fill used for cells flagged invalid ("blacked-out" convention). */
export const INVALID_FILL = "#000000";

// ── Panel chrome ────────────────────────────────────────

export interface AxisOpts {
  xLabel?: string;
  yLabel?: string;
  title?: string;
  xTicks?: number;
  yTicks?: number;
  frameClass?: string;
}

/**
 * Draw the frame rectangle, ticks, tick labels, axis labels, and title for
 * one panel. Returns nothing; the caller draws panel content first so the
 * frame sits on top of heatmap cell edges.
 */
export function drawAxes(doc: SvgDoc, f: Frame, xs: Scale, ys: Scale, opts: AxisOpts = {}): void {
  doc.add(
    tag("rect", {
      class: opts.frameClass ?? "frame",
      x: f.x,
      y: f.y,
      width: f.w,
      height: f.h,
      fill: "none",
      stroke: "#333",
      "stroke-width": 1,
    }),
  );
  for (const t of xs.ticks(opts.xTicks ?? 5)) {
    const xp = xs.map(t);
    if (xp < f.x - 0.5 || xp > f.x + f.w + 0.5) continue;
    doc.add(tag("line", { x1: xp, y1: f.y + f.h, x2: xp, y2: f.y + f.h + 4, stroke: "#333" }));
    doc.text(xp, f.y + f.h + 15, fmt(t), { anchor: "middle", size: 10 });
  }
  for (const t of ys.ticks(opts.yTicks ?? 5)) {
    const yp = ys.map(t);
    if (yp < f.y - 0.5 || yp > f.y + f.h + 0.5) continue;
    doc.add(tag("line", { x1: f.x - 4, y1: yp, x2: f.x, y2: yp, stroke: "#333" }));
    doc.text(f.x - 6, yp + 3.5, fmt(t), { anchor: "end", size: 10 });
  }
  if (opts.xLabel) doc.text(f.x + f.w / 2, f.y + f.h + 30, opts.xLabel, { anchor: "middle" });
  if (opts.yLabel) doc.text(f.x - 40, f.y + f.h / 2, opts.yLabel, { anchor: "middle", rotate: true });
  if (opts.title) doc.text(f.x + f.w / 2, f.y - 8, opts.title, { anchor: "middle", bold: true });
}

export function polylinePath(pts: Array<[number, number]>): string {
  return pts.map(([x, y], i) => `${i === 0 ? "M" : "L"}${px(x)} ${px(y)}`).join("");
}

export function drawLine(
  doc: SvgDoc,
  pts: Array<[number, number]>,
  opts: { stroke: string; width?: number; dash?: string; cls?: string; opacity?: number } = { stroke: "#000" },
): void {
  if (pts.length === 0) return;
  const attrs: Record<string, string | number> = {
    d: polylinePath(pts),
    fill: "none",
    stroke: opts.stroke,
    "stroke-width": opts.width ?? 1.5,
  };
  if (opts.cls) attrs.class = opts.cls;
  if (opts.dash) attrs["stroke-dasharray"] = opts.dash;
  if (opts.opacity !== undefined) attrs.opacity = opts.opacity;
  doc.add(tag("path", attrs));
}

/**
 * Vertical colorbar to the right of a panel. `stops` maps t in [0, 1] to a
 * color; labels are written at the bottom, middle, and top.
 */
export function drawColorbar(
  doc: SvgDoc,
  f: Frame,
  color: (t: number) => string,
  labels: [string, string, string],
  title?: string,
): void {
  const bx = f.x + f.w + 10;
  const bw = 12;
  const n = 48;
  const step = f.h / n;
  for (let i = 0; i < n; i++) {
    doc.add(
      tag("rect", {
        x: bx,
        y: f.y + f.h - (i + 1) * step,
        width: bw,
        height: step + 0.3,
        fill: color((i + 0.5) / n),
      }),
    );
  }
  doc.add(tag("rect", { x: bx, y: f.y, width: bw, height: f.h, fill: "none", stroke: "#333", "stroke-width": 0.8 }));
  doc.text(bx + bw + 4, f.y + f.h + 3, labels[0], { size: 9 });
  doc.text(bx + bw + 4, f.y + f.h / 2 + 3, labels[1], { size: 9 });
  doc.text(bx + bw + 4, f.y + 8, labels[2], { size: 9 });
  if (title) doc.text(bx + bw + 34, f.y + f.h / 2, title, { anchor: "middle", rotate: true, size: 10 });
}
