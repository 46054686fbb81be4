/**
 * Axis scales, tick generation, and deterministic number formatting.
 * Everything here is a pure function of its inputs so that re-rendering
 * a figure reproduces the output byte for byte.
 */

export class Scale {
  constructor(
    readonly lo: number,
    readonly hi: number,
    readonly rLo: number,
    readonly rHi: number,
    readonly log = false,
  ) {
    if (log && (lo <= 0 || hi <= 0)) {
      throw new Error(`log scale needs a positive domain, got [${lo}, ${hi}]`);
    }
  }

  map(v: number): number {
    let t: number;
    if (this.log) {
      t = (Math.log(v) - Math.log(this.lo)) / (Math.log(this.hi) - Math.log(this.lo));
    } else {
      t = this.hi === this.lo ? 0.5 : (v - this.lo) / (this.hi - this.lo);
    }
    return this.rLo + t * (this.rHi - this.rLo);
  }

  /** Pixels covered by one domain unit; only meaningful for linear scales. */
  pxPerUnit(): number {
    return (this.rHi - this.rLo) / (this.hi - this.lo);
  }

  ticks(target = 5): number[] {
    return this.log ? logTicks(this.lo, this.hi, target) : linTicks(this.lo, this.hi, target);
  }
}

function linTicks(lo: number, hi: number, target: number): number[] {
  if (hi === lo) return [lo];
  const span = hi - lo;
  const raw = span / Math.max(1, target);
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const norm = raw / mag;
  const step = (norm >= 5 ? 10 : norm >= 2 ? 5 : norm >= 1 ? 2 : 1) * mag;
  const out: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) {
    out.push(Math.abs(v) < 1e-12 * span ? 0 : v);
  }
  return out;
}

function logTicks(lo: number, hi: number, target: number): number[] {
  const dLo = Math.ceil(Math.log10(lo) - 1e-9);
  const dHi = Math.floor(Math.log10(hi) + 1e-9);
  const decades: number[] = [];
  for (let d = dLo; d <= dHi; d++) decades.push(Math.pow(10, d));
  if (decades.length >= 2) {
    if (decades.length > target) {
      const stride = Math.ceil(decades.length / target);
      return decades.filter((_, i) => i % stride === 0);
    }
    return decades;
  }
  // Domain inside one decade: endpoints plus the geometric midpoint.
  return [lo, Math.sqrt(lo * hi), hi];
}

/** Compact deterministic label for an axis tick or colorbar stop. */
export function fmt(v: number): string {
  if (!Number.isFinite(v)) return String(v);
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) {
    const s = v.toExponential(1);
    return s.replace(/\.0e/, "e").replace(/e\+?(-?)0*(\d)/, "e$1$2");
  }
  return String(parseFloat(v.toPrecision(4)));
}

/**
 * Cell boundaries for a heatmap axis: midpoints between consecutive centers
 * (geometric midpoints on log axes), with the end cells mirrored outward.
 */
export function cellEdges(centers: number[], log: boolean): number[] {
  const n = centers.length;
  if (n === 0) return [];
  if (n === 1) {
    const c = centers[0];
    return log ? [c / 1.25, c * 1.25] : [c - 0.5, c + 0.5];
  }
  const mid = (a: number, b: number) => (log ? Math.sqrt(a * b) : (a + b) / 2);
  const edges: number[] = [];
  const first = mid(centers[0], centers[1]);
  edges.push(log ? (centers[0] * centers[0]) / first : 2 * centers[0] - first);
  for (let i = 0; i + 1 < n; i++) edges.push(mid(centers[i], centers[i + 1]));
  const last = edges[edges.length - 1];
  edges.push(log ? (centers[n - 1] * centers[n - 1]) / last : 2 * centers[n - 1] - last);
  return edges;
}
