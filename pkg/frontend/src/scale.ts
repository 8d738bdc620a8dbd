/** Invertible linear axis scales and tick placement. */

export interface Scale {
  domain: [number, number];
  range: [number, number];
  apply(v: number): number;
  invert(px: number): number;
}

export function linearScale(
  domain: [number, number],
  range: [number, number],
): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 === 0 ? 1 : d1 - d0;
  const k = (r1 - r0) / span;
  return {
    domain,
    range,
    apply: (v) => r0 + (v - d0) * k,
    invert: (px) => d0 + (px - r0) / k,
  };
}

/** Data extent with symmetric padding; degenerate extents get a unit pad. */
export function paddedExtent(values: number[], pad = 0.05): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!Number.isFinite(lo) || !Number.isFinite(hi)) {
    throw new Error("extent of empty or non-finite data");
  }
  if (lo === hi) {
    const unit = lo === 0 ? 1 : Math.abs(lo) * 0.5;
    return [lo - unit, hi + unit];
  }
  const w = (hi - lo) * pad;
  return [lo - w, hi + w];
}

export function ticks(lo: number, hi: number, count = 5): number[] {
  const span = hi - lo;
  if (span <= 0) return [lo];
  const step0 = span / Math.max(count, 1);
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (mag * m >= step0) {
      step = mag * m;
      break;
    }
  }
  const first = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = first; v <= hi + step * 1e-9; v += step) {
    out.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return out;
}
