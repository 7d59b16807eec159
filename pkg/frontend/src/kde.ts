/** Gaussian kernel density estimation with a rule-of-thumb bandwidth. */

import { deviation, max, min, quantile } from "d3-array";

/**
 * Silverman's rule of thumb: 0.9 * min(sd, IQR/1.34) * n^(-1/5).
 * Returns 0 when the data carry no spread (degenerate series).
 */
export function silvermanBandwidth(values: number[]): number {
  if (values.length < 2) return 0;
  const sd = deviation(values) ?? 0;
  const sorted = [...values].sort((a, b) => a - b);
  const iqr =
    (quantile(sorted, 0.75) ?? 0) - (quantile(sorted, 0.25) ?? 0);
  const scale = iqr > 0 ? Math.min(sd, iqr / 1.34) : sd;
  if (scale <= 0) return 0;
  return 0.9 * scale * Math.pow(values.length, -0.2);
}

/** Density curve over `points` evenly spaced grid positions. */
export function kdeCurve(
  values: number[],
  bandwidth: number,
  points = 80,
): Array<[number, number]> {
  if (values.length === 0 || bandwidth <= 0) return [];
  const lo = (min(values) ?? 0) - 3 * bandwidth;
  const hi = (max(values) ?? 0) + 3 * bandwidth;
  const norm = 1 / (values.length * bandwidth * Math.sqrt(2 * Math.PI));
  const curve: Array<[number, number]> = [];
  for (let i = 0; i < points; i++) {
    const x = lo + ((hi - lo) * i) / (points - 1);
    let density = 0;
    for (const v of values) {
      const u = (x - v) / bandwidth;
      density += Math.exp(-0.5 * u * u);
    }
    curve.push([x, density * norm]);
  }
  return curve;
}
