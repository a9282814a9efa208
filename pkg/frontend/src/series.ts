/** Grouping of convergence records into plottable series and slope fits. */

import type { ConvergenceRow } from "./csv.js";

export interface Point {
  H: number;
  err: number;
}

export interface Series {
  p: number;
  ell: number;
  points: Point[]; // sorted by decreasing H
  fittedSlope: number;
}

/** Least-squares slope of log(err) against log(H). */
export function fitSlope(points: Point[]): number {
  const usable = points.filter((pt) => pt.err > 0);
  if (usable.length < 2) return NaN;
  const xs = usable.map((pt) => Math.log(pt.H));
  const ys = usable.map((pt) => Math.log(pt.err));
  const mx = xs.reduce((a, b) => a + b, 0) / xs.length;
  const my = ys.reduce((a, b) => a + b, 0) / ys.length;
  let num = 0;
  let den = 0;
  for (let i = 0; i < xs.length; i++) {
    num += (xs[i]! - mx) * (ys[i]! - my);
    den += (xs[i]! - mx) ** 2;
  }
  return num / den;
}

/** One series per (p, ell) pair, using the requested error column. */
export function groupSeries(
  rows: ConvergenceRow[],
  errColumn: "errEnergy" | "errL2" = "errEnergy",
): Series[] {
  const byKey = new Map<string, ConvergenceRow[]>();
  for (const row of rows) {
    const key = `${row.p}|${row.ell}`;
    const bucket = byKey.get(key) ?? [];
    bucket.push(row);
    byKey.set(key, bucket);
  }
  const series: Series[] = [];
  for (const bucket of byKey.values()) {
    bucket.sort((a, b) => b.H - a.H);
    const points = bucket.map((r) => ({ H: r.H, err: r[errColumn] }));
    series.push({
      p: bucket[0]!.p,
      ell: bucket[0]!.ell,
      points,
      fittedSlope: fitSlope(points),
    });
  }
  series.sort((a, b) => a.p - b.p || a.ell - b.ell);
  return series;
}
