/**
 * Figure rendering: one log-log error-vs-H figure per post-processing
 * order, one curve per oversampling radius, dashed reference slopes.
 * Rendering is a pure function of the CSV content and the spec.
 */

import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { parseConvergenceCsv, type ConvergenceRow } from "./csv.js";
import { groupSeries, type Series } from "./series.js";
import { logLogChart } from "./svg.js";

export interface PlotSpec {
  csvPaths: string[];
  outDir: string;
  referenceSlopes?: number[];
  errColumn?: "errEnergy" | "errL2";
  xLabel?: string;
  yLabel?: string;
  /** include the p = 0 (no post-processing) baseline as its own figure */
  includeBaseline?: boolean;
}

export interface RenderedFigure {
  p: number;
  path: string;
  series: Series[];
}

export function render(spec: PlotSpec): RenderedFigure[] {
  const rows: ConvergenceRow[] = [];
  for (const path of spec.csvPaths) {
    rows.push(...parseConvergenceCsv(readFileSync(path, "utf-8")));
  }
  if (rows.length === 0) {
    throw new Error("no data rows in the given CSV files");
  }
  const errColumn = spec.errColumn ?? "errEnergy";
  const all = groupSeries(rows, errColumn);
  const pValues = [...new Set(all.map((s) => s.p))].sort();
  mkdirSync(spec.outDir, { recursive: true });

  const figures: RenderedFigure[] = [];
  for (const p of pValues) {
    if (p === 0 && spec.includeBaseline === false) continue;
    const series = all.filter((s) => s.p === p);
    if (series.every((s) => s.points.every((pt) => pt.err <= 0))) {
      continue; // nothing plottable (e.g. a zero-load run)
    }
    const title =
      p === 0
        ? "energy error, no post-processing"
        : `energy error, post-processing order p = ${p}`;
    const svg = logLogChart(series, {
      title: errColumn === "errL2" ? title.replace("energy", "L2") : title,
      xLabel: spec.xLabel ?? "coarse mesh size H",
      yLabel: spec.yLabel ?? (errColumn === "errL2" ? "L2 error" : "energy error"),
      referenceSlopes: spec.referenceSlopes ?? [1, 2, 3],
    });
    const path = join(spec.outDir, `convergence_p${p}.svg`);
    writeFileSync(path, svg);
    figures.push({ p, path, series });
  }
  if (figures.length === 0) {
    throw new Error("no figures rendered: every series was empty");
  }
  return figures;
}
