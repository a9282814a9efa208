/**
 * Minimal deterministic SVG log-log chart builder (no DOM, no canvas):
 * the same data always produces the same markup.
 */

import type { Series } from "./series.js";

export interface ChartOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  referenceSlopes: number[];
  width?: number;
  height?: number;
}

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const MARGIN = { top: 42, right: 24, bottom: 52, left: 72 };

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function fmt(x: number): string {
  return x.toFixed(2);
}

/** Tick label for a dyadic mesh size. */
function hLabel(H: number): string {
  const k = Math.round(-Math.log2(H));
  if (Math.abs(H - 2 ** -k) < 1e-12) {
    return k === 0 ? "1" : `2^-${k}`;
  }
  return H.toPrecision(2);
}

function marker(cx: number, cy: number, kind: number, color: string): string {
  const r = 3.5;
  switch (kind % 4) {
    case 0:
      return `<circle cx="${fmt(cx)}" cy="${fmt(cy)}" r="${r}" fill="${color}"/>`;
    case 1:
      return `<rect x="${fmt(cx - r)}" y="${fmt(cy - r)}" width="${2 * r}" height="${2 * r}" fill="${color}"/>`;
    case 2:
      return `<polygon points="${fmt(cx)},${fmt(cy - r - 1)} ${fmt(cx - r)},${fmt(cy + r)} ${fmt(cx + r)},${fmt(cy + r)}" fill="${color}"/>`;
    default:
      return `<polygon points="${fmt(cx)},${fmt(cy - r - 1)} ${fmt(cx + r + 1)},${fmt(cy)} ${fmt(cx)},${fmt(cy + r + 1)} ${fmt(cx - r - 1)},${fmt(cy)}" fill="${color}"/>`;
  }
}

export function logLogChart(series: Series[], options: ChartOptions): string {
  const width = options.width ?? 560;
  const height = options.height ?? 430;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;

  const pts = series.flatMap((s) => s.points.filter((p) => p.err > 0));
  if (pts.length === 0) {
    throw new Error(`no positive data to plot for '${options.title}'`);
  }
  const hVals = [...new Set(pts.map((p) => p.H))].sort((a, b) => a - b);
  const logH = (H: number) => Math.log10(H);
  const logE = (e: number) => Math.log10(e);
  let xMin = logH(hVals[0]!);
  let xMax = logH(hVals[hVals.length - 1]!);
  if (xMax - xMin < 1e-9) {
    xMin -= 0.5;
    xMax += 0.5;
  }
  const errs = pts.map((p) => p.err);
  let yMin = logE(Math.min(...errs));
  let yMax = logE(Math.max(...errs));
  yMin = Math.floor(yMin - 0.15);
  yMax = Math.ceil(yMax + 0.15);

  const X = (H: number) => MARGIN.left + ((logH(H) - xMin) / (xMax - xMin)) * plotW;
  const Y = (e: number) => MARGIN.top + ((yMax - logE(e)) / (yMax - yMin)) * plotH;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
    `<text x="${width / 2}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">${esc(options.title)}</text>`,
  );

  // frame and grid
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#444"/>`,
  );
  for (const H of hVals) {
    const x = X(H);
    parts.push(
      `<line x1="${fmt(x)}" y1="${MARGIN.top}" x2="${fmt(x)}" y2="${MARGIN.top + plotH}" stroke="#ddd"/>`,
      `<text x="${fmt(x)}" y="${MARGIN.top + plotH + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">${esc(hLabel(H))}</text>`,
    );
  }
  for (let d = yMin; d <= yMax; d++) {
    const y = Y(10 ** d);
    parts.push(
      `<line x1="${MARGIN.left}" y1="${fmt(y)}" x2="${MARGIN.left + plotW}" y2="${fmt(y)}" stroke="#ddd"/>`,
      `<text x="${MARGIN.left - 8}" y="${fmt(y + 4)}" text-anchor="end" font-family="sans-serif" font-size="11">1e${d}</text>`,
    );
  }
  parts.push(
    `<text x="${MARGIN.left + plotW / 2}" y="${height - 14}" text-anchor="middle" font-family="sans-serif" font-size="13">${esc(options.xLabel)}</text>`,
    `<text x="18" y="${MARGIN.top + plotH / 2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 18 ${MARGIN.top + plotH / 2})">${esc(options.yLabel)}</text>`,
  );

  // dashed reference slopes anchored above the data cloud
  const hRef = hVals[hVals.length - 1]!;
  const maxErr = Math.max(...errs);
  for (const s of options.referenceSlopes) {
    const c = (maxErr * 2.0) / hRef ** s;
    const pieces = hVals.map(
      (H, i) => `${i === 0 ? "M" : "L"}${fmt(X(H))},${fmt(Y(Math.min(c * H ** s, 10 ** yMax)))}`,
    );
    parts.push(
      `<path d="${pieces.join(" ")}" fill="none" stroke="#888" stroke-dasharray="6 4"/>`,
      `<text x="${fmt(X(hRef) - 6)}" y="${fmt(Y(c * hRef ** s) - 5)}" text-anchor="end" font-family="sans-serif" font-size="11" fill="#666">slope ${s}</text>`,
    );
  }

  // data series with markers and a legend
  series.forEach((s, i) => {
    const color = COLORS[i % COLORS.length]!;
    const good = s.points.filter((p) => p.err > 0);
    if (good.length === 0) return;
    if (good.length > 1) {
      const path = good
        .map((p, j) => `${j === 0 ? "M" : "L"}${fmt(X(p.H))},${fmt(Y(p.err))}`)
        .join(" ");
      parts.push(`<path d="${path}" fill="none" stroke="${color}" stroke-width="1.6"/>`);
    }
    for (const p of good) {
      parts.push(marker(X(p.H), Y(p.err), i, color));
    }
    const ly = MARGIN.top + 16 + 18 * i;
    const lx = MARGIN.left + 12;
    const slopeText = Number.isFinite(s.fittedSlope)
      ? `slope ${s.fittedSlope.toFixed(2)}`
      : "slope n/a";
    parts.push(
      `<line x1="${lx}" y1="${ly - 4}" x2="${lx + 22}" y2="${ly - 4}" stroke="${color}" stroke-width="1.6"/>`,
      marker(lx + 11, ly - 4, i, color),
      `<text x="${lx + 28}" y="${ly}" font-family="sans-serif" font-size="11">ell=${s.ell} (${esc(slopeText)})</text>`,
    );
  });

  parts.push("</svg>");
  return parts.join("\n");
}
