import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import { render } from "../src/render.js";
import { fitSlope } from "../src/series.js";

const HEADER = "H,ell,p,err_energy,err_L2,eoc_energy,eoc_L2,wall_time_s";

/** Synthetic sweep with exact power laws err = c * H^k, one k per p-column. */
function syntheticCsv(ks: number[]): string {
  const lines = ["# config: synthetic", HEADER];
  const hs = [1.0, 0.5, 0.25, 0.125, 0.0625];
  for (const H of hs) {
    ks.forEach((k, i) => {
      const err = 0.3 * H ** k;
      lines.push(`${H},4,${i + 1},${err},${err * H},nan,nan,0.0`);
    });
  }
  return lines.join("\n") + "\n";
}

describe("slope fitting through the rendering pipeline", () => {
  it("recovers k = 1, 2, 3 from power-law data within 0.05", () => {
    const dir = mkdtempSync(join(tmpdir(), "ndlod-fig-"));
    const csv = join(dir, "synthetic.csv");
    writeFileSync(csv, syntheticCsv([1, 2, 3]));
    const figures = render({ csvPaths: [csv], outDir: dir });
    expect(figures.length).toBe(3);
    for (const fig of figures) {
      for (const s of fig.series) {
        expect(Math.abs(s.fittedSlope - fig.p)).toBeLessThan(0.05);
      }
    }
  });

  it("fitSlope is exact on a pure power law", () => {
    const pts = [1, 0.5, 0.25].map((H) => ({ H, err: 2 * H ** 2.5 }));
    expect(fitSlope(pts)).toBeCloseTo(2.5, 10);
  });

  it("renders a single-row CSV as a lone marker without crashing", () => {
    const dir = mkdtempSync(join(tmpdir(), "ndlod-fig-"));
    const csv = join(dir, "one.csv");
    writeFileSync(csv, `${HEADER}\n0.25,2,1,3e-3,1e-4,nan,nan,0.0\n`);
    const figures = render({ csvPaths: [csv], outDir: dir });
    expect(figures.length).toBe(1);
    expect(Number.isNaN(figures[0]!.series[0]!.fittedSlope)).toBe(true);
  });
});
