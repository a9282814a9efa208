/**
 * Reader for the solver's convergence CSV:
 *
 *   # config: ...                                  (comment lines, echoed config)
 *   H,ell,p,err_energy,err_L2,eoc_energy,eoc_L2,wall_time_s
 *   1.0,4,0,2.53e-01,...
 *
 * Rows with p = 0 are the multiscale solution without post-processing.
 */

export interface ConvergenceRow {
  H: number;
  ell: number;
  p: number;
  errEnergy: number;
  errL2: number;
  eocEnergy: number;
  eocL2: number;
  wallTimeS: number;
}

export const EXPECTED_HEADER = [
  "H",
  "ell",
  "p",
  "err_energy",
  "err_L2",
  "eoc_energy",
  "eoc_L2",
  "wall_time_s",
];

export function parseConvergenceCsv(text: string): ConvergenceRow[] {
  const lines = text
    .split(/\r?\n/)
    .map((l) => l.trim())
    .filter((l) => l.length > 0 && !l.startsWith("#"));
  if (lines.length === 0) {
    throw new Error("empty CSV");
  }
  const header = lines[0]!.split(",").map((h) => h.trim());
  for (const col of EXPECTED_HEADER) {
    if (!header.includes(col)) {
      throw new Error(`missing column '${col}' in CSV header: ${lines[0]}`);
    }
  }
  const idx = (name: string) => header.indexOf(name);
  const rows: ConvergenceRow[] = [];
  for (const line of lines.slice(1)) {
    const parts = line.split(",");
    if (parts.length !== header.length) {
      throw new Error(`malformed CSV row: ${line}`);
    }
    const num = (name: string) => Number(parts[idx(name)]);
    const row: ConvergenceRow = {
      H: num("H"),
      ell: num("ell"),
      p: num("p"),
      errEnergy: num("err_energy"),
      errL2: num("err_L2"),
      eocEnergy: num("eoc_energy"),
      eocL2: num("eoc_L2"),
      wallTimeS: num("wall_time_s"),
    };
    if (!Number.isFinite(row.H) || row.H <= 0) {
      throw new Error(`bad H value in row: ${line}`);
    }
    rows.push(row);
  }
  return rows;
}
