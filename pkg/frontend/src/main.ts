/**
 * Render convergence figures from solver CSV output.
 *
 * Usage:
 *   tsx src/main.ts --csv ../out/convergence.csv [--csv more.csv]
 *                   [--out-dir figs] [--slopes 1,2,3] [--l2]
 */

import { render } from "./render.js";

function parseArgs(argv: string[]) {
  const csvPaths: string[] = [];
  let outDir = "figs";
  let slopes = [1, 2, 3];
  let errColumn: "errEnergy" | "errL2" = "errEnergy";
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i]!;
    if (arg === "--csv") {
      csvPaths.push(argv[++i]!);
    } else if (arg === "--out-dir") {
      outDir = argv[++i]!;
    } else if (arg === "--slopes") {
      slopes = argv[++i]!.split(",").map(Number);
    } else if (arg === "--l2") {
      errColumn = "errL2";
    } else if (arg === "--help" || arg === "-h") {
      console.log(
        "usage: main.ts --csv FILE [--csv FILE ...] [--out-dir DIR] [--slopes 1,2,3] [--l2]",
      );
      process.exit(0);
    } else {
      throw new Error(`unknown argument: ${arg}`);
    }
  }
  if (csvPaths.length === 0) {
    throw new Error("at least one --csv is required (see --help)");
  }
  return { csvPaths, outDir, slopes, errColumn };
}

const args = parseArgs(process.argv.slice(2));
const figures = render({
  csvPaths: args.csvPaths,
  outDir: args.outDir,
  referenceSlopes: args.slopes,
  errColumn: args.errColumn,
});
for (const fig of figures) {
  const slopes = fig.series
    .map((s) => `ell=${s.ell}: ${s.fittedSlope.toFixed(2)}`)
    .join(", ");
  console.log(`wrote ${fig.path} (fitted slopes ${slopes})`);
}
