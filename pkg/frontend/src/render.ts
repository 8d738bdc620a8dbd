/**
 * Figure renderer CLI: `render --spec FILE [--test-mode]`.
 *
 * The spec is a JSON file: {"layout": "landscape" | "growth" | "snapshots",
 * "inputs": [csv paths], "output": svg path}. Rendering is deterministic;
 * on any error no image file is written and the process exits non-zero.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { pathToFileURL } from "node:url";
import { PlotSpec, renderSpec } from "./layouts.js";

export function main(argv: string[]): number {
  let specPath: string | null = null;
  let testMode = false;
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--spec") {
      specPath = argv[++i] ?? null;
    } else if (argv[i] === "--test-mode") {
      testMode = true;
    } else {
      process.stderr.write(`unknown argument ${argv[i]}\n`);
      return 2;
    }
  }
  if (!specPath) {
    process.stderr.write("usage: render --spec FILE [--test-mode]\n");
    return 2;
  }
  let spec: PlotSpec;
  try {
    spec = JSON.parse(readFileSync(specPath, "utf-8")) as PlotSpec;
  } catch (err) {
    process.stderr.write(`cannot read spec ${specPath}: ${err}\n`);
    return 2;
  }
  try {
    const svg = renderSpec(spec, { testMode });
    writeFileSync(spec.output, svg, "utf-8");
    process.stdout.write(`${spec.output}\n`);
  } catch (err) {
    process.stderr.write(`render failed: ${err}\n`);
    return 1;
  }
  return 0;
}

if (
  process.argv[1] &&
  import.meta.url === pathToFileURL(process.argv[1]).href
) {
  process.exit(main(process.argv.slice(2)));
}
