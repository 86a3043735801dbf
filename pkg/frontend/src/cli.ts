#!/usr/bin/env node
/**
 * plots <kind> --in <csv...> --out <png>
 *
 * Kinds: lmax-curves, norm-series, minima-trend, timing-bars,
 * completion-bars. Rendering is a pure function of the CSV inputs.
 */
import { writeFileSync } from "node:fs";
import { FIGURE_KINDS, FigureKind, render } from "./figures.js";

export function main(argv: string[]): number {
  const args = [...argv];
  const kind = args.shift();
  if (!kind || kind === "--help" || kind === "-h") {
    console.log(`usage: plots <kind> --in <csv...> --out <png>`);
    console.log(`kinds: ${FIGURE_KINDS.join(", ")}`);
    return kind ? 0 : 1;
  }
  if (!FIGURE_KINDS.includes(kind as FigureKind)) {
    console.error(`unknown figure kind '${kind}'; expected one of ` +
                  FIGURE_KINDS.join(", "));
    return 1;
  }
  const inputs: string[] = [];
  let out = "";
  for (let i = 0; i < args.length; i++) {
    if (args[i] === "--in") {
      while (i + 1 < args.length && !args[i + 1].startsWith("--")) {
        inputs.push(args[++i]);
      }
    } else if (args[i] === "--out") {
      out = args[++i];
    } else {
      console.error(`unexpected argument '${args[i]}'`);
      return 1;
    }
  }
  if (inputs.length === 0 || !out) {
    console.error("both --in <csv...> and --out <png> are required");
    return 1;
  }
  try {
    const canvas = render(kind as FigureKind, inputs);
    writeFileSync(out, canvas.toPng());
    console.log(`wrote ${out} (${canvas.width}x${canvas.height})`);
    return 0;
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
