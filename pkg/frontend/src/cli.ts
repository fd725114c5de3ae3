#!/usr/bin/env node
/**
 * Usage:
 *   node dist/cli.js heatmaps --out <dir> [--shared-scale] <grid.csv>...
 *   node dist/cli.js likelihood --out <file.svg> --labels a,b,c <metrics.csv>...
 */

import { FormatError, MissingFileError } from "./errors.js";
import { renderHeatmaps } from "./heatmap.js";
import { renderLikelihood } from "./likelihood.js";

function parseArgs(argv: string[]): { flags: Map<string, string | boolean>; positional: string[] } {
  const flags = new Map<string, string | boolean>();
  const positional: string[] = [];
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === "--shared-scale") flags.set("shared-scale", true);
    else if (a === "--out" || a === "--labels" || a === "--cell-size") {
      flags.set(a.slice(2), argv[++i]);
    } else positional.push(a);
  }
  return { flags, positional };
}

function main(): number {
  const [cmd, ...rest] = process.argv.slice(2);
  const { flags, positional } = parseArgs(rest);
  try {
    if (cmd === "heatmaps") {
      const out = flags.get("out");
      if (typeof out !== "string") throw new Error("heatmaps requires --out <dir>");
      const results = renderHeatmaps(positional, out, {
        sharedScale: flags.get("shared-scale") === true,
        cellSize: flags.has("cell-size") ? Number(flags.get("cell-size")) : undefined,
      });
      for (const r of results) console.log(`${r.source} -> ${r.output}`);
      return 0;
    }
    if (cmd === "likelihood") {
      const out = flags.get("out");
      if (typeof out !== "string") throw new Error("likelihood requires --out <file.svg>");
      const labels = typeof flags.get("labels") === "string"
        ? (flags.get("labels") as string).split(",")
        : positional.map((p) => p);
      renderLikelihood(positional, labels, out);
      console.log(`wrote ${out}`);
      return 0;
    }
    console.error("usage: cli.js <heatmaps|likelihood> ...");
    return 2;
  } catch (err) {
    if (err instanceof MissingFileError) {
      console.error(err.message);
      return 4;
    }
    if (err instanceof FormatError) {
      console.error(err.message);
      return 3;
    }
    console.error(err instanceof Error ? err.message : String(err));
    return 2;
  }
}

process.exit(main());
