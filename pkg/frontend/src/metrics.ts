/**
 * Parser for propagation metrics CSVs with header
 * `k,log_likelihood,mass_residual,wall_time` and one row per step.
 */

import { existsSync, readFileSync } from "node:fs";
import { FormatError, MissingFileError } from "./errors.js";

export interface MetricsRow {
  k: number;
  logLikelihood: number;
  massResidual: number;
  wallTime: number;
}

export function parseMetrics(path: string): MetricsRow[] {
  if (!existsSync(path)) throw new MissingFileError(path);
  const lines = readFileSync(path, "utf-8").split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) throw new FormatError(path, "empty file");
  if (lines[0].trim() !== "k,log_likelihood,mass_residual,wall_time") {
    throw new FormatError(path, `bad header: ${JSON.stringify(lines[0])}`);
  }
  if (lines.length === 1) throw new FormatError(path, "no data rows");
  return lines.slice(1).map((line, idx) => {
    const parts = line.split(",");
    if (parts.length !== 4) {
      throw new FormatError(path, `row ${idx + 1}: expected 4 columns`);
    }
    const [k, ll, mr, wt] = parts.map(Number);
    if ([k, ll, mr, wt].some((v) => !Number.isFinite(v))) {
      throw new FormatError(path, `row ${idx + 1}: non-numeric entry`);
    }
    return { k, logLikelihood: ll, massResidual: mr, wallTime: wt };
  });
}
