/**
 * Parser for exported density-grid CSVs.
 *
 * Expected layout (see the producer's docs/formats.md):
 *
 *   # window x1=[-3.0,3.0] x2=[-3.0,3.0] resolution=50 k=5
 *   x1,x2,density
 *   -3.0,-3.0,0.0004
 *   ...
 *
 * Rows must form a complete rectangular grid in x1-major order.
 */

import { existsSync, readFileSync } from "node:fs";
import { FormatError, MissingFileError } from "./errors.js";

export interface GridWindow {
  x1: [number, number];
  x2: [number, number];
  resolution: number;
  k: number;
}

export interface DensityGrid {
  window: GridWindow;
  /** density[i][j] is the value at (x1Values[i], x2Values[j]) */
  density: number[][];
  x1Values: number[];
  x2Values: number[];
}

const WINDOW_RE =
  /^# window x1=\[([^,]+),([^\]]+)\] x2=\[([^,]+),([^\]]+)\] resolution=(\d+) k=(\d+)\s*$/;

function parseFloatStrict(path: string, text: string): number {
  const v = Number(text);
  if (!Number.isFinite(v)) {
    throw new FormatError(path, `not a finite number: ${JSON.stringify(text)}`);
  }
  return v;
}

export function parseGrid(path: string): DensityGrid {
  if (!existsSync(path)) throw new MissingFileError(path);
  const lines = readFileSync(path, "utf-8").split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length < 3) throw new FormatError(path, "too few lines for a grid file");

  const m = WINDOW_RE.exec(lines[0]);
  if (!m) throw new FormatError(path, `bad window metadata line: ${JSON.stringify(lines[0])}`);
  const window: GridWindow = {
    x1: [parseFloatStrict(path, m[1]), parseFloatStrict(path, m[2])],
    x2: [parseFloatStrict(path, m[3]), parseFloatStrict(path, m[4])],
    resolution: Number(m[5]),
    k: Number(m[6]),
  };

  if (lines[1].trim() !== "x1,x2,density") {
    throw new FormatError(path, `bad header: ${JSON.stringify(lines[1])}`);
  }

  const r = window.resolution;
  const rows = lines.slice(2);
  if (rows.length !== r * r) {
    throw new FormatError(path, `expected ${r * r} rows, got ${rows.length}`);
  }

  const density: number[][] = [];
  const x1Values: number[] = [];
  const x2Values: number[] = [];
  for (let i = 0; i < r; i++) {
    const rowVals: number[] = [];
    for (let j = 0; j < r; j++) {
      const parts = rows[i * r + j].split(",");
      if (parts.length !== 3) {
        throw new FormatError(path, `row ${i * r + j + 1}: expected 3 columns`);
      }
      const x1 = parseFloatStrict(path, parts[0]);
      const x2 = parseFloatStrict(path, parts[1]);
      const d = parseFloatStrict(path, parts[2]);
      if (i === 0) x2Values.push(x2);
      if (j === 0) x1Values.push(x1);
      if (x1 !== x1Values[i] || x2 !== x2Values[j]) {
        throw new FormatError(path, `rows do not form a rectangular x1-major grid`);
      }
      rowVals.push(d);
    }
    density.push(rowVals);
  }
  return { window, density, x1Values, x2Values };
}
