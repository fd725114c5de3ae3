/**
 * Density-grid heatmap rendering: one SVG per grid file.
 *
 * With `sharedScale` the color range spans the global min/max over all the
 * input grids, so a model grid and its Monte Carlo reference (or a whole
 * time sequence) are directly comparable.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { basename, join } from "node:path";
import { viridis } from "./colormap.js";
import { DensityGrid, parseGrid } from "./grid.js";

export interface HeatmapOptions {
  sharedScale?: boolean;
  cellSize?: number;
}

const MARGIN = { top: 36, right: 64, bottom: 44, left: 56 };

function fmt(v: number): string {
  return Math.abs(v) >= 1000 || (v !== 0 && Math.abs(v) < 0.01)
    ? v.toExponential(1)
    : String(Math.round(v * 100) / 100);
}

export function heatmapSvg(grid: DensityGrid, lo: number, hi: number,
                           title: string, cellSize = 8): string {
  const r = grid.window.resolution;
  const w = r * cellSize;
  const h = r * cellSize;
  const width = MARGIN.left + w + MARGIN.right;
  const height = MARGIN.top + h + MARGIN.bottom;
  const span = hi - lo || 1;

  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`);
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(`<text x="${MARGIN.left + w / 2}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">${title}</text>`);

  // cells: x1 on the horizontal axis, x2 on the vertical (up = larger x2)
  for (let i = 0; i < r; i++) {
    for (let j = 0; j < r; j++) {
      const t = (grid.density[i][j] - lo) / span;
      const x = MARGIN.left + i * cellSize;
      const y = MARGIN.top + (r - 1 - j) * cellSize;
      parts.push(`<rect x="${x}" y="${y}" width="${cellSize}" height="${cellSize}" fill="${viridis(t)}"/>`);
    }
  }

  // axes labels (window extents)
  const [x1lo, x1hi] = grid.window.x1;
  const [x2lo, x2hi] = grid.window.x2;
  parts.push(`<text x="${MARGIN.left}" y="${MARGIN.top + h + 16}" font-family="sans-serif" font-size="11">${fmt(x1lo)}</text>`);
  parts.push(`<text x="${MARGIN.left + w}" y="${MARGIN.top + h + 16}" text-anchor="end" font-family="sans-serif" font-size="11">${fmt(x1hi)}</text>`);
  parts.push(`<text x="${MARGIN.left + w / 2}" y="${MARGIN.top + h + 34}" text-anchor="middle" font-family="sans-serif" font-size="12">x1</text>`);
  parts.push(`<text x="${MARGIN.left - 6}" y="${MARGIN.top + h}" text-anchor="end" font-family="sans-serif" font-size="11">${fmt(x2lo)}</text>`);
  parts.push(`<text x="${MARGIN.left - 6}" y="${MARGIN.top + 10}" text-anchor="end" font-family="sans-serif" font-size="11">${fmt(x2hi)}</text>`);
  parts.push(`<text x="16" y="${MARGIN.top + h / 2}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 ${MARGIN.top + h / 2})">x2</text>`);

  // colorbar
  const cbX = MARGIN.left + w + 16;
  const cbW = 14;
  const steps = 64;
  for (let s = 0; s < steps; s++) {
    const y = MARGIN.top + h - ((s + 1) * h) / steps;
    parts.push(`<rect x="${cbX}" y="${y}" width="${cbW}" height="${h / steps + 0.5}" fill="${viridis(s / (steps - 1))}"/>`);
  }
  parts.push(`<text x="${cbX + cbW + 4}" y="${MARGIN.top + h}" font-family="sans-serif" font-size="10">${fmt(lo)}</text>`);
  parts.push(`<text x="${cbX + cbW + 4}" y="${MARGIN.top + 10}" font-family="sans-serif" font-size="10">${fmt(hi)}</text>`);

  parts.push("</svg>");
  return parts.join("\n");
}

export interface RenderedHeatmap {
  source: string;
  output: string;
}

export function renderHeatmaps(gridPaths: string[], outDir: string,
                               options: HeatmapOptions = {}): RenderedHeatmap[] {
  const grids = gridPaths.map(parseGrid);
  mkdirSync(outDir, { recursive: true });

  let globalLo = Infinity;
  let globalHi = -Infinity;
  for (const g of grids) {
    for (const row of g.density) {
      for (const v of row) {
        globalLo = Math.min(globalLo, v);
        globalHi = Math.max(globalHi, v);
      }
    }
  }

  return grids.map((g, idx) => {
    const lo = options.sharedScale ? globalLo : Math.min(...g.density.flat());
    const hi = options.sharedScale ? globalHi : Math.max(...g.density.flat());
    const name = basename(gridPaths[idx]).replace(/\.csv$/, "");
    const output = join(outDir, `${name}.svg`);
    const svg = heatmapSvg(g, lo, hi, `${name} (k=${g.window.k})`,
                           options.cellSize ?? 8);
    writeFileSync(output, svg);
    return { source: gridPaths[idx], output };
  });
}
