/**
 * Multi-curve log-likelihood-vs-step plot from one or more metrics CSVs.
 * Curves and the legend follow the input order.
 */

import { writeFileSync } from "node:fs";
import { FormatError } from "./errors.js";
import { MetricsRow, parseMetrics } from "./metrics.js";

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                 "#8c564b", "#17becf", "#7f7f7f"];
const MARGIN = { top: 32, right: 140, bottom: 48, left: 64 };
const PLOT_W = 480;
const PLOT_H = 320;

function ticks(lo: number, hi: number, count = 5): number[] {
  const span = hi - lo || 1;
  const step = span / (count - 1);
  return Array.from({ length: count }, (_, i) => lo + i * step);
}

function fmt(v: number): string {
  return Math.abs(v) >= 1000 || (v !== 0 && Math.abs(v) < 0.01)
    ? v.toExponential(1)
    : String(Math.round(v * 100) / 100);
}

export function likelihoodSvg(series: MetricsRow[][], labels: string[]): string {
  const allK = series.flat().map((r) => r.k);
  const allLL = series.flat().map((r) => r.logLikelihood);
  const kLo = Math.min(...allK);
  const kHi = Math.max(...allK);
  let llLo = Math.min(...allLL);
  let llHi = Math.max(...allLL);
  if (llLo === llHi) { llLo -= 1; llHi += 1; }

  const sx = (k: number) => MARGIN.left + ((k - kLo) / (kHi - kLo || 1)) * PLOT_W;
  const sy = (ll: number) => MARGIN.top + PLOT_H - ((ll - llLo) / (llHi - llLo)) * PLOT_H;

  const width = MARGIN.left + PLOT_W + MARGIN.right;
  const height = MARGIN.top + PLOT_H + MARGIN.bottom;
  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`);
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);

  // frame and gridlines
  parts.push(`<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${PLOT_W}" height="${PLOT_H}" fill="none" stroke="#333"/>`);
  for (const t of ticks(llLo, llHi)) {
    const y = sy(t);
    parts.push(`<line x1="${MARGIN.left}" y1="${y}" x2="${MARGIN.left + PLOT_W}" y2="${y}" stroke="#ddd"/>`);
    parts.push(`<text x="${MARGIN.left - 8}" y="${y + 4}" text-anchor="end" font-family="sans-serif" font-size="11">${fmt(t)}</text>`);
  }
  for (const t of ticks(kLo, kHi, Math.min(10, kHi - kLo + 1))) {
    const x = sx(t);
    parts.push(`<text x="${x}" y="${MARGIN.top + PLOT_H + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">${fmt(t)}</text>`);
  }
  parts.push(`<text x="${MARGIN.left + PLOT_W / 2}" y="${MARGIN.top + PLOT_H + 38}" text-anchor="middle" font-family="sans-serif" font-size="13">time step k</text>`);
  parts.push(`<text x="18" y="${MARGIN.top + PLOT_H / 2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 18 ${MARGIN.top + PLOT_H / 2})">mean log-likelihood</text>`);

  // curves (input order) and legend (same order)
  series.forEach((rows, s) => {
    const color = PALETTE[s % PALETTE.length];
    const d = rows
      .map((r, i) => `${i === 0 ? "M" : "L"}${sx(r.k).toFixed(2)},${sy(r.logLikelihood).toFixed(2)}`)
      .join(" ");
    parts.push(`<path d="${d}" fill="none" stroke="${color}" stroke-width="2"/>`);
    for (const r of rows) {
      parts.push(`<circle cx="${sx(r.k).toFixed(2)}" cy="${sy(r.logLikelihood).toFixed(2)}" r="3" fill="${color}"/>`);
    }
    const ly = MARGIN.top + 12 + s * 20;
    const lx = MARGIN.left + PLOT_W + 16;
    parts.push(`<line x1="${lx}" y1="${ly}" x2="${lx + 22}" y2="${ly}" stroke="${color}" stroke-width="2"/>`);
    parts.push(`<text x="${lx + 28}" y="${ly + 4}" font-family="sans-serif" font-size="12" class="legend-label">${labels[s]}</text>`);
  });

  parts.push("</svg>");
  return parts.join("\n");
}

export function renderLikelihood(metricsPaths: string[], labels: string[],
                                 outPath: string): void {
  if (metricsPaths.length === 0) {
    throw new FormatError(outPath, "no metrics files given");
  }
  if (labels.length !== metricsPaths.length) {
    throw new FormatError(outPath,
      `got ${labels.length} labels for ${metricsPaths.length} metrics files`);
  }
  const series = metricsPaths.map(parseMetrics);
  writeFileSync(outPath, likelihoodSvg(series, labels));
}
