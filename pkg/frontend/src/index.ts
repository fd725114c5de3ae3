export { MissingFileError, FormatError } from "./errors.js";
export { parseGrid } from "./grid.js";
export type { DensityGrid, GridWindow } from "./grid.js";
export { parseMetrics } from "./metrics.js";
export type { MetricsRow } from "./metrics.js";
export { renderHeatmaps, heatmapSvg } from "./heatmap.js";
export type { HeatmapOptions, RenderedHeatmap } from "./heatmap.js";
export { renderLikelihood, likelihoodSvg } from "./likelihood.js";
export { viridis } from "./colormap.js";
