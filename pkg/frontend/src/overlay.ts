// Overlays drawn from server stats only: quality-region rings around the
// reported gaze, blend bands, and the per-tile intersection heatmap.

import { StatsMessage } from "./protocol.js";

export interface OverlayToggles {
  regions: boolean;
  heatmap: boolean;
  bands: boolean;
}

const RING_COLORS = ["#4fc3f7", "#81c784", "#ffb74d", "#e57373"];

export function drawRegionRings(
  ctx: CanvasRenderingContext2D,
  stats: StatsMessage,
  bandWidthPx = 0,
): void {
  const [gx, gy] = stats.gaze;
  stats.region_radii_px.forEach((radius, i) => {
    ctx.strokeStyle = RING_COLORS[(i + 1) % RING_COLORS.length];
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.arc(gx, gy, radius, 0, 2 * Math.PI);
    ctx.stroke();
    if (bandWidthPx > 0) {
      ctx.strokeStyle = "rgba(255,255,255,0.25)";
      ctx.lineWidth = bandWidthPx;
      ctx.beginPath();
      ctx.arc(gx, gy, radius, 0, 2 * Math.PI);
      ctx.stroke();
    }
  });
}

/** Heatmap cell fill colors, alpha scaled by count / max. */
export function heatmapCells(
  stats: StatsMessage,
): { x: number; y: number; w: number; h: number; alpha: number }[] {
  const [txc, tyc] = stats.tile_grid;
  if (txc <= 0 || tyc <= 0 || stats.tile_counts.length !== txc * tyc) {
    return [];
  }
  const max = Math.max(1, ...stats.tile_counts);
  const w = stats.width / txc;
  const h = stats.height / tyc;
  const cells = [];
  for (let ty = 0; ty < tyc; ty++) {
    for (let tx = 0; tx < txc; tx++) {
      const count = stats.tile_counts[ty * txc + tx];
      if (count > 0) {
        cells.push({ x: tx * w, y: ty * h, w, h, alpha: 0.6 * (count / max) });
      }
    }
  }
  return cells;
}

export function drawHeatmap(ctx: CanvasRenderingContext2D, stats: StatsMessage): void {
  for (const cell of heatmapCells(stats)) {
    ctx.fillStyle = `rgba(255, 64, 32, ${cell.alpha.toFixed(3)})`;
    ctx.fillRect(cell.x, cell.y, cell.w, cell.h);
  }
}
