// Stats panel: per-level intersection bars plus a render-time sparkline.
// All values come from server stats; nothing is recomputed locally.

import { StatsMessage } from "./protocol.js";

export interface HistoryPoint {
  frameId: number;
  renderMs: number;
  total: number;
}

export class StatsHistory {
  points: HistoryPoint[] = [];

  constructor(private capacity = 120) {}

  push(stats: StatsMessage): void {
    this.points.push({
      frameId: stats.frame_id,
      renderMs: stats.render_ms,
      total: stats.total_intersections,
    });
    if (this.points.length > this.capacity) {
      this.points.shift();
    }
  }
}

const LEVEL_COLORS = ["#4fc3f7", "#81c784", "#ffb74d", "#e57373"];

export function drawLevelBars(
  ctx: CanvasRenderingContext2D,
  stats: StatsMessage | null,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  if (!stats) {
    ctx.fillStyle = "#888";
    ctx.fillText("waiting for frames ...", 8, height / 2);
    return;
  }
  const levels = Object.keys(stats.levels).sort();
  const max = Math.max(1, ...levels.map((k) => stats.levels[k]));
  const barW = width / Math.max(4, levels.length);
  levels.forEach((k, i) => {
    const v = stats.levels[k];
    const h = ((height - 18) * v) / max;
    ctx.fillStyle = LEVEL_COLORS[(parseInt(k, 10) - 1) % LEVEL_COLORS.length];
    ctx.fillRect(i * barW + 4, height - 14 - h, barW - 8, h);
    ctx.fillStyle = "#ccc";
    ctx.font = "10px sans-serif";
    ctx.fillText(`L${k}:${v}`, i * barW + 4, height - 2);
  });
}

export function drawSparkline(
  ctx: CanvasRenderingContext2D,
  history: StatsHistory,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  const pts = history.points;
  if (pts.length < 2) {
    return;
  }
  const max = Math.max(...pts.map((p) => p.renderMs), 1);
  ctx.strokeStyle = "#4fc3f7";
  ctx.lineWidth = 1;
  ctx.beginPath();
  pts.forEach((p, i) => {
    const x = (i / (pts.length - 1)) * width;
    const y = height - (p.renderMs / max) * (height - 4) - 2;
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
  ctx.fillStyle = "#ccc";
  ctx.font = "10px sans-serif";
  const last = pts[pts.length - 1];
  ctx.fillText(`${last.renderMs.toFixed(0)} ms, ${last.total} intersections`, 4, 10);
}
