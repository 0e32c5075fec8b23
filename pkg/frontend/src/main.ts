import { Connection } from "./connection.js";
import { GazeThrottle } from "./gaze.js";
import { OverlayToggles, drawHeatmap, drawRegionRings } from "./overlay.js";
import { StatsHistory, drawLevelBars, drawSparkline } from "./stats.js";
import { Frame, StatsMessage, cameraMessage, configMessage, gazeMessage, rgbToRgba } from "./protocol.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("view");
const barsCanvas = el<HTMLCanvasElement>("bars");
const sparkCanvas = el<HTMLCanvasElement>("spark");
const banner = el<HTMLDivElement>("banner");
const ctx = canvas.getContext("2d")!;
const toggles: OverlayToggles = { regions: true, heatmap: false, bands: false };

let imageData: ImageData | null = null;
let lastStats: StatsMessage | null = null;
const history = new StatsHistory();

function present(frame: Frame, stats: StatsMessage): void {
  if (!imageData || canvas.width !== frame.width || canvas.height !== frame.height) {
    canvas.width = frame.width;
    canvas.height = frame.height;
    imageData = ctx.createImageData(frame.width, frame.height);
  }
  rgbToRgba(frame.pixels, imageData.data);
  ctx.putImageData(imageData, 0, 0);
  if (toggles.heatmap) drawHeatmap(ctx, stats);
  if (toggles.regions) drawRegionRings(ctx, stats, toggles.bands ? 4 : 0);
  lastStats = stats;
  history.push(stats);
  drawLevelBars(barsCanvas.getContext("2d")!, stats, barsCanvas.width, barsCanvas.height);
  drawSparkline(sparkCanvas.getContext("2d")!, history, sparkCanvas.width, sparkCanvas.height);
}

const url = new URLSearchParams(location.search).get("server") ?? "ws://127.0.0.1:8765";
const conn = new Connection(url, {
  onFrame: present,
  onError: (message) => {
    banner.textContent = `server error: ${message}`;
    banner.style.display = "block";
  },
  onStatus: (status) => {
    banner.textContent = status === "open" ? "" : `connection: ${status}`;
    banner.style.display = status === "open" ? "none" : "block";
  },
});
conn.connect();

const throttle = new GazeThrottle((x, y) => conn.send(gazeMessage(x, y)));
canvas.addEventListener("pointermove", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const x = ((ev.clientX - rect.left) / rect.width) * canvas.width;
  const y = ((ev.clientY - rect.top) / rect.height) * canvas.height;
  throttle.move(x, y);
});
// pointer leaving the canvas freezes the gaze at its last position

el<HTMLInputElement>("toggle-foveation").addEventListener("change", (ev) => {
  conn.send(configMessage({ foveation: (ev.target as HTMLInputElement).checked }));
});
el<HTMLInputElement>("toggle-regions").addEventListener("change", (ev) => {
  toggles.regions = (ev.target as HTMLInputElement).checked;
});
el<HTMLInputElement>("toggle-heatmap").addEventListener("change", (ev) => {
  toggles.heatmap = (ev.target as HTMLInputElement).checked;
});
for (const [id, param] of [
  ["azimuth", "azimuth"],
  ["tilt", "tilt"],
  ["radius", "radius"],
] as const) {
  el<HTMLInputElement>(id).addEventListener("input", (ev) => {
    conn.send(cameraMessage({ [param]: parseFloat((ev.target as HTMLInputElement).value) }));
  });
}
