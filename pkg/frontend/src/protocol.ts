// Wire protocol shared with the renderer service: binary frames carry a
// 16-byte header (magic "FVSP", width, height, frame id) plus RGB8 pixels;
// JSON text messages carry hello/stats/error payloads.

export const FRAME_MAGIC = 0x50535646; // "FVSP" little-endian

export interface Frame {
  width: number;
  height: number;
  frameId: number;
  pixels: Uint8Array; // RGB8, row-major
}

export interface HelloMessage {
  type: "hello";
  width: number;
  height: number;
  pixels_per_degree: number;
  level_count: number;
  model_levels: number;
  foveation: boolean;
}

export interface StatsMessage {
  type: "stats";
  frame_id: number;
  render_ms: number;
  gaze: [number, number];
  foveation: boolean;
  levels: Record<string, number>;
  total_intersections: number;
  region_fractions: number[];
  region_radii_px: number[];
  tile_grid: [number, number];
  tile_counts: number[];
  width: number;
  height: number;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type ServerMessage = HelloMessage | StatsMessage | ErrorMessage;

export function parseFrame(buf: ArrayBuffer): Frame {
  if (buf.byteLength < 16) {
    throw new Error(`frame too short: ${buf.byteLength} bytes`);
  }
  const view = new DataView(buf);
  const magic = view.getUint32(0, true);
  if (magic !== FRAME_MAGIC) {
    throw new Error(`bad frame magic 0x${magic.toString(16)}`);
  }
  const width = view.getUint32(4, true);
  const height = view.getUint32(8, true);
  const frameId = view.getUint32(12, true);
  const expected = 16 + width * height * 3;
  if (buf.byteLength !== expected) {
    throw new Error(`frame payload ${buf.byteLength} bytes, expected ${expected}`);
  }
  return { width, height, frameId, pixels: new Uint8Array(buf, 16) };
}

export function parseServerMessage(text: string): ServerMessage {
  const msg = JSON.parse(text);
  if (msg.type !== "hello" && msg.type !== "stats" && msg.type !== "error") {
    throw new Error(`unknown server message type ${msg.type}`);
  }
  return msg as ServerMessage;
}

export function gazeMessage(x: number, y: number): string {
  return JSON.stringify({ type: "gaze", x, y });
}

export function cameraMessage(params: { azimuth?: number; tilt?: number; radius?: number }): string {
  return JSON.stringify({ type: "camera", ...params });
}

export function configMessage(params: { foveation?: boolean; force_level?: number | null }): string {
  return JSON.stringify({ type: "config", ...params });
}

/** RGB8 rows into an RGBA buffer for canvas ImageData. */
export function rgbToRgba(pixels: Uint8Array, rgba: Uint8ClampedArray): void {
  const n = pixels.length / 3;
  for (let i = 0; i < n; i++) {
    rgba[i * 4] = pixels[i * 3];
    rgba[i * 4 + 1] = pixels[i * 3 + 1];
    rgba[i * 4 + 2] = pixels[i * 3 + 2];
    rgba[i * 4 + 3] = 255;
  }
}
