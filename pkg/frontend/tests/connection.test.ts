import { describe, expect, it } from "vitest";
import { Connection, Transport } from "../src/connection.js";
import { FRAME_MAGIC } from "../src/protocol.js";

class FakeTransport implements Transport {
  sent: string[] = [];
  closed = false;
  onmessage: ((data: ArrayBuffer | string) => void) | null = null;
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;

  send(data: string) {
    this.sent.push(data);
  }
  close() {
    this.closed = true;
    this.onclose?.();
  }
}

function frameBuf(frameId: number, w = 2, h = 2): ArrayBuffer {
  const buf = new ArrayBuffer(16 + w * h * 3);
  const view = new DataView(buf);
  view.setUint32(0, FRAME_MAGIC, true);
  view.setUint32(4, w, true);
  view.setUint32(8, h, true);
  view.setUint32(12, frameId, true);
  return buf;
}

function statsJson(frameId: number, total = 10): string {
  return JSON.stringify({
    type: "stats",
    frame_id: frameId,
    render_ms: 5,
    gaze: [1, 1],
    foveation: true,
    levels: { "1": total },
    total_intersections: total,
    region_fractions: [1],
    region_radii_px: [],
    tile_grid: [1, 1],
    tile_counts: [total],
    width: 2,
    height: 2,
  });
}

function makeConnection() {
  const transports: FakeTransport[] = [];
  const scheduled: { fn: () => void; ms: number }[] = [];
  const frames: number[] = [];
  const statuses: string[] = [];
  const conn = new Connection(
    "ws://test",
    {
      onFrame: (frame) => frames.push(frame.frameId),
      onStatus: (s) => statuses.push(s),
    },
    () => {
      const t = new FakeTransport();
      transports.push(t);
      return t;
    },
    (fn, ms) => scheduled.push({ fn, ms }),
  );
  return { conn, transports, scheduled, frames, statuses };
}

describe("connection", () => {
  it("pairs frames with stats and keeps displayed ids monotone", () => {
    const { conn, transports, frames } = makeConnection();
    conn.connect();
    const t = transports[0];
    t.onopen?.();
    t.onmessage?.(frameBuf(1));
    t.onmessage?.(statsJson(1));
    t.onmessage?.(frameBuf(3));
    t.onmessage?.(statsJson(3));
    // a stale frame arriving late is discarded
    t.onmessage?.(frameBuf(2));
    t.onmessage?.(statsJson(2));
    expect(frames).toEqual([1, 3]);
    expect(conn.lastFrameId).toBe(3);
    expect(conn.droppedStale).toBe(1);
  });

  it("ignores stats whose frame id does not match the pending frame", () => {
    const { conn, transports, frames } = makeConnection();
    conn.connect();
    const t = transports[0];
    t.onmessage?.(frameBuf(5));
    t.onmessage?.(statsJson(6));
    expect(frames).toEqual([]);
  });

  it("reconnects with exponential backoff after a drop", () => {
    const { conn, transports, scheduled, statuses } = makeConnection();
    conn.connect();
    transports[0].onopen?.();
    transports[0].onclose?.();
    expect(scheduled.length).toBe(1);
    expect(scheduled[0].ms).toBe(500);
    scheduled[0].fn(); // retry
    expect(transports.length).toBe(2);
    transports[1].onclose?.();
    expect(scheduled[1].ms).toBe(1000); // backoff doubles
    expect(statuses).toContain("connecting");
    expect(statuses).toContain("closed");
  });

  it("stops reconnecting once closed", () => {
    const { conn, transports, scheduled } = makeConnection();
    conn.connect();
    conn.close();
    expect(transports[0].closed).toBe(true);
    expect(scheduled.length).toBe(0);
  });

  it("surfaces server errors", () => {
    const errors: string[] = [];
    const t = new FakeTransport();
    const conn = new Connection("ws://x", { onError: (m) => errors.push(m) }, () => t);
    conn.connect();
    t.onmessage?.(JSON.stringify({ type: "error", message: "boom" }));
    expect(errors).toEqual(["boom"]);
  });
});
