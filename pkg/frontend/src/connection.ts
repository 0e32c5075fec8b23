// Connection state machine: reconnect with backoff, monotone frame ids,
// and pairing of each binary frame with its stats message.
//
// The transport is injectable so tests can drive the client without a
// browser WebSocket.

import { Frame, ServerMessage, StatsMessage, parseFrame, parseServerMessage } from "./protocol.js";

export interface Transport {
  send(data: string): void;
  close(): void;
  onmessage: ((data: ArrayBuffer | string) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
}

export type TransportFactory = (url: string) => Transport;

export interface ConnectionEvents {
  onFrame?: (frame: Frame, stats: StatsMessage) => void;
  onHello?: (msg: ServerMessage) => void;
  onError?: (message: string) => void;
  onStatus?: (status: "connecting" | "open" | "closed") => void;
}

export function webSocketTransport(url: string): Transport {
  const ws = new WebSocket(url);
  ws.binaryType = "arraybuffer";
  const t: Transport = {
    send: (d) => ws.send(d),
    close: () => ws.close(),
    onmessage: null,
    onopen: null,
    onclose: null,
  };
  ws.onmessage = (ev) => t.onmessage?.(ev.data);
  ws.onopen = () => t.onopen?.();
  ws.onclose = () => t.onclose?.();
  ws.onerror = () => ws.close();
  return t;
}

export class Connection {
  private transport: Transport | null = null;
  private pendingFrame: Frame | null = null;
  private retryMs = 500;
  private closed = false;
  lastFrameId = 0;
  droppedStale = 0;

  constructor(
    private url: string,
    private events: ConnectionEvents,
    private factory: TransportFactory = webSocketTransport,
    private scheduler: (fn: () => void, ms: number) => void = (fn, ms) => setTimeout(fn, ms),
  ) {}

  connect(): void {
    this.closed = false;
    this.open();
  }

  private open(): void {
    this.events.onStatus?.("connecting");
    const t = this.factory(this.url);
    this.transport = t;
    t.onopen = () => {
      this.retryMs = 500;
      this.events.onStatus?.("open");
    };
    t.onmessage = (data) => this.handle(data);
    t.onclose = () => {
      this.events.onStatus?.("closed");
      this.transport = null;
      if (!this.closed) {
        const delay = this.retryMs;
        this.retryMs = Math.min(this.retryMs * 2, 8000);
        this.scheduler(() => this.open(), delay);
      }
    };
  }

  /** Handles one websocket message; exposed for tests. */
  handle(data: ArrayBuffer | string): void {
    if (typeof data === "string") {
      const msg = parseServerMessage(data);
      if (msg.type === "error") {
        this.events.onError?.(msg.message);
      } else if (msg.type === "hello") {
        this.events.onHello?.(msg);
      } else {
        const frame = this.pendingFrame;
        this.pendingFrame = null;
        if (!frame || frame.frameId !== msg.frame_id) {
          return; // stats without a matching frame: ignore
        }
        if (frame.frameId <= this.lastFrameId) {
          this.droppedStale += 1; // stale or duplicate frame: displayed ids are monotone
          return;
        }
        this.lastFrameId = frame.frameId;
        this.events.onFrame?.(frame, msg);
      }
    } else {
      this.pendingFrame = parseFrame(data);
    }
  }

  send(message: string): void {
    this.transport?.send(message);
  }

  close(): void {
    this.closed = true;
    this.transport?.close();
  }
}
