// WebSocket client with exponential-backoff reconnect. Inputs produced while
// disconnected are dropped (the server falls back to the zero command).

import { parseServerFrame, ServerFrame } from "./protocol.js";

export class Connection {
  private ws: WebSocket | null = null;
  private backoffMs = 250;
  private closed = false;

  onFrame: (f: ServerFrame) => void = () => {};
  onStatus: (connected: boolean) => void = () => {};

  constructor(private url: string) {}

  start() {
    this.closed = false;
    this.connect();
  }

  private connect() {
    if (this.closed) return;
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.backoffMs = 250;
      this.onStatus(true);
    };
    ws.onmessage = (ev: MessageEvent) => {
      const frame = parseServerFrame(String(ev.data));
      if (frame) this.onFrame(frame);
    };
    ws.onclose = () => {
      this.onStatus(false);
      this.ws = null;
      if (!this.closed) {
        setTimeout(() => this.connect(), this.backoffMs);
        this.backoffMs = Math.min(this.backoffMs * 2, 4000);
      }
    };
    ws.onerror = () => ws.close();
  }

  send(obj: unknown): boolean {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(JSON.stringify(obj));
      return true;
    }
    return false;
  }

  stop() {
    this.closed = true;
    this.ws?.close();
  }
}
