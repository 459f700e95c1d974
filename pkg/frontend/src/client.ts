/**
 * Transports: a browser WebSocket transport (via the bundled bridge) and an
 * in-process loopback used by the tests' mock server.
 */

import type { Transport } from "./protocol.js";

export class WebSocketTransport implements Transport {
  private ws: WebSocket;
  private handlers: Array<(line: string) => void> = [];
  private backlog: string[] = [];

  constructor(url: string) {
    this.ws = new WebSocket(url);
    this.ws.onmessage = (ev) => {
      for (const line of String(ev.data).split("\n")) {
        if (line.trim().length === 0) continue;
        for (const h of this.handlers) h(line);
      }
    };
    this.ws.onopen = () => {
      for (const line of this.backlog.splice(0)) this.ws.send(line + "\n");
    };
  }

  send(line: string): void {
    if (this.ws.readyState === WebSocket.OPEN) this.ws.send(line + "\n");
    else this.backlog.push(line);
  }

  onMessage(handler: (line: string) => void): void {
    this.handlers.push(handler);
  }

  close(): void {
    this.ws.close();
  }
}

/** Synchronous loopback pair for tests: client lines in, scripted lines out. */
export class LoopbackTransport implements Transport {
  outbound: string[] = [];
  private handlers: Array<(line: string) => void> = [];

  send(line: string): void {
    this.outbound.push(line);
    this.onSend?.(line);
  }

  onMessage(handler: (line: string) => void): void {
    this.handlers.push(handler);
  }

  deliver(obj: unknown): void {
    const line = typeof obj === "string" ? obj : JSON.stringify(obj);
    for (const h of this.handlers) h(line);
  }

  close(): void {}

  onSend: ((line: string) => void) | null = null;
}
