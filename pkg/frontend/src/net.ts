// Session socket with automatic reconnect.  Wraps the browser WebSocket
// behind a tiny interface so tests can drive it with a fake, splits frames
// into lines, and surfaces every parsed message through one callback.  A
// line that fails to parse is reported and skipped; it does not close the
// connection.

import { LineSplitter, parseServerLine, type ServerMessage } from "./protocol";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type NetEvent =
  | { kind: "open" }
  | { kind: "message"; msg: ServerMessage }
  | { kind: "closed" }
  | { kind: "bad-line"; error: string };

export interface SessionSocketOptions {
  reconnectDelayMs?: number;
  setTimer?: (fn: () => void, ms: number) => unknown;
  clearTimer?: (handle: unknown) => void;
}

export class SessionSocket {
  private socket: SocketLike | null = null;
  private splitter = new LineSplitter();
  private timer: unknown = null;
  private stopped = false;
  private readonly delay: number;
  private readonly setTimer: (fn: () => void, ms: number) => unknown;
  private readonly clearTimer: (handle: unknown) => void;

  constructor(
    private url: string,
    private factory: SocketFactory,
    private onEvent: (ev: NetEvent) => void,
    opts: SessionSocketOptions = {},
  ) {
    this.delay = opts.reconnectDelayMs ?? 1000;
    this.setTimer = opts.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
    this.clearTimer = opts.clearTimer ?? ((h) => clearTimeout(h as number));
  }

  start(): void {
    this.stopped = false;
    this.open();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      this.clearTimer(this.timer);
      this.timer = null;
    }
    this.socket?.close();
    this.socket = null;
  }

  send(line: string): void {
    this.socket?.send(line);
  }

  private open(): void {
    this.splitter = new LineSplitter(); // a new connection starts a new stream
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.onopen = () => this.onEvent({ kind: "open" });
    sock.onmessage = (ev) => this.handleFrame(String(ev.data));
    sock.onclose = () => {
      if (this.socket !== sock) return; // superseded by a newer connection
      this.socket = null;
      this.onEvent({ kind: "closed" });
      if (!this.stopped) {
        this.timer = this.setTimer(() => {
          this.timer = null;
          if (!this.stopped) this.open();
        }, this.delay);
      }
    };
  }

  private handleFrame(text: string): void {
    for (const line of this.splitter.push(text)) {
      try {
        this.onEvent({ kind: "message", msg: parseServerLine(line) });
      } catch (err) {
        this.onEvent({ kind: "bad-line", error: String(err) });
      }
    }
  }
}
