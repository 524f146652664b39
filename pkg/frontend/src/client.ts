// Reconnecting WebSocket client for the gateway: exponential backoff,
// schema check on hello, stale detection, and command round-trips with a
// one-second timeout.

import { OperatorCommand, parseServerMessage, Snapshot, SNAPSHOT_SCHEMA } from "./protocol.js";

export interface ClientCallbacks {
  onSnapshot?: (snap: Snapshot) => void;
  onStatus?: (status: "connecting" | "connected" | "disconnected") => void;
  onParseError?: () => void;
  onSchemaMismatch?: (got: number) => void;
}

export const COMMAND_TIMEOUT_MS = 1000;

const BACKOFF_INITIAL_MS = 250;
const BACKOFF_FACTOR = 1.7;
const BACKOFF_MAX_MS = 5000;

interface Pending {
  resolve: (r: { ok: boolean; reason: string }) => void;
  timer: ReturnType<typeof setTimeout>;
}

export class GatewayClient {
  private ws: WebSocket | null = null;
  private nextId = 1;
  private pending = new Map<number, Pending>();
  private backoff = BACKOFF_INITIAL_MS;
  private closed = false;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private cbs: ClientCallbacks = {},
    private wsFactory: (url: string) => WebSocket = (u) => new WebSocket(u),
  ) {}

  connect(): void {
    this.closed = false;
    this.cbs.onStatus?.("connecting");
    let ws: WebSocket;
    try {
      ws = this.wsFactory(this.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.ws = ws;
    ws.onopen = () => {
      this.backoff = BACKOFF_INITIAL_MS;
    };
    ws.onmessage = (ev: MessageEvent) => this.handleMessage(String(ev.data));
    ws.onclose = () => {
      this.cbs.onStatus?.("disconnected");
      this.failAllPending("connection closed");
      if (!this.closed) this.scheduleReconnect();
    };
    ws.onerror = () => {
      // onclose follows; nothing to do here
    };
  }

  close(): void {
    this.closed = true;
    if (this.reconnectTimer) clearTimeout(this.reconnectTimer);
    this.ws?.close();
    this.failAllPending("client closed");
  }

  private scheduleReconnect(): void {
    if (this.closed) return;
    this.reconnectTimer = setTimeout(() => this.connect(), this.backoff);
    this.backoff = Math.min(this.backoff * BACKOFF_FACTOR, BACKOFF_MAX_MS);
  }

  private handleMessage(raw: string): void {
    const msg = parseServerMessage(raw);
    if (msg === null) {
      this.cbs.onParseError?.();
      return;
    }
    if (msg.type === "hello") {
      if (msg.schema !== SNAPSHOT_SCHEMA) {
        this.cbs.onSchemaMismatch?.(msg.schema);
        this.close();
        return;
      }
      this.cbs.onStatus?.("connected");
      return;
    }
    if (msg.type === "snapshot") {
      this.cbs.onSnapshot?.(msg);
      return;
    }
    const pending = msg.id !== null ? this.pending.get(msg.id) : undefined;
    if (pending && msg.id !== null) {
      this.pending.delete(msg.id);
      clearTimeout(pending.timer);
      pending.resolve({ ok: msg.ok, reason: msg.reason ?? "" });
    }
  }

  /** Send a command; resolves with the gateway's verdict or a timeout. */
  send(command: OperatorCommand): Promise<{ ok: boolean; reason: string }> {
    const ws = this.ws;
    if (!ws || ws.readyState !== ws.OPEN) {
      return Promise.resolve({ ok: false, reason: "not connected" });
    }
    const id = this.nextId++;
    return new Promise((resolve) => {
      const timer = setTimeout(() => {
        this.pending.delete(id);
        resolve({ ok: false, reason: "timeout" });
      }, COMMAND_TIMEOUT_MS);
      this.pending.set(id, { resolve, timer });
      ws.send(JSON.stringify({ type: "command", id, command }));
    });
  }

  private failAllPending(reason: string): void {
    for (const [, p] of this.pending) {
      clearTimeout(p.timer);
      p.resolve({ ok: false, reason });
    }
    this.pending.clear();
  }
}
