import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { COMMAND_TIMEOUT_MS, GatewayClient } from "../src/client.js";

class FakeSocket {
  static instances: FakeSocket[] = [];
  OPEN = 1;
  readyState = 0;
  sent: string[] = [];
  onopen: (() => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;

  constructor(public url: string) {
    FakeSocket.instances.push(this);
  }

  send(data: string) {
    this.sent.push(data);
  }

  close() {
    this.readyState = 3;
    this.onclose?.();
  }

  // test-side helpers
  open() {
    this.readyState = 1;
    this.onopen?.();
  }

  receive(payload: unknown) {
    this.onmessage?.({ data: JSON.stringify(payload) });
  }
}

function makeClient(cbs = {}) {
  FakeSocket.instances = [];
  const client = new GatewayClient("ws://test/ws", cbs, (url) => new FakeSocket(url) as any);
  return client;
}

beforeEach(() => {
  vi.useFakeTimers();
});

afterEach(() => {
  vi.useRealTimers();
});

describe("GatewayClient", () => {
  it("reports connected after a valid hello", () => {
    const statuses: string[] = [];
    const client = makeClient({ onStatus: (s: string) => statuses.push(s) });
    client.connect();
    const ws = FakeSocket.instances[0];
    ws.open();
    ws.receive({ type: "hello", schema: 1 });
    expect(statuses).toEqual(["connecting", "connected"]);
    client.close();
  });

  it("disconnects on schema mismatch", () => {
    let mismatch = 0;
    const client = makeClient({ onSchemaMismatch: () => (mismatch += 1) });
    client.connect();
    const ws = FakeSocket.instances[0];
    ws.open();
    ws.receive({ type: "hello", schema: 99 });
    expect(mismatch).toBe(1);
    expect(ws.readyState).toBe(3);
  });

  it("reconnects with growing backoff", () => {
    const client = makeClient();
    client.connect();
    FakeSocket.instances[0].open();
    FakeSocket.instances[0].close();
    expect(FakeSocket.instances).toHaveLength(1);
    vi.advanceTimersByTime(260); // initial backoff 250 ms
    expect(FakeSocket.instances).toHaveLength(2);
    FakeSocket.instances[1].close();
    vi.advanceTimersByTime(260); // second delay is larger: not yet
    expect(FakeSocket.instances).toHaveLength(2);
    vi.advanceTimersByTime(300);
    expect(FakeSocket.instances).toHaveLength(3);
    client.close();
  });

  it("resolves commands on matching command_result", async () => {
    const client = makeClient();
    client.connect();
    const ws = FakeSocket.instances[0];
    ws.open();
    const promise = client.send({ kind: "trigger_intent" });
    const sent = JSON.parse(ws.sent[0]);
    expect(sent.type).toBe("command");
    ws.receive({ type: "command_result", id: sent.id, ok: true, reason: "done" });
    await expect(promise).resolves.toEqual({ ok: true, reason: "done" });
    client.close();
  });

  it("times out unanswered commands after one second", async () => {
    const client = makeClient();
    client.connect();
    FakeSocket.instances[0].open();
    const promise = client.send({ kind: "trigger_intent" });
    vi.advanceTimersByTime(COMMAND_TIMEOUT_MS + 1);
    await expect(promise).resolves.toEqual({ ok: false, reason: "timeout" });
    client.close();
  });

  it("fails fast when not connected", async () => {
    const client = makeClient();
    await expect(client.send({ kind: "trigger_intent" })).resolves.toMatchObject({ ok: false });
  });

  it("counts unparseable messages", () => {
    let errors = 0;
    const client = makeClient({ onParseError: () => (errors += 1) });
    client.connect();
    const ws = FakeSocket.instances[0];
    ws.open();
    ws.onmessage?.({ data: "not json at all" });
    expect(errors).toBe(1);
    client.close();
  });
});
