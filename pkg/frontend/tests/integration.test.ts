// Live tests against the real gateway: spawn `reglove serve`, talk to it over
// a real WebSocket, and check the operator loop end to end.
import { spawn, ChildProcess } from "node:child_process";
import { fileURLToPath } from "node:url";
import path from "node:path";

import WebSocket from "ws";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

const REPO_ROOT = path.resolve(path.dirname(fileURLToPath(import.meta.url)), "..", "..");
const PORT = 8900 + Math.floor(Math.random() * 500);
const BASE = `http://127.0.0.1:${PORT}`;
const WS_URL = `ws://127.0.0.1:${PORT}/ws`;
const SNAPSHOT_PERIOD_MS = 20;

let service: ChildProcess;

type Json = Record<string, any>;

class TestSocket {
  ws!: WebSocket;
  inbox: Json[] = [];
  snapshots = new Map<number, Json>();
  private waiters: Array<() => void> = [];

  async connect(): Promise<void> {
    this.ws = new WebSocket(WS_URL);
    this.ws.on("message", (data) => {
      const msg = JSON.parse(String(data));
      this.inbox.push(msg);
      if (msg.type === "snapshot") this.snapshots.set(msg.seq, msg);
      this.waiters.splice(0).forEach((w) => w());
    });
    await new Promise<void>((resolve, reject) => {
      this.ws.once("open", resolve);
      this.ws.once("error", reject);
    });
  }

  close(): void {
    this.ws.close();
  }

  private nextMessage(timeoutMs = 5000): Promise<void> {
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => reject(new Error("socket wait timed out")), timeoutMs);
      this.waiters.push(() => {
        clearTimeout(timer);
        resolve();
      });
    });
  }

  async waitFor<T>(pick: () => T | undefined, timeoutMs = 10_000): Promise<T> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const found = pick();
      if (found !== undefined) return found;
      if (Date.now() > deadline) throw new Error("condition not reached");
      await this.nextMessage(Math.max(1, deadline - Date.now()));
    }
  }

  async command(command: Json): Promise<Json> {
    const id = Math.floor(Math.random() * 1e9);
    this.ws.send(JSON.stringify({ type: "command", id, command }));
    return this.waitFor(() =>
      this.inbox.find((m) => m.type === "command_result" && m.id === id),
    );
  }

  latestSnapshot(): Json | undefined {
    for (let i = this.inbox.length - 1; i >= 0; i--) {
      if (this.inbox[i].type === "snapshot") return this.inbox[i];
    }
    return undefined;
  }

  snapshotsAfter(index: number): Json[] {
    return this.inbox.slice(index).filter((m) => m.type === "snapshot");
  }
}

beforeAll(async () => {
  service = spawn(
    "python3",
    ["-m", "reglove.cli", "serve", "--port", String(PORT), "--scenarios-dir", "src/reglove/data"],
    { cwd: REPO_ROOT, stdio: ["ignore", "pipe", "pipe"] },
  );
  const deadline = Date.now() + 60_000;
  for (;;) {
    try {
      const res = await fetch(`${BASE}/health`);
      if (res.ok) break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error("service did not come up");
    await new Promise((r) => setTimeout(r, 250));
  }
});

afterAll(() => {
  service?.kill("SIGTERM");
});

describe("gateway integration", () => {
  it("health and catalogs respond", async () => {
    const health = (await (await fetch(`${BASE}/health`)).json()) as Json;
    expect(health.status).toBe("ok");
    expect(health.schema).toBe(1);
    const objects = (await (await fetch(`${BASE}/objects`)).json()) as Json[];
    expect(objects.map((o) => o.name)).toContain("mug");
    const scenarios = (await (await fetch(`${BASE}/scenarios`)).json()) as string[];
    expect(scenarios).toContain("demo_scenario");
  });

  it("hello announces the pinned schema", async () => {
    const sock = new TestSocket();
    await sock.connect();
    const hello = await sock.waitFor(() => sock.inbox.find((m) => m.type === "hello"));
    expect(hello.schema).toBe(1);
    sock.close();
  });

  it("trigger changes phase within two snapshot periods", async () => {
    const sock = new TestSocket();
    await sock.connect();
    await sock.command({ kind: "reset" });
    await sock.waitFor(() => (sock.latestSnapshot()?.phase === "idle" ? true : undefined));

    const before = sock.inbox.length;
    const result = await sock.command({ kind: "trigger_intent" });
    expect(result.ok).toBe(true);
    // the phase change must be visible within 2 snapshot periods of the ack
    const changed = await sock.waitFor(() => {
      const after = sock.snapshotsAfter(before).filter((s) => s.phase !== "idle");
      return after.length ? after[0] : undefined;
    });
    const ackSnapshot = sock.snapshotsAfter(before)[0];
    expect(changed.sim_time_ms - (ackSnapshot?.sim_time_ms ?? changed.sim_time_ms)).toBeLessThanOrEqual(
      2 * SNAPSHOT_PERIOD_MS,
    );
    sock.close();
  });

  it("override while paused in await_grasp marks the cycle overridden", async () => {
    const sock = new TestSocket();
    await sock.connect();
    await sock.command({ kind: "reset" });
    await sock.command({ kind: "pause" });
    const trigger = await sock.command({ kind: "trigger_intent" });
    expect(trigger.ok).toBe(true);
    const override = await sock.command({ kind: "override_grasp", grasp: "key" });
    expect(override.ok).toBe(true);
    await sock.command({ kind: "resume" });
    const classified = await sock.waitFor(() => {
      const snap = sock.latestSnapshot();
      return snap?.last_classification?.overridden ? snap : undefined;
    });
    expect(classified.last_classification.overridden).toBe(true);
    const held = await sock.waitFor(() => {
      const snap = sock.latestSnapshot();
      return snap?.phase === "hold" ? snap : undefined;
    });
    // key grasp: all five fingers flexed
    for (const flex of held.flexion) expect(flex).toBeLessThanOrEqual(-0.8);
    sock.close();
  });

  it("rejects overrides mid-flexion with a phase reason", async () => {
    const sock = new TestSocket();
    await sock.connect();
    await sock.command({ kind: "reset" });
    await sock.command({ kind: "trigger_intent" });
    await sock.waitFor(() => (sock.latestSnapshot()?.phase === "flex" ? true : undefined));
    const result = await sock.command({ kind: "override_grasp", grasp: "key" });
    expect(result.ok).toBe(false);
    expect(result.reason).toBe("phase");
    sock.close();
  });

  it("fault injection shows up and clears", async () => {
    const sock = new TestSocket();
    await sock.connect();
    await sock.command({ kind: "reset" });
    const inject = await sock.command({
      kind: "inject_fault",
      fault: { kind: "stuck_valve", finger: "index", route: "to_vacuum" },
    });
    expect(inject.ok).toBe(true);
    const snap = await sock.waitFor(() => {
      const s = sock.latestSnapshot();
      return s && s.active_faults.length > 0 ? s : undefined;
    });
    expect(snap.active_faults[0]).toContain("StuckValve");
    await sock.command({ kind: "clear_faults" });
    await sock.waitFor(() => {
      const s = sock.latestSnapshot();
      return s && s.active_faults.length === 0 ? true : undefined;
    });
    sock.close();
  });

  it("a reconnecting client sees the same state as a persistent one", async () => {
    const persistent = new TestSocket();
    await persistent.connect();
    await persistent.command({ kind: "reset" });

    const flaky = new TestSocket();
    await flaky.connect();
    await flaky.waitFor(() => flaky.latestSnapshot());
    flaky.close();
    await new Promise((r) => setTimeout(r, 150));

    const reconnected = new TestSocket();
    await reconnected.connect();
    const after = await reconnected.waitFor(() => reconnected.latestSnapshot());
    // find a seq both clients observed after the reconnect
    const common = await persistent.waitFor(() => {
      for (const [seq, snap] of reconnected.snapshots) {
        if (seq >= after.seq && persistent.snapshots.has(seq)) {
          return [snap, persistent.snapshots.get(seq)!] as const;
        }
      }
      return undefined;
    });
    const [fromReconnected, fromPersistent] = common;
    expect(fromReconnected).toEqual(fromPersistent);
    persistent.close();
    reconnected.close();
  });
});
