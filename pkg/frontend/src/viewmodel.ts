// View model: a pure projection of the latest snapshot plus link health.
// It never extrapolates simulation state; reconnecting yields exactly the
// view a persistent client has, because everything rendered comes from the
// most recent snapshot.

import { Snapshot, isValidSnapshot } from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "stale" | "disconnected";

export const STALE_AFTER_MS = 500;
export const LATENCY_WINDOW = 200;

export class ConsoleViewModel {
  status: ConnectionStatus = "connecting";
  snapshot: Snapshot | null = null;
  parseErrors = 0;
  lastSnapshotAt: number | null = null; // wall clock, ms
  schemaMismatch = false;

  applySnapshot(candidate: unknown, nowMs: number): boolean {
    if (!isValidSnapshot(candidate)) {
      this.parseErrors += 1;
      return false;
    }
    // Out-of-order delivery (reconnect races): keep the newest only.
    if (this.snapshot && candidate.seq < this.snapshot.seq && candidate.sim_time_ms <= this.snapshot.sim_time_ms) {
      return false;
    }
    this.snapshot = candidate;
    this.lastSnapshotAt = nowMs;
    this.status = "connected";
    return true;
  }

  /** Latency histogram input: at most the latest LATENCY_WINDOW samples. */
  latencyWindow(): number[] {
    const recent = this.snapshot?.latency.recent_ms ?? [];
    return recent.slice(-LATENCY_WINDOW);
  }

  /** Recompute link health from the wall clock; called on a timer. */
  checkStale(nowMs: number): void {
    if (this.status === "connected" && this.lastSnapshotAt !== null) {
      if (nowMs - this.lastSnapshotAt > STALE_AFTER_MS) this.status = "stale";
    }
  }

  markDisconnected(): void {
    this.status = "disconnected";
  }

  markConnecting(): void {
    this.status = "connecting";
  }

  phaseLabel(): string {
    if (!this.snapshot) return "-";
    const { phase, fault_code } = this.snapshot;
    return fault_code ? `${phase} (${fault_code})` : phase;
  }

  histogram(bins: number, loMs = 0, hiMs = 80): number[] {
    const counts = new Array(bins).fill(0);
    const width = (hiMs - loMs) / bins;
    for (const v of this.latencyWindow()) {
      const idx = Math.min(bins - 1, Math.max(0, Math.floor((v - loMs) / width)));
      counts[idx] += 1;
    }
    return counts;
  }
}
