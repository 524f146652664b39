// Message schema shared with the gateway. The console renders only what a
// snapshot carries; schema is pinned and checked at connect.

export const SNAPSHOT_SCHEMA = 1;

export const FINGERS = ["thumb", "index", "middle", "ring", "little"] as const;
export const GRASPS = ["pinch", "power", "three-jaw chuck", "tool", "key"] as const;

export interface Classification {
  object: string;
  true_grasp: string;
  predicted: string;
  confidence: number;
  overridden: boolean;
  total_ms: number;
  grip_ok: boolean | null;
}

export interface Snapshot {
  schema: number;
  seq: number;
  sim_time_ms: number;
  phase: string;
  fault_code: string | null;
  pressures_kpa: number[];
  flexion: number[];
  valves: string[];
  exhaust_open: boolean;
  pumps: { inflation: boolean; vacuum: boolean };
  soft_latched: string[];
  last_classification: Classification | null;
  latency: { n: number; recent_ms: number[]; mean_ms: number | null };
  mean_power_w: number;
  energy_joules: number;
  active_faults: string[];
  burst: string | null;
  paused: boolean;
  scenario: string;
  current_object: string;
}

export interface CommandResult {
  type: "command_result";
  id: number | null;
  ok: boolean;
  reason: string;
}

export type ServerMessage =
  | { type: "hello"; schema: number }
  | ({ type: "snapshot" } & Snapshot)
  | CommandResult;

export type OperatorCommand =
  | { kind: "trigger_intent" }
  | { kind: "select_object"; name: string }
  | { kind: "override_grasp"; grasp: string }
  | { kind: "inject_fault"; fault: Record<string, unknown> }
  | { kind: "clear_faults" }
  | { kind: "set_classifier"; mode: "stub" | "confusion" }
  | { kind: "abort" }
  | { kind: "reset" }
  | { kind: "start_scenario"; name: string }
  | { kind: "pause" }
  | { kind: "resume" };

export function parseServerMessage(raw: string): ServerMessage | null {
  let data: any;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (!data || typeof data !== "object") return null;
  if (data.type === "hello") {
    return typeof data.schema === "number" ? data : null;
  }
  if (data.type === "command_result") {
    return typeof data.ok === "boolean" ? data : null;
  }
  if (data.type === "snapshot") {
    return isValidSnapshot(data) ? (data as { type: "snapshot" } & Snapshot) : null;
  }
  return null;
}

export function isValidSnapshot(s: any): s is Snapshot {
  return (
    s &&
    s.schema === SNAPSHOT_SCHEMA &&
    typeof s.seq === "number" &&
    typeof s.sim_time_ms === "number" &&
    typeof s.phase === "string" &&
    Array.isArray(s.pressures_kpa) &&
    s.pressures_kpa.length === 5 &&
    Array.isArray(s.flexion) &&
    s.flexion.length === 5 &&
    Array.isArray(s.valves) &&
    s.valves.length === 5 &&
    s.pumps &&
    typeof s.pumps.inflation === "boolean" &&
    typeof s.pumps.vacuum === "boolean" &&
    s.latency &&
    Array.isArray(s.latency.recent_ms)
  );
}
