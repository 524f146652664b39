"""Closed-loop simulation: host (perception + link) against the MCU-side
controller and pneumatic plant, on a deterministic 1 ms tick grid.

The host and controller exchange real protocol bytes in-process. Plant
integration runs through PlantEngine between scheduled events; pressure
interlocks and flexion early-exit are driven by engine watches that hand
control back to the pure controller functions at the exact crossing tick.
"""
from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import controller as ctrl
from . import protocol as proto
from .controller import ControllerState, Phase, SafetyConfig
from .grasps import FINGERS, ActuationPlan, Finger, GraspType
from .perception import (
    Classifier,
    LatencyModel,
    SceneObject,
    StageSample,
    sample_stages,
)
from .plant import PlantConfig, PlantEngine, PlantFault, StopReason, grip_predicate

WATCHDOG_POLL_MS = 25
_FIRE_FORGET = (proto.Heartbeat, proto.Telemetry)

log = logging.getLogger(__name__)


@dataclass
class TriggerRecord:
    index: int
    t_trigger_ms: float
    object_name: str
    true_grasp: GraspType
    predicted: GraspType
    confidence: float
    overridden: bool
    stages: StageSample
    controller_dispatch_ms: float = 0.0
    total_ms: float = 0.0
    grip_ok: Optional[bool] = None
    hold_entry_ms: Optional[float] = None
    hold_drift_kpa: Optional[float] = None

    @property
    def stage_list(self) -> list[float]:
        s = self.stages
        return [
            s.frame_wait_ms,
            s.capture_transfer_ms,
            s.preprocess_infer_ms,
            s.decision_protocol_ms,
            self.controller_dispatch_ms,
        ]


@dataclass
class FaultLogEntry:
    t_ms: float
    source: str  # injected | controller | link | plant
    detail: str


@dataclass
class WireStats:
    frames_host_to_mcu: int = 0
    frames_mcu_to_host: int = 0
    decode_diagnostics: int = 0


class _Heap:
    """Deterministic time-ordered queue; FIFO among events on the same tick."""

    def __init__(self) -> None:
        self._items: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = 0

    def push(self, tick: int, action: Callable[[], None]) -> None:
        heapq.heappush(self._items, (tick, self._seq, action))
        self._seq += 1

    def peek_tick(self) -> Optional[int]:
        return self._items[0][0] if self._items else None

    def pop(self) -> tuple[int, Callable[[], None]]:
        tick, _, action = heapq.heappop(self._items)
        return tick, action


class ClosedLoopSim:
    """One glove: perception host + serial link + controller FSM + plant."""

    def __init__(
        self,
        *,
        seed: int,
        classifier: Classifier,
        plant_cfg: PlantConfig | None = None,
        safety_cfg: SafetyConfig | None = None,
        latency_model: LatencyModel | None = None,
        link_cfg: proto.LinkConfig | None = None,
        plan_table=None,
        stochastic_frame_phase: bool = True,
        telemetry_interval_ms: int = 20,
        trace_interval_ms: int = 0,
        grip_threshold: float = 0.8,
    ) -> None:
        self.plant_cfg = plant_cfg or PlantConfig()
        if self.plant_cfg.dt_ms != 1.0:
            raise ValueError("the closed-loop driver runs on a 1 ms tick grid")
        self.safety_cfg = safety_cfg or SafetyConfig()
        self.latency_model = latency_model or LatencyModel()
        self.link_cfg = link_cfg or proto.LinkConfig()
        self.plant_cfg.validate()
        self.safety_cfg.validate()
        self.latency_model.validate()
        self.classifier = classifier
        self.plan_table = plan_table
        self.stochastic_frame_phase = stochastic_frame_phase
        self.grip_threshold = grip_threshold

        self.rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.tick = 0
        self.ctrl_state: ControllerState = ctrl.initial_state()
        self.command = ctrl.standing_command(self.ctrl_state, self.safety_cfg)
        self.engine = PlantEngine(self.plant_cfg, self.command)

        self._heap = _Heap()
        self._host_link = proto.LinkEndpoint(self.link_cfg)
        self._mcu_link = proto.LinkEndpoint(self.link_cfg)
        self._host_decoder = proto.StreamDecoder()
        self.wire = WireStats()
        self.heartbeats_enabled = True

        self.triggers: list[TriggerRecord] = []
        self.fault_log: list[FaultLogEntry] = []
        self.events_ignored = 0
        self.trace: dict[str, list] = {"t_ms": [], "pressures": [], "watts": [], "phase": []}
        self.last_telemetry: Optional[proto.Telemetry] = None
        self.on_idle: Optional[Callable[[ClosedLoopSim], None]] = None
        self.on_command_change: Optional[Callable[[ClosedLoopSim], None]] = None
        self._pending_override: Optional[GraspType] = None
        self._pending_dispatch: Optional[list] = None
        self._hold_entry_pressures: Optional[tuple[float, ...]] = None
        self._active_trigger: Optional[TriggerRecord] = None
        self._release_after_ms: Optional[float] = None

        self._schedule(0, self._heartbeat_due)
        self._schedule(WATCHDOG_POLL_MS, self._watchdog_poll)
        self._schedule(telemetry_interval_ms, self._telemetry_due)
        self.telemetry_interval_ms = telemetry_interval_ms
        self.trace_interval_ms = trace_interval_ms
        if trace_interval_ms:
            self._schedule(0, self._trace_sample)

    # -- scheduling ------------------------------------------------------------

    def _schedule(self, t_ms: float, action: Callable[[], None]) -> None:
        self._heap.push(max(self.tick, math.ceil(t_ms)), action)

    def schedule_trigger(
        self,
        t_ms: float,
        obj: SceneObject,
        release_after_ms: Optional[float] = 1000.0,
        override: Optional[GraspType] = None,
    ) -> None:
        self._schedule(t_ms, lambda: self._fire_trigger(obj, release_after_ms, override))

    def schedule_fault(self, t_ms: float, fault: PlantFault) -> None:
        self._schedule(t_ms, lambda: self._inject_fault(fault))

    def schedule_release(self, t_ms: float) -> None:
        self._schedule(t_ms, lambda: self._host_send(proto.Release()))

    def schedule_abort(self, t_ms: float) -> None:
        self._schedule(t_ms, lambda: self._host_send(proto.Abort()))

    def stop_heartbeats(self) -> None:
        self.heartbeats_enabled = False

    # -- wire plumbing -----------------------------------------------------------

    def _mcu_receive(self, frame: bytes) -> bytes:
        """Deliver host bytes to the controller side; returns response bytes."""
        self.wire.frames_host_to_mcu += 1
        decoded, diags, _ = proto.decode_stream(frame)
        self.wire.decode_diagnostics += len(diags)
        out = b""
        for item in decoded:
            msg = item.message
            if isinstance(msg, proto.Heartbeat):
                self._apply_event(ctrl.HeartbeatEvent())
                continue
            if isinstance(msg, proto.SetGrasp):
                self._apply_event(ctrl.GraspCommand(GraspType.from_wire(msg.grasp_id)))
            elif isinstance(msg, proto.Release):
                self._apply_event(ctrl.ReleaseCommand())
            elif isinstance(msg, proto.Abort):
                self._apply_event(ctrl.AbortCommand())
            out += proto.encode(proto.Ack(acked_seq=item.seq), self._mcu_link.next_seq())
            self.wire.frames_mcu_to_host += 1
        return out

    def _host_send(self, msg: proto.Message) -> proto.SendResult:
        result = self._host_link.send(msg, self._mcu_receive)
        if result.outcome is proto.SendOutcome.LINK_FAULT:
            self.fault_log.append(
                FaultLogEntry(self.tick * 1.0, "link", f"delivery failed: {type(msg).__name__}")
            )
        return result

    # -- periodic events ---------------------------------------------------------

    def _heartbeat_due(self) -> None:
        if self.heartbeats_enabled:
            self._host_send(proto.Heartbeat())
        self._schedule(self.tick + self.link_cfg.heartbeat_interval_ms, self._heartbeat_due)

    def _watchdog_poll(self) -> None:
        result = ctrl.watchdog_check(self.ctrl_state, float(self.tick), self.safety_cfg)
        if result is not None:
            self._apply_transition(*result)
            self.fault_log.append(FaultLogEntry(self.tick * 1.0, "controller", "host_lost"))
            self._send_fault_notice()
        self._schedule(self.tick + WATCHDOG_POLL_MS, self._watchdog_poll)

    def _telemetry_due(self) -> None:
        msg = self._telemetry_message()
        self._mcu_link.send(msg, self._host_bytes)
        self._schedule(self.tick + self.telemetry_interval_ms, self._telemetry_due)

    def _host_bytes(self, frame: bytes) -> bytes:
        self.wire.frames_mcu_to_host += 1
        for item in self._host_decoder.feed(frame):
            if isinstance(item.message, proto.Telemetry):
                self.last_telemetry = item.message
        return b""

    def _telemetry_message(self) -> proto.Telemetry:
        cmd = self.command
        valve_bitmap = 0
        for f in FINGERS:
            if cmd.finger_valve[f] is not ctrl.ValveRoute.CLOSED:
                valve_bitmap |= 1 << f
        if cmd.exhaust_open:
            valve_bitmap |= 1 << 5
        pump_bitmap = int(cmd.inflation_pump) | (int(cmd.vacuum_pump) << 1)
        return proto.Telemetry(
            phase=int(self.ctrl_state.phase),
            pressures_dkpa=tuple(proto.kpa_to_wire(p) for p in self.engine.pressures),
            valve_bitmap=valve_bitmap,
            pump_bitmap=pump_bitmap,
        )

    def _send_fault_notice(self) -> None:
        code = self.ctrl_state.fault_code
        self._mcu_link.send(proto.Fault(code=int(code) if code else 0), self._host_bytes)

    def _trace_sample(self) -> None:
        self.trace["t_ms"].append(float(self.tick))
        self.trace["pressures"].append(list(self.engine.pressures))
        self.trace["watts"].append(self.engine.watts)
        self.trace["phase"].append(int(self.ctrl_state.phase))
        self._schedule(self.tick + self.trace_interval_ms, self._trace_sample)

    # -- trigger pipeline ----------------------------------------------------------

    def set_pending_override(self, grasp: Optional[GraspType]) -> None:
        self._pending_override = grasp

    def _fire_trigger(
        self, obj: SceneObject, release_after_ms: Optional[float], override: Optional[GraspType]
    ) -> None:
        # The tactile switch is on the MCU side: the FSM arms immediately while
        # the host pipeline runs.
        self._apply_event(ctrl.IntentEdge())
        output = self.classifier.classify(obj)
        stages = sample_stages(
            self.rng,
            self.latency_model,
            trigger_time_ms=None if self.stochastic_frame_phase else float(self.tick),
            inference_ms=output.inference_latency_ms,
        )
        chosen = override if override is not None else self._pending_override
        record = TriggerRecord(
            index=len(self.triggers),
            t_trigger_ms=float(self.tick),
            object_name=obj.name,
            true_grasp=obj.true_grasp,
            predicted=output.predicted,
            confidence=output.confidence,
            overridden=chosen is not None,
            stages=stages,
        )
        self._pending_override = None
        self.triggers.append(record)
        grasp = chosen if chosen is not None else output.predicted
        self._pending_dispatch = [record, grasp, release_after_ms]
        send_at = record.t_trigger_ms + record.stages.host_total_ms
        self._schedule(send_at, self._dispatch_grasp)

    def _dispatch_grasp(self) -> None:
        if self._pending_dispatch is None:
            return
        record, grasp, release_after_ms = self._pending_dispatch
        self._pending_dispatch = None
        record.controller_dispatch_ms = float(self.tick) - record.t_trigger_ms - record.stages.host_total_ms
        record.total_ms = record.stages.host_total_ms + record.controller_dispatch_ms
        self._active_trigger = record
        self._release_after_ms = release_after_ms
        self._host_send(proto.SetGrasp(grasp_id=grasp.to_wire()))

    def _inject_fault(self, fault: PlantFault) -> None:
        self.engine.add_fault(fault)
        self.fault_log.append(FaultLogEntry(self.tick * 1.0, "injected", repr(fault)))

    def clear_plant_faults(self) -> None:
        self.engine.clear_faults()

    # -- operator entry points (applied between ticks by the session driver) -------

    def operator_intent(
        self, obj: SceneObject, release_after_ms: Optional[float] = None
    ) -> tuple[bool, str]:
        """The tactile-switch edge: starts a grasp cycle from Idle, releases from Hold."""
        phase = self.ctrl_state.phase
        if phase is Phase.IDLE:
            self._fire_trigger(obj, release_after_ms, None)
            return True, "grasp cycle started"
        if phase is Phase.HOLD:
            self._apply_event(ctrl.IntentEdge())
            return True, "releasing"
        return False, f"intent ignored in phase {phase.name.lower()}"

    def operator_override(self, grasp: GraspType) -> tuple[bool, str]:
        """Replace the classifier's choice. Valid in Idle (arms the next cycle),
        AwaitGrasp (rewrites the in-flight dispatch), and Hold (caller re-grasps)."""
        phase = self.ctrl_state.phase
        if phase is Phase.AWAIT_GRASP:
            if self._pending_dispatch is not None:
                self._pending_dispatch[1] = grasp
                self._pending_dispatch[0].overridden = True
                return True, "in-flight grasp replaced"
            self._pending_override = grasp
            return True, "override armed"
        if phase is Phase.IDLE:
            self._pending_override = grasp
            return True, "override armed for next trigger"
        if phase is Phase.HOLD:
            return True, "release and re-grasp with override"
        return False, "phase"

    def operator_abort(self) -> None:
        self._host_send(proto.Abort())

    def operator_clear_faults(self) -> None:
        """Clear injected plant faults and recover the controller from Fault."""
        self.engine.clear_faults()
        if self.ctrl_state.phase is Phase.FAULT:
            state = ControllerState(
                phase=Phase.IDLE,
                time_ms=float(self.tick),
                last_heartbeat_ms=float(self.tick),
            )
            self._apply_transition(state, ctrl.standing_command(state, self.safety_cfg))

    # -- controller/engine coupling --------------------------------------------------

    def _apply_event(self, event: ctrl.ControllerEvent) -> None:
        # The MCU loop stamps its clock before servicing any input, so events
        # arriving between phase deadlines see the current time.
        if not isinstance(event, ctrl.Tick) and self.ctrl_state.time_ms < self.tick:
            self._apply_event(ctrl.Tick(float(self.tick)))
        before = self.ctrl_state.phase
        state, command = ctrl.step(self.ctrl_state, event, self.safety_cfg, self.plan_table)
        if state is self.ctrl_state and isinstance(
            event, (ctrl.IntentEdge, ctrl.GraspCommand, ctrl.ReleaseCommand)
        ):
            self.events_ignored += 1
            log.warning("%s ignored in phase %s", type(event).__name__, before.name)
        self._apply_transition(state, command)
        if state.phase is not before:
            self._on_phase_entered(state.phase, before)

    def _apply_transition(self, state: ControllerState, command) -> None:
        self.ctrl_state = state
        if command != self.command:
            self.command = command
            self.engine.set_command(command)
            if self.on_command_change is not None:
                self.on_command_change(self)

    def _on_phase_entered(self, phase: Phase, previous: Phase) -> None:
        cfg = self.safety_cfg
        if phase is Phase.EXTEND:
            self._schedule(self.tick + cfg.extend_ms, self._phase_deadline)
        elif phase is Phase.FLEX:
            self._schedule(self.tick + cfg.flex_settle_ms, self._phase_deadline)
        elif phase is Phase.RELEASE:
            self._finish_hold_drift()
            self._schedule(self.tick + cfg.release_vent_ms, self._phase_deadline)
        elif phase is Phase.HOLD:
            self._on_hold_entered()
        elif phase is Phase.IDLE and previous is Phase.RELEASE:
            if self.on_idle is not None:
                self.on_idle(self)
        elif phase is Phase.FAULT:
            self._finish_hold_drift()

    def _phase_deadline(self) -> None:
        self._apply_event(ctrl.Tick(float(self.tick)))

    def _on_hold_entered(self) -> None:
        record = self._active_trigger
        self._hold_entry_pressures = tuple(self.engine.pressures)
        if record is None:
            return
        record.hold_entry_ms = float(self.tick)
        plan = self.ctrl_state.active_plan
        if plan is not None:
            record.grip_ok = grip_predicate(
                self.engine.snapshot(), plan, self.plant_cfg, self.grip_threshold
            )
        if self._release_after_ms is not None:
            self._schedule(self.tick + self._release_after_ms, self._auto_release)

    def _auto_release(self) -> None:
        if self.ctrl_state.phase is Phase.HOLD:
            self._host_send(proto.Release())

    def _finish_hold_drift(self) -> None:
        record = self._active_trigger
        if record is None or self._hold_entry_pressures is None:
            return
        drift = max(
            abs(p - q) for p, q in zip(self.engine.pressures, self._hold_entry_pressures)
        )
        record.hold_drift_kpa = drift
        self._hold_entry_pressures = None
        self._active_trigger = None

    # -- main loop -----------------------------------------------------------------

    def _engine_watches(self):
        flex_watch = None
        release_watch = None
        state = self.ctrl_state
        if state.phase is Phase.FLEX and state.active_plan is not None:
            idx = tuple(
                int(f) for f in FINGERS if state.active_plan.targets[f].value == "flex"
            )
            if idx:
                flex_watch = (idx, self.safety_cfg.flex_early_exit_kpa)
        if state.soft_latched and state.phase is not Phase.FAULT:
            release_watch = (
                tuple(int(f) for f in state.soft_latched),
                self.safety_cfg.soft_release_fraction * self.safety_cfg.p_soft_limit_kpa,
            )
        return flex_watch, release_watch

    def _handle_watch(self, reason: StopReason) -> None:
        pressures = tuple(self.engine.pressures)
        if reason is StopReason.FLEX_WATCH:
            self._apply_event(ctrl.PressureReport(pressures))
            return
        result = ctrl.safety_override(self.ctrl_state, pressures, self.safety_cfg)
        if result is not None:
            state, command = result
            faulted = state.phase is Phase.FAULT and self.ctrl_state.phase is not Phase.FAULT
            self._apply_transition(state, command)
            if faulted:
                self.fault_log.append(
                    FaultLogEntry(self.tick * 1.0, "controller", "over_pressure")
                )
                self._send_fault_notice()
        elif reason is StopReason.PRESSURE_WATCH:
            # Watch level reached but no action needed (exact-threshold grazing):
            # nudge one tick so the loop cannot spin.
            self.engine.run(1)
            self.tick += 1

    def run_until(self, t_end_ms: float) -> None:
        t_end = math.ceil(t_end_ms)
        while self.tick < t_end:
            next_tick = self._heap.peek_tick()
            target = t_end if next_tick is None else min(next_tick, t_end)
            if target > self.tick:
                flex_watch, release_watch = self._engine_watches()
                n = target - self.tick
                done, reason = self.engine.run(
                    n,
                    watch_abs_kpa=self.safety_cfg.p_soft_limit_kpa,
                    flex_watch=flex_watch,
                    release_watch=release_watch,
                )
                self.tick += done
                if reason is not StopReason.COMPLETED:
                    self._handle_watch(reason)
                    continue
            while True:
                next_tick = self._heap.peek_tick()
                if next_tick is None or next_tick > self.tick:
                    break
                _, action = self._heap.pop()
                action()

    # -- results ---------------------------------------------------------------------

    @property
    def sim_time_ms(self) -> float:
        return float(self.tick)

    def mean_power_w(self) -> float:
        if self.tick == 0:
            return 0.0
        return self.engine.energy_joules / (self.tick / 1000.0)
