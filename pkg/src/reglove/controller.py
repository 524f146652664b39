"""Actuator-side controller: a pure, clock-driven FSM from intent edges and
grasp commands to valve/pump outputs, with over-pressure and watchdog interlocks.

All transition logic lives in three pure functions (step, safety_override,
watchdog_check); the driver owns the clock and feeds events in time order.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Mapping, Optional

from .grasps import FINGERS, ActuationPlan, Finger, GraspType, actuation_plan


class Phase(enum.IntEnum):
    IDLE = 0
    AWAIT_GRASP = 1
    EXTEND = 2
    FLEX = 3
    HOLD = 4
    RELEASE = 5
    FAULT = 6


class FaultCode(enum.IntEnum):
    OVER_PRESSURE = 1
    HOST_LOST = 2
    ABORT = 3


class ValveRoute(enum.IntEnum):
    CLOSED = 0
    TO_PRESSURE = 1
    TO_VACUUM = 2


@dataclass(frozen=True)
class PneumaticCommand:
    """Output vector: one three-way valve route per finger, exhaust, two pumps."""

    finger_valve: tuple[ValveRoute, ValveRoute, ValveRoute, ValveRoute, ValveRoute]
    exhaust_open: bool
    inflation_pump: bool
    vacuum_pump: bool

    def route(self, finger: Finger) -> ValveRoute:
        return self.finger_valve[finger]

    def routed_fingers(self) -> tuple[Finger, ...]:
        return tuple(f for f in FINGERS if self.finger_valve[f] is not ValveRoute.CLOSED)


_ALL_CLOSED = (ValveRoute.CLOSED,) * 5
_ALL_PRESSURE = (ValveRoute.TO_PRESSURE,) * 5

# The vented, zero-energy glove state: valves closed, exhaust open, pumps off.
FAIL_SAFE_COMMAND = PneumaticCommand(
    finger_valve=_ALL_CLOSED, exhaust_open=True, inflation_pump=False, vacuum_pump=False
)


@dataclass(frozen=True)
class SafetyConfig:
    p_soft_limit_kpa: float = 45.0
    p_hard_limit_kpa: float = 50.0
    watchdog_ms: float = 250.0
    extend_ms: float = 300.0
    flex_settle_ms: float = 400.0
    release_vent_ms: float = 500.0
    # Hysteresis band for releasing a soft-limit clamp (fraction of soft limit).
    soft_release_fraction: float = 0.9
    # Flexion ends early once every flex finger is at least this far into vacuum.
    flex_early_exit_kpa: float = 36.0

    def validate(self) -> None:
        if not 0 < self.p_soft_limit_kpa < self.p_hard_limit_kpa:
            raise ValueError("require 0 < soft limit < hard limit")
        for name in ("watchdog_ms", "extend_ms", "flex_settle_ms", "release_vent_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.soft_release_fraction < 1:
            raise ValueError("soft_release_fraction must be in (0,1)")


# Controller events. Only Tick carries time; the others act at the state's
# last known clock value.
@dataclass(frozen=True)
class IntentEdge:
    pass


@dataclass(frozen=True)
class GraspCommand:
    grasp: GraspType


@dataclass(frozen=True)
class ReleaseCommand:
    pass


@dataclass(frozen=True)
class HeartbeatEvent:
    pass


@dataclass(frozen=True)
class Tick:
    now_ms: float


@dataclass(frozen=True)
class PressureReport:
    pressures_kpa: tuple[float, float, float, float, float]


@dataclass(frozen=True)
class AbortCommand:
    pass


ControllerEvent = (
    IntentEdge | GraspCommand | ReleaseCommand | HeartbeatEvent | Tick | PressureReport | AbortCommand
)


@dataclass(frozen=True)
class ControllerState:
    phase: Phase = Phase.IDLE
    fault_code: Optional[FaultCode] = None
    active_plan: Optional[ActuationPlan] = None
    phase_entry_ms: float = 0.0
    last_heartbeat_ms: float = 0.0
    time_ms: float = 0.0
    # Fingers clamped by the soft-limit interlock, released with hysteresis.
    soft_latched: frozenset = frozenset()

    def well_formed(self) -> bool:
        plan_phases = (Phase.EXTEND, Phase.FLEX, Phase.HOLD)
        if (self.active_plan is not None) != (self.phase in plan_phases):
            return False
        return self.phase_entry_ms <= self.time_ms and self.last_heartbeat_ms <= self.time_ms


def initial_state() -> ControllerState:
    return ControllerState()


def _flex_command(plan: ActuationPlan) -> PneumaticCommand:
    routes = []
    for f in FINGERS:
        t = plan.targets[f]
        if t.value == "flex":
            routes.append(ValveRoute.TO_VACUUM)
        elif t.value == "extend":
            routes.append(ValveRoute.TO_PRESSURE)
        else:
            routes.append(ValveRoute.CLOSED)
    any_extend = ValveRoute.TO_PRESSURE in routes
    return PneumaticCommand(
        finger_valve=tuple(routes),
        exhaust_open=False,
        inflation_pump=any_extend,
        vacuum_pump=True,
    )


def _base_command(state: ControllerState) -> PneumaticCommand:
    ph = state.phase
    if ph is Phase.IDLE or ph is Phase.FAULT:
        return FAIL_SAFE_COMMAND
    if ph is Phase.AWAIT_GRASP:
        return PneumaticCommand(_ALL_CLOSED, exhaust_open=False, inflation_pump=False, vacuum_pump=False)
    if ph is Phase.EXTEND:
        # Pre-shape: open every finger so the hand clears the object.
        return PneumaticCommand(_ALL_PRESSURE, exhaust_open=False, inflation_pump=True, vacuum_pump=False)
    if ph is Phase.FLEX:
        return _flex_command(state.active_plan)
    if ph is Phase.HOLD:
        return PneumaticCommand(_ALL_CLOSED, exhaust_open=False, inflation_pump=False, vacuum_pump=False)
    if ph is Phase.RELEASE:
        # All routes open onto the vented pressure line to equalize to ambient.
        return PneumaticCommand(_ALL_PRESSURE, exhaust_open=True, inflation_pump=False, vacuum_pump=False)
    raise AssertionError(ph)


def standing_command(state: ControllerState, cfg: SafetyConfig) -> PneumaticCommand:
    """The phase's output vector with any soft-limit clamps overlaid."""
    cmd = _base_command(state)
    if not state.soft_latched or state.phase is Phase.FAULT:
        return cmd
    routes = tuple(
        ValveRoute.CLOSED if f in state.soft_latched else cmd.finger_valve[f] for f in FINGERS
    )
    return replace(cmd, finger_valve=routes, exhaust_open=True)


def _enter(state: ControllerState, phase: Phase, now: float, **changes) -> ControllerState:
    return replace(state, phase=phase, phase_entry_ms=now, time_ms=now, **changes)


def step(
    state: ControllerState,
    event: ControllerEvent,
    cfg: SafetyConfig,
    plan_table: Mapping[GraspType, ActuationPlan] | None = None,
) -> tuple[ControllerState, PneumaticCommand]:
    """Pure transition. Events that are invalid for the current phase leave the
    state unchanged and return the phase's standing command (the caller logs)."""
    ph = state.phase

    if isinstance(event, Tick):
        now = event.now_ms
        s = replace(state, time_ms=now)
        if ph is Phase.EXTEND and now - state.phase_entry_ms >= cfg.extend_ms:
            s = _enter(s, Phase.FLEX, now)
        elif ph is Phase.FLEX and now - state.phase_entry_ms >= cfg.flex_settle_ms:
            s = _enter(s, Phase.HOLD, now)
        elif ph is Phase.RELEASE and now - state.phase_entry_ms >= cfg.release_vent_ms:
            s = _enter(s, Phase.IDLE, now, active_plan=None)
        return s, standing_command(s, cfg)

    if isinstance(event, HeartbeatEvent):
        s = replace(state, last_heartbeat_ms=state.time_ms)
        return s, standing_command(s, cfg)

    if isinstance(event, AbortCommand):
        if ph is Phase.FAULT:
            return state, FAIL_SAFE_COMMAND
        s = _enter(
            state,
            Phase.FAULT,
            state.time_ms,
            fault_code=FaultCode.ABORT,
            active_plan=None,
            soft_latched=frozenset(),
        )
        return s, FAIL_SAFE_COMMAND

    if ph is Phase.FAULT:
        return state, FAIL_SAFE_COMMAND

    if isinstance(event, IntentEdge):
        if ph is Phase.IDLE:
            s = _enter(state, Phase.AWAIT_GRASP, state.time_ms)
            return s, standing_command(s, cfg)
        if ph is Phase.HOLD:
            s = _enter(state, Phase.RELEASE, state.time_ms, active_plan=None)
            return s, standing_command(s, cfg)
        return state, standing_command(state, cfg)

    if isinstance(event, GraspCommand):
        if ph is Phase.AWAIT_GRASP:
            plan = actuation_plan(event.grasp, plan_table)
            s = _enter(state, Phase.EXTEND, state.time_ms, active_plan=plan)
            return s, standing_command(s, cfg)
        return state, standing_command(state, cfg)

    if isinstance(event, ReleaseCommand):
        if ph is Phase.HOLD:
            s = _enter(state, Phase.RELEASE, state.time_ms, active_plan=None)
            return s, standing_command(s, cfg)
        return state, standing_command(state, cfg)

    if isinstance(event, PressureReport):
        if ph is Phase.FLEX and state.active_plan is not None:
            flexing = [f for f in FINGERS if state.active_plan.targets[f].value == "flex"]
            if flexing and all(event.pressures_kpa[f] <= -cfg.flex_early_exit_kpa for f in flexing):
                s = _enter(state, Phase.HOLD, state.time_ms)
                return s, standing_command(s, cfg)
        return state, standing_command(state, cfg)

    raise TypeError(f"not a controller event: {event!r}")


def safety_override(
    state: ControllerState,
    pressures_kpa: tuple[float, float, float, float, float],
    cfg: SafetyConfig,
) -> Optional[tuple[ControllerState, PneumaticCommand]]:
    """Pressure interlock, run by the driver after every pressure report.

    Soft limit: the offending finger's valve is clamped Closed with the
    exhaust open until its magnitude falls below soft_release_fraction of
    the limit. Hard limit: latch Fault(OverPressure) and fail safe.
    """
    if state.phase is Phase.FAULT:
        return None
    if any(abs(p) >= cfg.p_hard_limit_kpa for p in pressures_kpa):
        s = _enter(
            state,
            Phase.FAULT,
            state.time_ms,
            fault_code=FaultCode.OVER_PRESSURE,
            active_plan=None,
            soft_latched=frozenset(),
        )
        return s, FAIL_SAFE_COMMAND
    release_below = cfg.soft_release_fraction * cfg.p_soft_limit_kpa
    latched = set(state.soft_latched)
    for f in FINGERS:
        if abs(pressures_kpa[f]) >= cfg.p_soft_limit_kpa:
            latched.add(f)
        elif f in latched and abs(pressures_kpa[f]) < release_below:
            latched.discard(f)
    if not latched and not state.soft_latched:
        return None
    s = replace(state, soft_latched=frozenset(latched))
    return s, standing_command(s, cfg)


def watchdog_check(
    state: ControllerState, now_ms: float, cfg: SafetyConfig
) -> Optional[tuple[ControllerState, PneumaticCommand]]:
    """Host-silence interlock: fault out of any actuating phase when heartbeats stop."""
    if state.phase in (Phase.IDLE, Phase.FAULT):
        return None
    if now_ms - state.last_heartbeat_ms > cfg.watchdog_ms:
        s = _enter(
            state,
            Phase.FAULT,
            now_ms,
            fault_code=FaultCode.HOST_LOST,
            active_plan=None,
            soft_latched=frozenset(),
        )
        return s, FAIL_SAFE_COMMAND
    return None
