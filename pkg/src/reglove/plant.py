"""Deterministic fixed-timestep pneumatic plant model.

Each finger chamber relaxes first-order toward the line it is routed to
(P += k_eff*(P* - P)*dt - leak*P*dt, explicit Euler), with pump capacity
shared across concurrently-driven fingers, injectable faults, and exact
per-tick energy accounting. step_plant is the pure contract; PlantEngine
is the mutable in-place driver used by the closed-loop simulation. Both
share the same arithmetic, so their trajectories are bit-identical.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .controller import PneumaticCommand, ValveRoute
from .grasps import FINGERS, ActuationPlan, Finger, FingerTarget


class PumpId(enum.Enum):
    INFLATION = "inflation"
    VACUUM = "vacuum"


@dataclass(frozen=True)
class StuckValve:
    finger: Finger
    stuck_route: ValveRoute


@dataclass(frozen=True)
class LeakFault:
    finger: Finger
    rate_per_s: float

    def __post_init__(self) -> None:
        if self.rate_per_s < 0:
            raise ValueError("leak rate must be >= 0")


@dataclass(frozen=True)
class PumpDegraded:
    pump: PumpId
    flow_fraction: float

    def __post_init__(self) -> None:
        if not 0 < self.flow_fraction <= 1:
            raise ValueError("flow_fraction must be in (0,1]")


PlantFault = StuckValve | LeakFault | PumpDegraded


@dataclass(frozen=True)
class PlantConfig:
    chamber_volume_ml: float = 20.0
    pump_flow_lpm: float = 6.0          # HG095-class mini pump
    p_source_kpa: float = 40.0
    p_vacuum_kpa: float = -40.0
    valve_rate_per_s: float = 12.0      # first-order rate toward the routed line
    leak_rate_per_s: float = 0.02
    dt_ms: float = 1.0
    # A pump drives this many fingers at full rate; beyond that the rate
    # scales by capacity/demand (6 L/min across five 20 mL chambers).
    full_rate_channels: int = 3
    pump_power_w: float = 4.8
    solenoid_power_w: float = 0.9
    base_power_w: float = 2.7
    hard_burst_kpa: float = 55.0

    def validate(self) -> None:
        if self.dt_ms <= 0 or self.chamber_volume_ml <= 0:
            raise ValueError("dt_ms and chamber_volume_ml must be positive")
        if not self.p_vacuum_kpa < 0 < self.p_source_kpa:
            raise ValueError("require p_vacuum < 0 < p_source")
        if min(self.pump_power_w, self.solenoid_power_w, self.base_power_w) < 0:
            raise ValueError("power entries must be >= 0")


@dataclass(frozen=True)
class PlantState:
    pressures_kpa: tuple[float, float, float, float, float] = (0.0,) * 5
    sim_time_ms: float = 0.0
    energy_joules: float = 0.0
    burst: Optional[Finger] = None
    faults: tuple[PlantFault, ...] = ()


@dataclass(frozen=True)
class ChannelCoeffs:
    """Per-tick update coefficients, constant while command and faults hold."""

    targets: tuple[float, ...]
    rate_dt: tuple[float, ...]   # k_eff * dt per finger; 0 disables relaxation
    leak_dt: tuple[float, ...]   # leak * dt per finger
    energy_per_tick: float       # active wattage * dt
    watts: float


def _pump_fraction(faults: Sequence[PlantFault], pump: PumpId) -> float:
    frac = 1.0
    for f in faults:
        if isinstance(f, PumpDegraded) and f.pump is pump:
            frac *= f.flow_fraction
    return frac


def effective_routes(cmd: PneumaticCommand, faults: Sequence[PlantFault]) -> tuple[ValveRoute, ...]:
    routes = list(cmd.finger_valve)
    for f in faults:
        if isinstance(f, StuckValve):
            routes[f.finger] = f.stuck_route
    return tuple(routes)


def compute_coeffs(
    cmd: PneumaticCommand, faults: Sequence[PlantFault], cfg: PlantConfig, burst: Optional[Finger]
) -> ChannelCoeffs:
    dt = cfg.dt_ms / 1000.0
    routes = effective_routes(cmd, faults)

    inflation_demand = sum(
        1 for f in FINGERS if routes[f] is ValveRoute.TO_PRESSURE and cmd.inflation_pump
    )
    vacuum_demand = sum(1 for f in FINGERS if routes[f] is ValveRoute.TO_VACUUM and cmd.vacuum_pump)
    k = cfg.valve_rate_per_s

    def shared_rate(demand: int, pump: PumpId) -> float:
        capacity = cfg.full_rate_channels * _pump_fraction(faults, pump)
        if demand <= 0:
            return k
        return k * min(1.0, capacity / demand)

    k_inflation = shared_rate(inflation_demand, PumpId.INFLATION)
    k_vacuum = shared_rate(vacuum_demand, PumpId.VACUUM)

    extra_leak = [0.0] * 5
    for f in faults:
        if isinstance(f, LeakFault):
            extra_leak[f.finger] += f.rate_per_s

    targets = []
    rate_dt = []
    leak_dt = []
    for f in FINGERS:
        route = routes[f]
        if burst is not None and f is burst:
            # Ruptured chamber: vented to ambient, nothing to integrate.
            targets.append(0.0)
            rate_dt.append(0.0)
            leak_dt.append(0.0)
            continue
        if route is ValveRoute.TO_PRESSURE and cmd.inflation_pump:
            targets.append(cfg.p_source_kpa)
            rate_dt.append(k_inflation * dt)
        elif route is ValveRoute.TO_VACUUM and cmd.vacuum_pump:
            targets.append(cfg.p_vacuum_kpa)
            rate_dt.append(k_vacuum * dt)
        elif route is not ValveRoute.CLOSED and cmd.exhaust_open:
            targets.append(0.0)
            rate_dt.append(k * dt)
        else:
            # Closed (or routed to a dead line): trapped, leak decay only.
            targets.append(0.0)
            rate_dt.append(0.0)
        leak_dt.append((cfg.leak_rate_per_s + extra_leak[f]) * dt)

    # Solenoid coils draw power as commanded, stuck or not. Finger valves rest
    # Closed; the exhaust valve rests Open (that is the fail-safe position).
    energized = sum(1 for r in cmd.finger_valve if r is not ValveRoute.CLOSED)
    if not cmd.exhaust_open:
        energized += 1
    watts = (
        cfg.base_power_w
        + cfg.pump_power_w * (int(cmd.inflation_pump) + int(cmd.vacuum_pump))
        + cfg.solenoid_power_w * energized
    )
    return ChannelCoeffs(
        targets=tuple(targets),
        rate_dt=tuple(rate_dt),
        leak_dt=tuple(leak_dt),
        energy_per_tick=watts * dt,
        watts=watts,
    )


def advance_channel(p: float, target: float, rate_dt: float, leak_dt: float) -> float:
    # Single source of truth for the Euler update; keep in sync with the
    # unrolled loop in PlantEngine.run (identical expression, identical order).
    return p + rate_dt * (target - p) - leak_dt * p


def step_plant(state: PlantState, cmd: PneumaticCommand, cfg: PlantConfig) -> PlantState:
    """Advance the plant one timestep under a command. Pure."""
    co = compute_coeffs(cmd, state.faults, cfg, state.burst)
    pressures = list(state.pressures_kpa)
    burst = state.burst
    for f in FINGERS:
        p = advance_channel(pressures[f], co.targets[f], co.rate_dt[f], co.leak_dt[f])
        if burst is None and abs(p) > cfg.hard_burst_kpa:
            burst = Finger(f)
            p = 0.0
        elif burst is not None and f is burst:
            p = 0.0
        pressures[f] = p
    return replace(
        state,
        pressures_kpa=tuple(pressures),
        sim_time_ms=state.sim_time_ms + cfg.dt_ms,
        energy_joules=state.energy_joules + co.energy_per_tick,
        burst=burst,
    )


def flexion(pressure_kpa: float, cfg: PlantConfig) -> float:
    """Normalized posture: -1 fully flexed (full vacuum) .. +1 fully extended."""
    x = pressure_kpa / cfg.p_source_kpa
    return max(-1.0, min(1.0, x))


def grip_predicate(
    state: PlantState, plan: ActuationPlan, cfg: PlantConfig, threshold: float = 0.8
) -> bool:
    """Did the plant reach the commanded posture? Flex fingers must be at
    least `threshold` flexed; extend fingers at least half-threshold open."""
    for f in FINGERS:
        t = plan.targets[f]
        x = flexion(state.pressures_kpa[f], cfg)
        if t is FingerTarget.FLEX and not x <= -threshold:
            return False
        if t is FingerTarget.EXTEND and not x >= threshold * 0.5:
            return False
    return True


class StopReason(enum.Enum):
    COMPLETED = "completed"
    PRESSURE_WATCH = "pressure_watch"
    FLEX_WATCH = "flex_watch"
    RELEASE_WATCH = "release_watch"


class PlantEngine:
    """Mutable fast-path plant, trajectory-identical to folding step_plant.

    The engine recomputes channel coefficients only when the command or the
    fault set changes, and runs the per-tick Euler update over local floats.
    Optional watches stop the run early so the driver can apply interlocks
    through the pure controller functions.
    """

    def __init__(self, cfg: PlantConfig, command: PneumaticCommand) -> None:
        cfg.validate()
        self.cfg = cfg
        self.pressures = [0.0] * 5
        self.time_ms = 0.0
        self.energy_joules = 0.0
        self.burst: Optional[Finger] = None
        self.faults: list[PlantFault] = []
        self._command = command
        self._coeffs = compute_coeffs(command, self.faults, cfg, self.burst)

    @property
    def command(self) -> PneumaticCommand:
        return self._command

    @property
    def watts(self) -> float:
        return self._coeffs.watts

    def set_command(self, cmd: PneumaticCommand) -> None:
        if cmd != self._command:
            self._command = cmd
            self._refresh()

    def add_fault(self, fault: PlantFault) -> None:
        self.faults.append(fault)
        self._refresh()

    def clear_faults(self) -> None:
        self.faults.clear()
        self._refresh()

    def _refresh(self) -> None:
        self._coeffs = compute_coeffs(self._command, self.faults, self.cfg, self.burst)

    def snapshot(self) -> PlantState:
        return PlantState(
            pressures_kpa=tuple(self.pressures),
            sim_time_ms=self.time_ms,
            energy_joules=self.energy_joules,
            burst=self.burst,
            faults=tuple(self.faults),
        )

    def run(
        self,
        n_ticks: int,
        watch_abs_kpa: Optional[float] = None,
        flex_watch: Optional[tuple[tuple[int, ...], float]] = None,
        release_watch: Optional[tuple[tuple[int, ...], float]] = None,
    ) -> tuple[int, StopReason]:
        """Advance up to n_ticks with constant coefficients.

        Stops after the tick on which a watch fires, in priority order:
        any |P| >= watch_abs_kpa; every release_watch channel |P| < kpa;
        every flex_watch channel at or below -kpa. Bursts are handled
        internally (channel frozen at 0) and do not stop the run unless a
        watch also fired. Returns (ticks actually run, reason).
        """
        co = self._coeffs
        t0, t1, t2, t3, t4 = co.targets
        r0, r1, r2, r3, r4 = co.rate_dt
        l0, l1, l2, l3, l4 = co.leak_dt
        p0, p1, p2, p3, p4 = self.pressures
        e_tick = co.energy_per_tick
        energy = self.energy_joules
        burst_kpa = self.cfg.hard_burst_kpa
        watch = watch_abs_kpa
        if self.burst is None:
            check_level = burst_kpa if watch is None else min(watch, burst_kpa)
        else:
            # Single burst slot: once set, only an explicit watch stops the run.
            check_level = float("inf") if watch is None else watch
        flex_idx, flex_kpa = flex_watch if flex_watch else ((), 0.0)
        rel_idx, rel_kpa = release_watch if release_watch else ((), 0.0)

        done = 0
        fired = False
        while done < n_ticks:
            p0 = p0 + r0 * (t0 - p0) - l0 * p0
            p1 = p1 + r1 * (t1 - p1) - l1 * p1
            p2 = p2 + r2 * (t2 - p2) - l2 * p2
            p3 = p3 + r3 * (t3 - p3) - l3 * p3
            p4 = p4 + r4 * (t4 - p4) - l4 * p4
            energy += e_tick
            done += 1
            m = max(p0, p1, p2, p3, p4, -p0, -p1, -p2, -p3, -p4)
            if m >= check_level:
                fired = True
                break
            if rel_idx or flex_idx:
                ps = (p0, p1, p2, p3, p4)
                if rel_idx and all(-rel_kpa < ps[i] < rel_kpa for i in rel_idx):
                    fired = True
                    break
                if flex_idx and all(ps[i] <= -flex_kpa for i in flex_idx):
                    fired = True
                    break

        self.pressures = [p0, p1, p2, p3, p4]
        self.energy_joules = energy
        self.time_ms += done * self.cfg.dt_ms

        if not fired:
            return done, StopReason.COMPLETED

        burst_now = self.burst is None and any(abs(p) > burst_kpa for p in self.pressures)
        if burst_now:
            self._mark_burst()
        ps = self.pressures
        if watch is not None and max(abs(p) for p in ps) >= watch:
            return done, StopReason.PRESSURE_WATCH
        if rel_idx and all(abs(ps[i]) < rel_kpa for i in rel_idx):
            return done, StopReason.RELEASE_WATCH
        if flex_idx and all(ps[i] <= -flex_kpa for i in flex_idx):
            return done, StopReason.FLEX_WATCH
        # Only the burst guard tripped; coefficients were refreshed, carry on.
        more, reason = self.run(n_ticks - done, watch_abs_kpa, flex_watch, release_watch)
        return done + more, reason

    def _mark_burst(self) -> None:
        for f in FINGERS:
            if abs(self.pressures[f]) > self.cfg.hard_burst_kpa:
                self.burst = f
                self.pressures[f] = 0.0
                self._refresh()
                return
