"""Scenario execution and benchmark entry points.

run_scenario drives the full perception -> protocol -> controller -> plant
loop per trigger and assembles a report; endurance_soak cycles grasps
continuously for a simulated session and returns a pass/fail verdict.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .grasps import GraspType
from .perception import ConfusionClassifier, StubClassifier, default_confusion_matrix
from .plant import PlantFault
from .report import EnduranceVerdict, ScenarioReport, assemble_report
from .scenario import FaultSpec, PowerEnvelope, Scenario, ScenarioObject
from .simulation import ClosedLoopSim

# Classifier generator streams are derived from the scenario seed but kept
# distinct from the stage-latency stream.
_CLASSIFIER_SEED_OFFSET = 0x5EED


def build_sim(scenario: Scenario, trace: bool = False) -> ClosedLoopSim:
    scenario.validate()
    if scenario.classifier_mode == "stub":
        classifier = StubClassifier(scenario.latency_model)
    else:
        matrix = scenario.matrix or default_confusion_matrix()
        classifier = ConfusionClassifier(
            matrix, seed=scenario.seed + _CLASSIFIER_SEED_OFFSET, model=scenario.latency_model
        )
    return ClosedLoopSim(
        seed=scenario.seed,
        classifier=classifier,
        plant_cfg=scenario.plant_cfg,
        safety_cfg=scenario.safety_cfg,
        latency_model=scenario.latency_model,
        link_cfg=scenario.link_cfg,
        plan_table=scenario.plan_table(),
        stochastic_frame_phase=scenario.stochastic_frame_phase,
        trace_interval_ms=scenario.trace_interval_ms if trace else 0,
    )


def run_scenario(scenario: Scenario, trace: bool = True) -> ScenarioReport:
    """Execute one scenario deterministically. Same scenario + seed -> same report bytes."""
    sim = build_sim(scenario, trace=trace)
    for obj in scenario.objects:
        sim.schedule_trigger(
            obj.trigger_ms, obj.scene_object(), obj.release_after_ms, obj.override
        )
    for spec in scenario.faults:
        sim.schedule_fault(spec.onset_ms, spec.fault)
    sim.run_until(scenario.duration_ms)
    return assemble_report(
        sim, scenario_name=scenario.name, seed=scenario.seed, include_traces=trace
    )


def latency_benchmark_scenario(
    n_triggers: int = 1000, seed: int = 7, spacing_ms: float = 1500.0
) -> Scenario:
    """Stochastic many-trigger scenario used for the latency-budget check."""
    objects = [
        ScenarioObject(
            name=f"object-{i:04d}",
            grasp=GraspType(i % 5),
            trigger_ms=1000.0 + i * spacing_ms,
            release_after_ms=200.0,
        )
        for i in range(n_triggers)
    ]
    duration = objects[-1].trigger_ms + 2500.0
    return Scenario(
        name=f"latency-benchmark-{n_triggers}",
        seed=seed,
        duration_ms=duration,
        objects=objects,
        classifier_mode="confusion",
        matrix=default_confusion_matrix(),
        stochastic_frame_phase=True,
        trace_interval_ms=0,
    )


@dataclass(frozen=True)
class DutyCycle:
    """Continuous grasp/release cycling pattern for the endurance soak.

    A cycle is trigger -> classify -> extend -> flex -> hold(hold_ms) ->
    release -> idle(idle_gap_ms) -> next trigger, rotating through the
    grasp list. Back-to-back cycles keep the pumps at the duty ratio that
    lands the default power table inside the session power envelope.
    """

    hold_ms: float = 100.0
    idle_gap_ms: float = 0.0
    first_trigger_ms: float = 100.0
    grasps: tuple[GraspType, ...] = tuple(GraspType)


@dataclass(frozen=True)
class SoakResult:
    verdict: EnduranceVerdict
    report: ScenarioReport


def endurance_soak(
    minutes: float = 90.0,
    seed: int = 1,
    scenario: Scenario | None = None,
    duty: DutyCycle | None = None,
    faults: list[FaultSpec] | None = None,
    drift_limit_kpa: float = 0.5,
    settle_cycles: int = 3,
    trace: bool = False,
) -> SoakResult:
    """Run a continuous grasp/release duty cycle for the full simulated session.

    Pass requires: no controller fault, steady-state hold drift per cycle
    under drift_limit_kpa, and (once cycles completed) mean power inside the
    configured envelope.
    """
    if minutes <= 0:
        raise ValueError("minutes must be > 0")
    duty = duty or DutyCycle()
    scenario = scenario or Scenario(
        name=f"soak-{minutes:g}min", seed=seed, duration_ms=minutes * 60_000.0,
    )
    duration_ms = minutes * 60_000.0
    sim = build_sim(scenario, trace=trace)

    cycle_count = 0

    def next_object():
        grasp = duty.grasps[cycle_count % len(duty.grasps)]
        return ScenarioObject(
            name=f"cycle-{cycle_count:05d}", grasp=grasp, trigger_ms=0.0
        ).scene_object()

    def schedule_next(at_ms: float) -> None:
        nonlocal cycle_count
        if at_ms + scenario.full_cycle_ms() + duty.hold_ms > duration_ms:
            return  # not enough session left for a complete cycle
        obj = next_object()
        cycle_count += 1
        sim.schedule_trigger(at_ms, obj, release_after_ms=duty.hold_ms)

    sim.on_idle = lambda s: schedule_next(s.sim_time_ms + duty.idle_gap_ms)
    schedule_next(duty.first_trigger_ms)
    for spec in faults or []:
        sim.schedule_fault(spec.onset_ms, spec.fault)
    sim.run_until(duration_ms)

    completed = [r for r in sim.triggers if r.hold_drift_kpa is not None]
    steady = completed[settle_cycles:] if len(completed) > settle_cycles else completed
    max_drift = max((r.hold_drift_kpa for r in steady), default=0.0)
    mean_power = sim.mean_power_w()
    envelope = scenario.power_envelope

    reasons = []
    if any(entry.source == "controller" for entry in sim.fault_log):
        reasons.append("controller fault during soak")
    if sim.engine.burst is not None:
        reasons.append(f"chamber burst on {sim.engine.burst.name.lower()}")
    if max_drift >= drift_limit_kpa:
        reasons.append(f"hold drift {max_drift:.3f} kPa >= {drift_limit_kpa} kPa")
    if completed and not envelope.contains(mean_power):
        reasons.append(
            f"mean power {mean_power:.2f} W outside {envelope.mean_w} +/- {envelope.tol_w} W"
        )

    verdict = EnduranceVerdict(
        passed=not reasons,
        reasons=tuple(reasons),
        cycles=len(completed),
        max_hold_drift_kpa=max_drift,
        mean_power_w=mean_power,
        envelope_mean_w=envelope.mean_w,
        envelope_tol_w=envelope.tol_w,
    )
    report = assemble_report(
        sim, scenario_name=scenario.name, seed=scenario.seed, endurance=verdict,
        include_traces=trace,
    )
    return SoakResult(verdict=verdict, report=report)
