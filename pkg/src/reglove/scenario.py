"""Scenario files: versioned JSON describing triggers, faults, and config overrides."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .controller import SafetyConfig, ValveRoute
from .grasps import Finger, GraspType, parse_grasp_label, plan_table_with_overrides
from .perception import ConfusionMatrix, LatencyModel, SceneObject, default_confusion_matrix
from .plant import LeakFault, PlantConfig, PlantFault, PumpDegraded, PumpId, StuckValve
from .protocol import LinkConfig

SCHEMA_VERSION = 1


class ScenarioInvalid(ValueError):
    """Scenario fails validation before any stepping happens."""


@dataclass(frozen=True)
class ScenarioObject:
    name: str
    grasp: GraspType
    trigger_ms: float
    scale_ambiguous: bool = False
    release_after_ms: Optional[float] = 1000.0
    override: Optional[GraspType] = None

    def scene_object(self) -> SceneObject:
        return SceneObject(self.name, self.grasp, self.scale_ambiguous)


@dataclass(frozen=True)
class FaultSpec:
    onset_ms: float
    fault: PlantFault


@dataclass(frozen=True)
class PowerEnvelope:
    mean_w: float = 10.3
    tol_w: float = 1.2

    def contains(self, watts: float) -> bool:
        return abs(watts - self.mean_w) <= self.tol_w


@dataclass
class Scenario:
    name: str
    seed: int
    duration_ms: float
    objects: list[ScenarioObject] = field(default_factory=list)
    faults: list[FaultSpec] = field(default_factory=list)
    classifier_mode: str = "stub"  # stub | confusion
    matrix: Optional[ConfusionMatrix] = None
    stochastic_frame_phase: bool = True
    plant_cfg: PlantConfig = field(default_factory=PlantConfig)
    safety_cfg: SafetyConfig = field(default_factory=SafetyConfig)
    latency_model: LatencyModel = field(default_factory=LatencyModel)
    link_cfg: LinkConfig = field(default_factory=LinkConfig)
    plan_overrides: dict = field(default_factory=dict)
    power_envelope: PowerEnvelope = field(default_factory=PowerEnvelope)
    trace_interval_ms: int = 50

    def plan_table(self):
        return plan_table_with_overrides(self.plan_overrides) if self.plan_overrides else None

    def full_cycle_ms(self) -> float:
        c = self.safety_cfg
        return c.extend_ms + c.flex_settle_ms + c.release_vent_ms

    def validate(self) -> None:
        if self.duration_ms <= 0:
            raise ScenarioInvalid("duration_ms must be positive")
        if self.classifier_mode not in ("stub", "confusion"):
            raise ScenarioInvalid(f"unknown classifier mode {self.classifier_mode!r}")
        times = [o.trigger_ms for o in self.objects]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScenarioInvalid("trigger times must be strictly increasing")
        if self.objects:
            last = self.objects[-1]
            tail = last.trigger_ms + self.full_cycle_ms() + (last.release_after_ms or 0.0)
            if self.duration_ms < tail:
                raise ScenarioInvalid(
                    f"duration {self.duration_ms} ms ends before the last grasp cycle ({tail:.0f} ms)"
                )
        for spec in self.faults:
            if not 0 <= spec.onset_ms <= self.duration_ms:
                raise ScenarioInvalid(f"fault onset {spec.onset_ms} outside the run")
        try:
            self.plant_cfg.validate()
            self.safety_cfg.validate()
            self.latency_model.validate()
            self.link_cfg.validate()
            self.plan_table()
        except ValueError as exc:
            raise ScenarioInvalid(str(exc)) from exc


def _override_dataclass(instance, overrides: dict, section: str):
    names = {f.name for f in dataclasses.fields(instance)}
    unknown = set(overrides) - names
    if unknown:
        raise ScenarioInvalid(f"unknown {section} fields: {sorted(unknown)}")
    return dataclasses.replace(instance, **overrides)


_ROUTE_NAMES = {
    "closed": ValveRoute.CLOSED,
    "to_pressure": ValveRoute.TO_PRESSURE,
    "to_vacuum": ValveRoute.TO_VACUUM,
}


def fault_from_dict(d: dict) -> PlantFault:
    kind = d.get("kind")
    try:
        if kind == "stuck_valve":
            return StuckValve(Finger[d["finger"].upper()], _ROUTE_NAMES[d["route"]])
        if kind == "leak":
            return LeakFault(Finger[d["finger"].upper()], float(d["rate_per_s"]))
        if kind == "pump_degraded":
            return PumpDegraded(PumpId(d["pump"]), float(d["flow_fraction"]))
    except (KeyError, ValueError) as exc:
        raise ScenarioInvalid(f"bad fault spec {d!r}: {exc}") from exc
    raise ScenarioInvalid(f"unknown fault kind {kind!r}")


def fault_to_dict(fault: PlantFault) -> dict:
    if isinstance(fault, StuckValve):
        return {
            "kind": "stuck_valve",
            "finger": fault.finger.name.lower(),
            "route": fault.stuck_route.name.lower(),
        }
    if isinstance(fault, LeakFault):
        return {"kind": "leak", "finger": fault.finger.name.lower(), "rate_per_s": fault.rate_per_s}
    return {"kind": "pump_degraded", "pump": fault.pump.value, "flow_fraction": fault.flow_fraction}


def scenario_from_dict(data: dict, base_dir: Path | None = None) -> Scenario:
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioInvalid(f"unsupported schema_version {version!r}")
    for key in ("name", "seed", "duration_ms"):
        if key not in data:
            raise ScenarioInvalid(f"missing required field {key!r}")

    objects = []
    for entry in data.get("objects", []):
        try:
            grasp = parse_grasp_label(entry["grasp"])
            override = entry.get("override_grasp")
            objects.append(
                ScenarioObject(
                    name=entry["name"],
                    grasp=grasp,
                    trigger_ms=float(entry["trigger_ms"]),
                    scale_ambiguous=bool(entry.get("scale_ambiguous", False)),
                    release_after_ms=(
                        float(entry["release_after_ms"]) if entry.get("release_after_ms") is not None else None
                    ),
                    override=parse_grasp_label(override) if override else None,
                )
            )
        except (KeyError, ValueError) as exc:
            raise ScenarioInvalid(f"bad object entry {entry!r}: {exc}") from exc

    faults = [
        FaultSpec(onset_ms=float(entry["onset_ms"]), fault=fault_from_dict(entry))
        for entry in data.get("faults", [])
    ]

    classifier = data.get("classifier", {"mode": "stub"})
    mode = classifier.get("mode", "stub")
    matrix = None
    if mode == "confusion":
        path = classifier.get("matrix_csv")
        if path:
            matrix_path = Path(path)
            if base_dir is not None and not matrix_path.is_absolute():
                matrix_path = base_dir / matrix_path
            matrix = ConfusionMatrix.from_csv(matrix_path)
        else:
            matrix = default_confusion_matrix()

    overrides = data.get("overrides", {})
    scenario = Scenario(
        name=str(data["name"]),
        seed=int(data["seed"]),
        duration_ms=float(data["duration_ms"]),
        objects=objects,
        faults=faults,
        classifier_mode=mode,
        matrix=matrix,
        stochastic_frame_phase=bool(data.get("stochastic_frame_phase", True)),
        plant_cfg=_override_dataclass(PlantConfig(), overrides.get("plant", {}), "plant"),
        safety_cfg=_override_dataclass(SafetyConfig(), overrides.get("safety", {}), "safety"),
        latency_model=_override_dataclass(LatencyModel(), overrides.get("latency", {}), "latency"),
        link_cfg=_override_dataclass(LinkConfig(), overrides.get("link", {}), "link"),
        plan_overrides=overrides.get("grasp_plans", {}),
        power_envelope=_override_dataclass(
            PowerEnvelope(), overrides.get("power_envelope", {}), "power_envelope"
        ),
        trace_interval_ms=int(data.get("trace_interval_ms", 50)),
    )
    scenario.validate()
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioInvalid(f"{path}: not valid JSON: {exc}") from exc
    return scenario_from_dict(data, base_dir=path.parent)
