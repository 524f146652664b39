"""Grasp taxonomy, finger channels, and the grasp -> per-finger actuation mapping."""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Mapping


class UnknownLabel(ValueError):
    """Raised when a free-text grasp label matches none of the five classes."""


class GraspType(enum.IntEnum):
    """Five-class grasp taxonomy. The integer value is the wire id (0..4)."""

    PINCH = 0
    POWER = 1
    THREE_JAW_CHUCK = 2
    TOOL = 3
    KEY = 4

    def to_wire(self) -> int:
        return int(self)

    @classmethod
    def from_wire(cls, wire_id: int) -> "GraspType":
        if not 0 <= wire_id <= 4:
            raise ValueError(f"grasp wire id out of range: {wire_id}")
        return cls(wire_id)

    @property
    def label(self) -> str:
        return _CANONICAL_LABELS[self]


class Finger(enum.IntEnum):
    """One pneumatic channel per finger; the value is the channel index."""

    THUMB = 0
    INDEX = 1
    MIDDLE = 2
    RING = 3
    LITTLE = 4


class FingerTarget(enum.Enum):
    FLEX = "flex"        # vacuum-driven closure
    EXTEND = "extend"    # pressure-driven opening
    NEUTRAL = "neutral"  # vented


FINGERS = tuple(Finger)

_CANONICAL_LABELS = {
    GraspType.PINCH: "pinch",
    GraspType.POWER: "power",
    GraspType.THREE_JAW_CHUCK: "three-jaw chuck",
    GraspType.TOOL: "tool",
    GraspType.KEY: "key",
}


@dataclass(frozen=True)
class ActuationPlan:
    """Per-finger targets for one grasp, ordered by finger channel index.

    thumb_brace_constrained is always true for the single commercial glove
    configuration: the printed thumb brace, not the pneumatics, provides
    lateral opposition (this is what distinguishes KEY from POWER here).
    """

    targets: tuple[FingerTarget, ...]
    thumb_brace_constrained: bool = True

    def __post_init__(self) -> None:
        if len(self.targets) != len(FINGERS):
            raise ValueError("a plan must assign a target to all five fingers")

    def target(self, finger: Finger) -> FingerTarget:
        return self.targets[finger]

    def fingers_with(self, target: FingerTarget) -> tuple[Finger, ...]:
        return tuple(f for f in FINGERS if self.targets[f] is target)

    def as_dict(self) -> dict[str, str]:
        return {f.name.lower(): self.targets[f].value for f in FINGERS}


def _plan(**by_finger: str) -> ActuationPlan:
    targets = tuple(FingerTarget(by_finger[f.name.lower()]) for f in FINGERS)
    return ActuationPlan(targets=targets)


# Normative default mapping. The taxonomy names the grasps; the finger-level
# shapes follow standard grasp-taxonomy conventions and are overridable data.
DEFAULT_PLAN_TABLE: Mapping[GraspType, ActuationPlan] = {
    GraspType.POWER: _plan(thumb="flex", index="flex", middle="flex", ring="flex", little="flex"),
    GraspType.PINCH: _plan(thumb="flex", index="flex", middle="extend", ring="extend", little="extend"),
    GraspType.THREE_JAW_CHUCK: _plan(thumb="flex", index="flex", middle="flex", ring="extend", little="extend"),
    GraspType.TOOL: _plan(thumb="flex", index="extend", middle="flex", ring="flex", little="flex"),
    GraspType.KEY: _plan(thumb="flex", index="flex", middle="flex", ring="flex", little="flex"),
}


def actuation_plan(grasp: GraspType, table: Mapping[GraspType, ActuationPlan] | None = None) -> ActuationPlan:
    """Return the per-finger plan for a grasp. Pure lookup, deterministic."""
    return (table or DEFAULT_PLAN_TABLE)[grasp]


def plan_table_with_overrides(overrides: Mapping[str, Mapping[str, str]]) -> dict[GraspType, ActuationPlan]:
    """Build a plan table replacing rows named in ``overrides``.

    Keys are grasp labels (parsed leniently), values map finger name ->
    flex/extend/neutral. Every finger must be present in an override row.
    """
    table = dict(DEFAULT_PLAN_TABLE)
    for label, row in overrides.items():
        grasp = parse_grasp_label(label)
        normalized = {k.strip().lower(): v.strip().lower() for k, v in row.items()}
        missing = [f.name.lower() for f in FINGERS if f.name.lower() not in normalized]
        if missing:
            raise ValueError(f"override for {label!r} missing fingers: {missing}")
        table[grasp] = _plan(**{f.name.lower(): normalized[f.name.lower()] for f in FINGERS})
    return table


_LABEL_ALIASES = {
    "pinch": GraspType.PINCH,
    "power": GraspType.POWER,
    "threejawchuck": GraspType.THREE_JAW_CHUCK,
    "threejaw": GraspType.THREE_JAW_CHUCK,
    "3jawchuck": GraspType.THREE_JAW_CHUCK,
    "3jaw": GraspType.THREE_JAW_CHUCK,
    "tool": GraspType.TOOL,
    "key": GraspType.KEY,
}


def parse_grasp_label(label: str) -> GraspType:
    """Match one of the five canonical grasp names, case/space/hyphen-insensitively."""
    folded = re.sub(r"[\s\-_]+", "", label.strip().lower())
    try:
        return _LABEL_ALIASES[folded]
    except KeyError:
        raise UnknownLabel(f"unknown grasp label: {label!r}") from None
