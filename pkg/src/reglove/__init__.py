"""Vision-guided pneumatic glove control stack with a hardware-in-the-loop simulator."""

from .controller import (
    FAIL_SAFE_COMMAND,
    ControllerState,
    Phase,
    PneumaticCommand,
    SafetyConfig,
    ValveRoute,
    safety_override,
    standing_command,
    step,
    watchdog_check,
)
from .grasps import (
    ActuationPlan,
    Finger,
    FingerTarget,
    GraspType,
    UnknownLabel,
    actuation_plan,
    parse_grasp_label,
)
from .harness import DutyCycle, endurance_soak, latency_benchmark_scenario, run_scenario
from .perception import (
    ConfusionClassifier,
    ConfusionMatrix,
    LatencyModel,
    SceneObject,
    StubClassifier,
    default_confusion_matrix,
)
from .plant import PlantConfig, PlantEngine, PlantState, flexion, grip_predicate, step_plant
from .scenario import Scenario, ScenarioInvalid, ScenarioObject, load_scenario
from .scoring import load_adl_csv, load_ycb_csv, score_adl, score_ycb
from .simulation import ClosedLoopSim

__all__ = [
    "FAIL_SAFE_COMMAND",
    "ActuationPlan",
    "ClosedLoopSim",
    "ConfusionClassifier",
    "ConfusionMatrix",
    "ControllerState",
    "DutyCycle",
    "Finger",
    "FingerTarget",
    "GraspType",
    "LatencyModel",
    "Phase",
    "PlantConfig",
    "PlantEngine",
    "PlantState",
    "PneumaticCommand",
    "SafetyConfig",
    "SceneObject",
    "Scenario",
    "ScenarioInvalid",
    "ScenarioObject",
    "StubClassifier",
    "UnknownLabel",
    "ValveRoute",
    "actuation_plan",
    "default_confusion_matrix",
    "endurance_soak",
    "flexion",
    "grip_predicate",
    "latency_benchmark_scenario",
    "load_adl_csv",
    "load_scenario",
    "load_ycb_csv",
    "parse_grasp_label",
    "run_scenario",
    "safety_override",
    "score_adl",
    "score_ycb",
    "standing_command",
    "step",
    "step_plant",
    "watchdog_check",
]

__version__ = "0.1.0"
