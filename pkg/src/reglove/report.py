"""Scenario reports: latency decomposition, power accounting, grasp outcomes,
fault log; canonical JSON for replay diffing, CSV for spreadsheets, PNG figures."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .grasps import FINGERS
from .simulation import ClosedLoopSim, TriggerRecord

REPORT_SCHEMA_VERSION = 1

STAGE_NAMES = (
    "frame_wait_ms",
    "capture_transfer_ms",
    "preprocess_infer_ms",
    "decision_protocol_ms",
    "controller_dispatch_ms",
)


@dataclass(frozen=True)
class LatencyStats:
    n: int
    mean_ms: float
    std_ms: float
    min_ms: float
    max_ms: float


@dataclass(frozen=True)
class PowerStats:
    energy_joules: float
    duration_ms: float
    mean_w: float


@dataclass(frozen=True)
class EnduranceVerdict:
    passed: bool
    reasons: tuple[str, ...]
    cycles: int
    max_hold_drift_kpa: float
    mean_power_w: float
    envelope_mean_w: float
    envelope_tol_w: float


def _population_stats(values: list[float]) -> LatencyStats:
    n = len(values)
    if n == 0:
        return LatencyStats(0, 0.0, 0.0, 0.0, 0.0)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return LatencyStats(n, mean, math.sqrt(var), min(values), max(values))


def trigger_row(record: TriggerRecord) -> dict:
    s = record.stages
    return {
        "index": record.index,
        "t_trigger_ms": record.t_trigger_ms,
        "object": record.object_name,
        "true_grasp": record.true_grasp.label,
        "predicted_grasp": record.predicted.label,
        "confidence": record.confidence,
        "overridden": record.overridden,
        "frame_wait_ms": s.frame_wait_ms,
        "capture_transfer_ms": s.capture_transfer_ms,
        "preprocess_infer_ms": s.preprocess_infer_ms,
        "inference_ms": s.inference_ms,
        "decision_protocol_ms": s.decision_protocol_ms,
        "controller_dispatch_ms": record.controller_dispatch_ms,
        "total_ms": record.total_ms,
        "grip_ok": record.grip_ok,
        "hold_entry_ms": record.hold_entry_ms,
        "hold_drift_kpa": record.hold_drift_kpa,
    }


@dataclass
class ScenarioReport:
    scenario_name: str
    seed: int
    duration_ms: float
    triggers: list[dict]
    latency: LatencyStats
    inference_mean_ms: float
    power: PowerStats
    predictions_correct: int
    grips_succeeded: int
    fault_log: list[dict]
    wire: dict
    endurance: Optional[EnduranceVerdict] = None
    traces: Optional[dict] = None
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_dict(self) -> dict:
        d = {
            "schema_version": self.schema_version,
            "scenario_name": self.scenario_name,
            "seed": self.seed,
            "duration_ms": self.duration_ms,
            "triggers": self.triggers,
            "latency": vars(self.latency).copy(),
            "inference_mean_ms": self.inference_mean_ms,
            "power": vars(self.power).copy(),
            "predictions_correct": self.predictions_correct,
            "grips_succeeded": self.grips_succeeded,
            "fault_log": self.fault_log,
            "wire": self.wire,
        }
        if self.endurance is not None:
            d["endurance"] = {
                "passed": self.endurance.passed,
                "reasons": list(self.endurance.reasons),
                "cycles": self.endurance.cycles,
                "max_hold_drift_kpa": self.endurance.max_hold_drift_kpa,
                "mean_power_w": self.endurance.mean_power_w,
                "envelope_mean_w": self.endurance.envelope_mean_w,
                "envelope_tol_w": self.endurance.envelope_tol_w,
            }
        if self.traces is not None:
            d["traces"] = self.traces
        return d

    def to_json_bytes(self) -> bytes:
        # Canonical form: sorted keys, no whitespace. Replays must match byte-for-byte.
        return (json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n").encode()

    def write(self, path: str | Path, figures: bool = True) -> list[Path]:
        """Write <path> (JSON) plus the CSV summary and PNG figures next to it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        written = [path]
        path.write_bytes(self.to_json_bytes())
        csv_path = path.with_suffix(".csv")
        self.write_trigger_csv(csv_path)
        written.append(csv_path)
        if figures:
            written.extend(render_figures(self, path.parent, stem=path.stem))
        return written

    def write_trigger_csv(self, path: str | Path) -> None:
        columns = TRIGGER_CSV_COLUMNS if not self.triggers else list(self.triggers[0])
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns)
            writer.writeheader()
            writer.writerows(self.triggers)


TRIGGER_CSV_COLUMNS = [
    "index",
    "t_trigger_ms",
    "object",
    "true_grasp",
    "predicted_grasp",
    "confidence",
    "overridden",
    "frame_wait_ms",
    "capture_transfer_ms",
    "preprocess_infer_ms",
    "inference_ms",
    "decision_protocol_ms",
    "controller_dispatch_ms",
    "total_ms",
    "grip_ok",
    "hold_entry_ms",
    "hold_drift_kpa",
]


def assemble_report(
    sim: ClosedLoopSim,
    *,
    scenario_name: str,
    seed: int,
    endurance: Optional[EnduranceVerdict] = None,
    include_traces: bool = True,
) -> ScenarioReport:
    totals = [r.total_ms for r in sim.triggers if r.total_ms]
    inferences = [r.stages.inference_ms for r in sim.triggers]
    duration_ms = sim.sim_time_ms
    energy = sim.engine.energy_joules
    mean_w = energy / (duration_ms / 1000.0) if duration_ms else 0.0
    return ScenarioReport(
        scenario_name=scenario_name,
        seed=seed,
        duration_ms=duration_ms,
        triggers=[trigger_row(r) for r in sim.triggers],
        latency=_population_stats(totals),
        inference_mean_ms=(sum(inferences) / len(inferences)) if inferences else 0.0,
        power=PowerStats(energy_joules=energy, duration_ms=duration_ms, mean_w=mean_w),
        predictions_correct=sum(r.predicted is r.true_grasp for r in sim.triggers),
        grips_succeeded=sum(bool(r.grip_ok) for r in sim.triggers),
        fault_log=[
            {"t_ms": e.t_ms, "source": e.source, "detail": e.detail} for e in sim.fault_log
        ],
        wire={
            "frames_host_to_mcu": sim.wire.frames_host_to_mcu,
            "frames_mcu_to_host": sim.wire.frames_mcu_to_host,
            "decode_diagnostics": sim.wire.decode_diagnostics,
        },
        endurance=endurance,
        traces=(
            {k: list(v) for k, v in sim.trace.items()} if include_traces and sim.trace["t_ms"] else None
        ),
    )


def render_figures(report: ScenarioReport, directory: str | Path, stem: str = "report") -> list[Path]:
    """Render the report's figures as PNG files. Returns the written paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if report.triggers:
        totals = [t["total_ms"] for t in report.triggers]
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
        ax1.hist(totals, bins=min(40, max(5, len(totals) // 10)), color="#4878cf", edgecolor="black")
        ax1.axvline(report.latency.mean_ms, color="red", linestyle="--",
                    label=f"mean {report.latency.mean_ms:.2f} ms")
        ax1.set_xlabel("end-to-end latency (ms)")
        ax1.set_ylabel("triggers")
        ax1.legend()
        stage_means = [
            sum(t[name] for t in report.triggers) / len(report.triggers) for name in STAGE_NAMES
        ]
        labels = [n.removesuffix("_ms").replace("_", "\n") for n in STAGE_NAMES]
        ax2.bar(labels, stage_means, color="#6acc64", edgecolor="black")
        ax2.set_ylabel("mean stage time (ms)")
        fig.tight_layout()
        out = directory / f"{stem}_latency.png"
        fig.savefig(out, dpi=110)
        plt.close(fig)
        written.append(out)

    if report.traces:
        t = report.traces["t_ms"]
        pressures = report.traces["pressures"]
        fig, ax = plt.subplots(figsize=(10, 4))
        for f in FINGERS:
            ax.plot(t, [row[f] for row in pressures], label=f.name.lower(), linewidth=0.9)
        ax.set_xlabel("sim time (ms)")
        ax.set_ylabel("gauge pressure (kPa)")
        ax.legend(ncol=5, fontsize=8)
        fig.tight_layout()
        out = directory / f"{stem}_pressure.png"
        fig.savefig(out, dpi=110)
        plt.close(fig)
        written.append(out)

        fig, ax = plt.subplots(figsize=(10, 3))
        ax.plot(t, report.traces["watts"], color="#d65f5f", linewidth=0.9)
        ax.axhline(report.power.mean_w, color="black", linestyle="--",
                   label=f"mean {report.power.mean_w:.2f} W")
        ax.set_xlabel("sim time (ms)")
        ax.set_ylabel("draw (W)")
        ax.legend(fontsize=8)
        fig.tight_layout()
        out = directory / f"{stem}_power.png"
        fig.savefig(out, dpi=110)
        plt.close(fig)
        written.append(out)

    return written
