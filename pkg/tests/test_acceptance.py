"""Acceptance suite: one test per release criterion, at the stated tolerances.

Each test prints a single PASS line with the measured numbers so a release
run reads as a checklist (pytest -v -s tests/test_acceptance.py).
"""
import dataclasses
import math
import random
import time

import numpy as np
import pytest

from reglove import protocol as proto
from reglove.controller import (
    FAIL_SAFE_COMMAND,
    AbortCommand,
    GraspCommand,
    HeartbeatEvent,
    IntentEdge,
    Phase,
    ReleaseCommand,
    SafetyConfig,
    Tick,
    ValveRoute,
    initial_state,
    safety_override,
    step,
    watchdog_check,
)
from reglove.grasps import Finger, GraspType
from reglove.harness import endurance_soak, latency_benchmark_scenario, run_scenario
from reglove.perception import ConfusionClassifier, SceneObject, default_confusion_matrix
from reglove.plant import PlantConfig, PlantEngine, PlantState, StuckValve, step_plant
from reglove.scenario import Scenario
from reglove.scoring import AdlRecord, YcbTrial, load_adl_csv, score_adl, score_ycb
from reglove.service import SessionDriver, replay_command_log


def report_pass(name: str, detail: str) -> None:
    print(f"\nACCEPTANCE {name}: PASS ({detail})")


# --- 1. protocol round-trip and integrity -----------------------------------------

def _random_message(rng: random.Random) -> proto.Message:
    choice = rng.randrange(9)
    if choice == 0:
        return proto.Hello()
    if choice == 1:
        return proto.Ack(rng.randrange(256))
    if choice == 2:
        return proto.Nack(rng.randrange(256), rng.randrange(256))
    if choice == 3:
        return proto.SetGrasp(rng.randrange(5))
    if choice == 4:
        return proto.Release()
    if choice == 5:
        return proto.Abort()
    if choice == 6:
        return proto.Heartbeat()
    if choice == 7:
        return proto.Telemetry(
            rng.randrange(7),
            tuple(rng.randint(-550, 550) for _ in range(5)),
            rng.randrange(64),
            rng.randrange(4),
        )
    return proto.Fault(rng.randrange(256))


def test_acceptance_protocol_round_trip_and_bit_flips():
    started = time.perf_counter()
    rng = random.Random(0xC0DEC)
    batch = [(_random_message(rng), rng.randrange(256)) for _ in range(10_000)]
    stream = b"".join(proto.encode(m, s) for m, s in batch)
    decoded, diags, residual = proto.decode_stream(stream)
    assert residual == b"" and not diags
    assert [(d.message, d.seq) for d in decoded] == batch

    samples = [
        (proto.Hello(), 1),
        (proto.Ack(9), 2),
        (proto.Nack(9, 1), 3),
        (proto.SetGrasp(2), 4),
        (proto.Release(), 5),
        (proto.Abort(), 6),
        (proto.Heartbeat(), 7),
        (proto.Telemetry(3, (400, -400, 123, -1, 0), 0b100101, 0b10), 8),
        (proto.Fault(2), 9),
    ]
    sentinel = proto.encode(proto.Heartbeat(), 0xEE)
    flips = detected = 0
    for msg, seq in samples:
        frame = proto.encode(msg, seq)
        for byte_idx in range(2, len(frame)):  # version..crc region
            for bit in range(8):
                corrupt = bytearray(frame)
                corrupt[byte_idx] ^= 1 << bit
                data = bytes(corrupt) + sentinel + b"\x00" * 270
                out, out_diags, _ = proto.decode_stream(data)
                flips += 1
                bad_crc = any(d.kind is proto.DiagnosticKind.BAD_CRC for d in out_diags)
                original_survived = any(
                    o.seq == seq and o.message == msg for o in out
                )
                sentinel_ok = any(
                    o.seq == 0xEE and o.message == proto.Heartbeat() for o in out
                )
                assert not original_survived, (msg, byte_idx, bit)
                assert sentinel_ok, (msg, byte_idx, bit)
                if bad_crc:
                    detected += 1
    assert detected == flips, f"only {detected}/{flips} flips raised BadCrc"
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    report_pass(
        "protocol-round-trip",
        f"10000 messages lossless, {flips}/{flips} bit flips detected, {elapsed:.1f}s",
    )


# --- 2. controller safety under random event sequences ------------------------------

def _random_safety_run(seed: int) -> tuple[int, float]:
    """Feed ~1000 random events through FSM + engine; assert the safety envelope."""
    rng = random.Random(seed)
    # Rotate through nominal and stressed plants; stress sits between the
    # soft and hard limits so the interlock actually works.
    source = rng.choice([40.0, 47.0, 49.0])
    plant_cfg = PlantConfig(p_source_kpa=source, p_vacuum_kpa=-source)
    safety_cfg = SafetyConfig()
    state = initial_state()
    engine = PlantEngine(plant_cfg, FAIL_SAFE_COMMAND)
    if rng.random() < 0.4:
        engine.add_fault(StuckValve(Finger(rng.randrange(5)), ValveRoute(rng.randrange(3))))

    now = 0.0
    hard = safety_cfg.p_hard_limit_kpa
    max_abs = 0.0
    events = 0
    silence_started = None
    fail_safe_deadline = None

    def apply(new_state, command):
        nonlocal state
        state = new_state
        engine.set_command(command)

    for _ in range(1000):
        events += 1
        roll = rng.random()
        if roll < 0.45:  # advance time
            dt = rng.randint(1, 40)
            now += dt
            engine.run(dt)
            apply(*step(state, Tick(now), safety_cfg))
            result = watchdog_check(state, now, safety_cfg)
            if result is not None:
                apply(*result)
            pressures = tuple(engine.pressures)
            result = safety_override(state, pressures, safety_cfg)
            if result is not None:
                apply(*result)
        elif roll < 0.60:
            apply(*step(state, IntentEdge(), safety_cfg))
        elif roll < 0.75:
            apply(*step(state, GraspCommand(GraspType(rng.randrange(5))), safety_cfg))
        elif roll < 0.82:
            apply(*step(state, ReleaseCommand(), safety_cfg))
        elif roll < 0.97:
            if silence_started is None:
                apply(*step(state, HeartbeatEvent(), safety_cfg))
        else:
            if rng.random() < 0.05:
                apply(*step(state, AbortCommand(), safety_cfg))
        max_abs = max(max_abs, max(abs(p) for p in engine.pressures))
        assert max_abs < hard, f"seed {seed}: pressure {max_abs} breached the hard limit"

    # heartbeat silence: fail-safe within watchdog + vent time
    silence_started = now
    fail_safe_deadline = now + safety_cfg.watchdog_ms + safety_cfg.release_vent_ms
    while now < fail_safe_deadline:
        now += 5
        engine.run(5)
        apply(*step(state, Tick(now), safety_cfg))
        result = watchdog_check(state, now, safety_cfg)
        if result is not None:
            apply(*result)
        events += 1
    assert engine.command == FAIL_SAFE_COMMAND, f"seed {seed}: not vented after silence"
    assert state.phase in (Phase.FAULT, Phase.IDLE)
    return events, max_abs


def test_acceptance_controller_safety_property():
    started = time.perf_counter()
    total_events = 0
    worst = 0.0
    for seed in range(100):
        events, max_abs = _random_safety_run(seed)
        total_events += events
        worst = max(worst, max_abs)
    elapsed = time.perf_counter() - started
    assert total_events >= 100_000
    assert elapsed < 60.0
    report_pass(
        "controller-safety",
        f"{total_events} events / 100 seeds, peak |P| {worst:.2f} kPa < 50, {elapsed:.1f}s",
    )


# --- 3. plant oracle equivalence ------------------------------------------------------

def _closed_form(t_s, k, p_star, leak):
    r = k + leak
    return (k * p_star / r) * (1.0 - math.exp(-r * t_s))


def test_acceptance_plant_matches_analytic_oracle():
    cfg = PlantConfig()
    single = proto_cmd = None  # readability only

    def run_case(routes, vacuum, k_eff, sample_ticks):
        from reglove.controller import PneumaticCommand

        command = PneumaticCommand(
            finger_valve=routes, exhaust_open=False, inflation_pump=False, vacuum_pump=vacuum
        )
        state = PlantState()
        worst = 0.0
        for tick in range(1, max(sample_ticks) + 1):
            state = step_plant(state, command, cfg)
            if tick in sample_ticks:
                expected = _closed_form(tick / 1000.0, k_eff, cfg.p_vacuum_kpa, cfg.leak_rate_per_s)
                rel = abs(state.pressures_kpa[routes.index(ValveRoute.TO_VACUUM)] - expected) / abs(expected)
                worst = max(worst, rel)
                assert rel < 0.005, (tick, rel)
        return worst

    single_routes = (ValveRoute.CLOSED, ValveRoute.TO_VACUUM) + (ValveRoute.CLOSED,) * 3
    worst_single = run_case(single_routes, True, 12.0, {50, 100, 150, 200, 250})
    shared_routes = (ValveRoute.TO_VACUUM,) * 5
    worst_shared = run_case(shared_routes, True, 12.0 * 3 / 5, {100, 200, 300, 400, 500})
    report_pass(
        "plant-oracle",
        f"worst rel err single {worst_single:.4%}, shared {worst_shared:.4%} (< 0.5%)",
    )


# --- 4. confusion model ---------------------------------------------------------------

def test_acceptance_confusion_model():
    started = time.perf_counter()
    matrix = default_confusion_matrix()
    clf = ConfusionClassifier(matrix, seed=20_25)
    n = 100_000
    hits = 0
    pair_counts: dict[frozenset, int] = {}
    for i in range(n):
        truth = GraspType(i % 5)
        predicted = clf.classify(SceneObject("x", truth)).predicted
        if predicted is truth:
            hits += 1
        else:
            key = frozenset((truth, predicted))
            pair_counts[key] = pair_counts.get(key, 0) + 1
    accuracy = hits / n
    assert abs(accuracy - 0.967) <= 0.005
    most_confused = max(pair_counts, key=pair_counts.get)
    assert most_confused == frozenset((GraspType.PINCH, GraspType.THREE_JAW_CHUCK))
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    report_pass(
        "confusion-model",
        f"accuracy {accuracy:.4f} in 0.967 +/- 0.005, top confusion pinch<->three-jaw, {elapsed:.1f}s",
    )


# --- 5. latency budget -----------------------------------------------------------------

def test_acceptance_latency_budget():
    scenario = latency_benchmark_scenario(n_triggers=1000, seed=7)
    report = run_scenario(scenario, trace=False)
    assert report.latency.n == 1000
    for t in report.triggers:
        stage_sum = (
            t["frame_wait_ms"]
            + t["capture_transfer_ms"]
            + t["preprocess_infer_ms"]
            + t["decision_protocol_ms"]
            + t["controller_dispatch_ms"]
        )
        assert t["total_ms"] == stage_sum  # identity is exact, per trigger
    assert abs(report.latency.mean_ms - 38.0) <= 1.0
    assert abs(report.inference_mean_ms - 0.90) <= 0.02
    report_pass(
        "latency-budget",
        f"mean {report.latency.mean_ms:.2f} ms in 38 +/- 1, sigma {report.latency.std_ms:.2f} ms, "
        f"inference {report.inference_mean_ms:.3f} ms in 0.90 +/- 0.02, identity exact x1000",
    )


# --- 6. YCB scoring ---------------------------------------------------------------------

def test_acceptance_ycb_scoring():
    result = score_ycb([YcbTrial("aggregate", 215.5, 260.5)])
    # 215.5/260.5 recomputes to 82.7255...%, not the 82.71% sometimes quoted
    # for this aggregate; we always report the recomputed ratio.
    assert result["success_rate_pct"] == pytest.approx(82.73, abs=0.01)
    assert result["success_rate_pct"] != pytest.approx(82.71, abs=0.005)
    report_pass(
        "ycb-scoring",
        f"215.5/260.5 -> {result['success_rate_pct']:.4f}% (in 82.73 +/- 0.01; quoted 82.71 documented)",
    )


# --- 7. ADL pipeline ----------------------------------------------------------------------

TABLE_HEADER = "Task Category,Specific Task,Human Time (s),ReGlove Time (s),Score (0--3),Failure Rate (%)\n"
PLOT_HEADER = "Tasks,Avg Human Execution Time (s),Avg ReGlove Execution Time (s)\n"


def test_acceptance_adl_pipeline(tmp_path):
    table = tmp_path / "table.csv"
    rows = "".join(
        f"Cat,Task {i},{4 + i * 0.25},{9 + i * 0.5},{(i % 4) * 0.5 + 1.5},{(i % 3) * 10}\n"
        for i in range(27)
    )
    table.write_text(TABLE_HEADER + rows)
    records = load_adl_csv(table)
    assert len(records) == 27

    plot = tmp_path / "plot.csv"
    plot.write_text(PLOT_HEADER + "Fill water,4.1,9.8\nPour coffee,5.2,11.6\n")
    plot_records = load_adl_csv(plot)
    assert [r.specific_task for r in plot_records] == ["Fill water", "Pour coffee"]

    # synthetic 27-row set with known statistics reproduces exactly
    scores = [(i % 4) * 0.5 + 1.5 for i in range(27)]
    result = score_adl(records)
    mean = sum(scores) / 27
    std = math.sqrt(sum((s - mean) ** 2 for s in scores) / 27)
    assert result["mean_score"] == mean and result["std_score"] == std
    assert result["n"] == 27

    from reglove.scoring import MalformedNumber

    bad = tmp_path / "bad.csv"
    bad.write_text(TABLE_HEADER + "Cat,Task,4,9,3.5,0\n")
    with pytest.raises(MalformedNumber):
        load_adl_csv(bad)
    report_pass(
        "adl-pipeline",
        f"both header dialects parsed, 27-row stats exact (mean {mean:.4f}, sigma {std:.4f}), "
        "range [0,3] enforced",
    )


# --- 8. endurance soak -------------------------------------------------------------------

def test_acceptance_endurance_soak():
    started = time.perf_counter()
    result = endurance_soak(minutes=90.0, seed=1)
    elapsed = time.perf_counter() - started
    v = result.verdict
    assert elapsed < 120.0, f"soak took {elapsed:.0f}s wall"
    assert v.passed, v.reasons
    assert v.max_hold_drift_kpa < 0.5
    assert abs(v.mean_power_w - 10.3) <= 1.2
    power = result.report.power
    assert power.mean_w * (power.duration_ms / 1000.0) == pytest.approx(
        power.energy_joules, rel=1e-6
    )
    report_pass(
        "endurance-soak",
        f"90 sim-min in {elapsed:.0f}s wall, {v.cycles} cycles, drift {v.max_hold_drift_kpa:.3f} kPa, "
        f"power {v.mean_power_w:.2f} W in 10.3 +/- 1.2, energy identity 1e-6",
    )


# --- 9. determinism -----------------------------------------------------------------------

def test_acceptance_determinism(tmp_path):
    scenario_a = latency_benchmark_scenario(n_triggers=25, seed=31)
    scenario_b = latency_benchmark_scenario(n_triggers=25, seed=31)
    bytes_a = run_scenario(scenario_a).to_json_bytes()
    bytes_b = run_scenario(scenario_b).to_json_bytes()
    assert bytes_a == bytes_b

    def scripted(driver):
        driver.advance(300)
        driver.apply_command({"kind": "select_object", "name": "marble"})
        driver.apply_command({"kind": "trigger_intent"})
        driver.advance(1200)
        driver.apply_command({"kind": "override_grasp", "grasp": "power"})
        driver.advance(2500)
        driver.apply_command(
            {"kind": "inject_fault", "fault": {"kind": "leak", "finger": "ring", "rate_per_s": 0.4}}
        )
        driver.advance(800)

    base = Scenario(name="determinism", seed=5, duration_ms=1e9, classifier_mode="confusion")
    live = SessionDriver(base, capture_snapshots=True)
    scripted(live)
    log_path = tmp_path / "session.jsonl"
    live.save_command_log(log_path)

    replayed = replay_command_log(
        log_path, Scenario(name="determinism", seed=5, duration_ms=1e9, classifier_mode="confusion")
    )
    assert replayed.snapshot_log == live.snapshot_log
    assert replayed.current_report_bytes() == live.current_report_bytes()
    report_pass(
        "determinism",
        f"report bytes identical ({len(bytes_a)} B), session replay identical "
        f"({len(live.snapshot_log)} snapshots, {len(live.command_log)} commands)",
    )
