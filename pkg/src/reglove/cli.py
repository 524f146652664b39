"""Headless entry point: run scenarios, soak tests, scoring, protocol
conformance vectors, session replay, and the live service.

Machine-parseable JSON goes to stdout; the human summary goes to stderr.
Exit codes: 0 success, 1 scenario/verdict failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import protocol
from .harness import endurance_soak, latency_benchmark_scenario, run_scenario
from .report import render_figures
from .scenario import Scenario, ScenarioInvalid, load_scenario
from .scoring import (
    EmptyTrials,
    MalformedNumber,
    MissingColumn,
    NoScores,
    load_adl_csv,
    load_ycb_csv,
    score_adl,
    score_ycb,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _emit(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def _say(text: str) -> None:
    sys.stderr.write(text + "\n")


def _write_report(report, path_arg: str | None, figures: bool) -> None:
    if path_arg:
        written = report.write(path_arg, figures=figures)
        _say("wrote " + ", ".join(str(p) for p in written))
    else:
        sys.stdout.buffer.write(report.to_json_bytes())


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        if args.scenario:
            scenario = load_scenario(args.scenario)
        else:
            scenario = latency_benchmark_scenario(n_triggers=args.triggers, seed=args.seed or 7)
        if args.seed is not None:
            scenario.seed = args.seed
        report = run_scenario(scenario)
    except (ScenarioInvalid, OSError) as exc:
        _say(f"error: {exc}")
        return EXIT_FAIL
    _write_report(report, args.report, figures=not args.no_figures)
    if args.report:
        _emit(
            {
                "scenario": report.scenario_name,
                "seed": report.seed,
                "triggers": report.latency.n,
                "latency_mean_ms": report.latency.mean_ms,
                "latency_std_ms": report.latency.std_ms,
                "mean_power_w": report.power.mean_w,
                "faults": len(report.fault_log),
            }
        )
    _say(
        f"{report.scenario_name}: {report.latency.n} triggers, "
        f"latency {report.latency.mean_ms:.2f} +/- {report.latency.std_ms:.2f} ms, "
        f"power {report.power.mean_w:.2f} W, {len(report.fault_log)} fault log entries"
    )
    return EXIT_OK


def _cmd_soak(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario) if args.scenario else None
    if args.trace and scenario is None:
        from .scenario import Scenario

        # long sessions: sample the traces coarsely so the report stays small
        scenario = Scenario(
            name=f"soak-{args.minutes:g}min",
            seed=args.seed,
            duration_ms=args.minutes * 60_000.0,
            trace_interval_ms=1000,
        )
    result = endurance_soak(
        minutes=args.minutes, seed=args.seed, scenario=scenario, trace=args.trace
    )
    verdict = result.verdict
    if args.report:
        result.report.write(args.report, figures=not args.no_figures)
    _emit(
        {
            "passed": verdict.passed,
            "reasons": list(verdict.reasons),
            "cycles": verdict.cycles,
            "max_hold_drift_kpa": verdict.max_hold_drift_kpa,
            "mean_power_w": verdict.mean_power_w,
            "envelope_w": [verdict.envelope_mean_w, verdict.envelope_tol_w],
        }
    )
    _say(
        f"soak {args.minutes:g} min: {'PASS' if verdict.passed else 'FAIL'} "
        f"({verdict.cycles} cycles, drift {verdict.max_hold_drift_kpa:.3f} kPa, "
        f"power {verdict.mean_power_w:.2f} W)"
    )
    for reason in verdict.reasons:
        _say("  - " + reason)
    return EXIT_OK if verdict.passed else EXIT_FAIL


def _cmd_score(args: argparse.Namespace) -> int:
    try:
        if args.adl:
            records = load_adl_csv(args.adl)
            result = score_adl(records)
            _emit({"adl": result})
            _say(
                f"ADL: n={result['n']} mean={result['mean_score']:.2f} "
                f"std={result['std_score']:.2f}"
            )
        else:
            trials = load_ycb_csv(args.ycb)
            result = score_ycb(trials)
            _emit({"ycb": result})
            _say(
                f"YCB: success_rate {result['success_rate_pct']:.2f} "
                f"({result['points']:g}/{result['possible']:g} points over {result['n']} objects)"
            )
    except (MissingColumn, MalformedNumber, NoScores, EmptyTrials, OSError) as exc:
        _say(f"error: {exc}")
        return EXIT_FAIL
    return EXIT_OK


def _cmd_conformance(args: argparse.Namespace) -> int:
    vectors = protocol.conformance_vectors()
    if args.emit:
        Path(args.emit).write_text(json.dumps(vectors, indent=2, sort_keys=True) + "\n")
        _say(f"wrote {len(vectors)} vectors to {args.emit}")
        return EXIT_OK
    try:
        foreign = json.loads(Path(args.check).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        _say(f"error: {exc}")
        return EXIT_FAIL
    ours = {v["name"]: v for v in vectors}
    failures = []
    for entry in foreign:
        name = entry.get("name")
        reference = ours.get(name)
        if reference is None:
            failures.append(f"{name}: not a known vector")
        elif entry.get("hex", "").lower() != reference["hex"]:
            failures.append(f"{name}: bytes differ (got {entry.get('hex')}, want {reference['hex']})")
    missing = set(ours) - {e.get("name") for e in foreign}
    failures.extend(f"{name}: missing from checked file" for name in sorted(missing))
    _emit({"checked": len(foreign), "failures": failures})
    if failures:
        for f in failures:
            _say("  - " + f)
        return EXIT_FAIL
    _say(f"all {len(foreign)} vectors match byte-for-byte")
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    from .service import replay_command_log

    scenario = load_scenario(args.scenario) if args.scenario else None
    try:
        driver = replay_command_log(args.log, scenario)
    except (OSError, ValueError) as exc:
        _say(f"error: {exc}")
        return EXIT_FAIL
    report_bytes = driver.current_report_bytes()
    if args.report:
        Path(args.report).write_bytes(report_bytes)
        _say(f"wrote {args.report}")
    import hashlib

    digest = hashlib.sha256(report_bytes).hexdigest()
    _emit(
        {
            "sim_time_ms": driver.sim.sim_time_ms,
            "commands": len(driver.command_log),
            "snapshots": len(driver.snapshot_log),
            "report_sha256": digest,
        }
    )
    _say(f"replayed {len(driver.command_log)} commands to t={driver.sim.sim_time_ms:.0f} ms")
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    scenario = load_scenario(args.scenario) if args.scenario else None
    port = args.port if args.port is not None else int(os.environ.get("REGLOVE_PORT", "8321"))
    _say(f"serving on {args.host}:{port}")
    serve(
        port=port,
        host=args.host,
        scenario=scenario,
        scenarios_dir=Path(args.scenarios_dir) if args.scenarios_dir else None,
        reports_dir=Path(args.reports_dir) if args.reports_dir else None,
        console_dir=Path(args.console_dir) if args.console_dir else _default_console_dir(),
        log_path=Path(args.session_log) if args.session_log else None,
    )
    return EXIT_OK


def _default_console_dir() -> Path | None:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.exists() else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reglove", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_run = sub.add_parser("run", help="execute a scenario file (or the builtin latency benchmark)")
    p_run.add_argument("--scenario", help="scenario JSON file; omit for the latency benchmark")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--triggers", type=int, default=1000, help="builtin benchmark trigger count")
    p_run.add_argument("--report", help="write report JSON here (plus CSV and figures)")
    p_run.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p_run.set_defaults(func=_cmd_run)

    p_soak = sub.add_parser("soak", help="endurance soak with the continuous duty cycle")
    p_soak.add_argument("--minutes", type=float, default=90.0)
    p_soak.add_argument("--seed", type=int, default=1)
    p_soak.add_argument("--scenario", help="base config scenario file")
    p_soak.add_argument("--report", help="write report JSON here")
    p_soak.add_argument("--trace", action="store_true",
                        help="record pressure/power traces for the report figures")
    p_soak.add_argument("--no-figures", action="store_true")
    p_soak.set_defaults(func=_cmd_soak)

    p_score = sub.add_parser("score", help="score ADL or YCB benchmark CSVs")
    group = p_score.add_mutually_exclusive_group(required=True)
    group.add_argument("--adl", help="ADL CSV (either published header dialect)")
    group.add_argument("--ycb", help="YCB trials CSV")
    p_score.set_defaults(func=_cmd_score)

    p_conf = sub.add_parser("conformance", help="emit or check protocol golden vectors")
    group = p_conf.add_mutually_exclusive_group(required=True)
    group.add_argument("--emit", help="write golden vectors to this path")
    group.add_argument("--check", help="verify a foreign implementation's vectors file")
    p_conf.set_defaults(func=_cmd_conformance)

    p_replay = sub.add_parser("replay", help="deterministically re-run a service session log")
    p_replay.add_argument("--log", required=True, help="session log (JSON lines)")
    p_replay.add_argument("--scenario", help="scenario file the session ran")
    p_replay.add_argument("--report", help="write the replayed report here")
    p_replay.set_defaults(func=_cmd_replay)

    p_serve = sub.add_parser("serve", help="launch the telemetry/command gateway")
    p_serve.add_argument("--port", type=int, default=None, help="default: $REGLOVE_PORT or 8321")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--scenario", help="base scenario/config file")
    p_serve.add_argument("--scenarios-dir", help="directory of selectable scenario files")
    p_serve.add_argument("--reports-dir", help="directory served at /reports")
    p_serve.add_argument("--console-dir", help="static console bundle to serve at /")
    p_serve.add_argument("--session-log", help="write the session command log here on exit")
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    base = os.environ.get("REGLOVE_CONFIG")
    parser = build_parser()
    args = parser.parse_args(argv)
    if base and getattr(args, "scenario", None) in (None, "") and args.subcommand in ("run", "soak", "serve"):
        args.scenario = base
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
