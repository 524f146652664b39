"""Realtime gateway: streams telemetry snapshots and applies operator commands.

One SessionDriver owns the live simulation. Network handlers never touch sim
state directly: commands are applied under the driver lock between tick
batches and recorded in a sim-time-stamped log, so any session can be
replayed deterministically. Snapshots are pure projections broadcast as
schema-versioned JSON text over a persistent WebSocket; slow clients get
newest-wins delivery and never stall the loop.
"""
import asyncio
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .controller import Phase
from .grasps import GraspType, parse_grasp_label
from .harness import build_sim
from .perception import ConfusionClassifier, SceneObject, StubClassifier, default_confusion_matrix
from .plant import flexion
from .report import assemble_report
from .scenario import Scenario, fault_from_dict, load_scenario
from .simulation import ClosedLoopSim

SNAPSHOT_SCHEMA_VERSION = 1

DEFAULT_OBJECTS = (
    SceneObject("mug", GraspType.POWER),
    SceneObject("credit card", GraspType.KEY),
    SceneObject("screwdriver", GraspType.TOOL),
    SceneObject("marble", GraspType.PINCH, scale_ambiguous=True),
    SceneObject("tennis ball", GraspType.THREE_JAW_CHUCK),
    SceneObject("clothespin", GraspType.PINCH),
)


def _default_scenario(seed: int = 0) -> Scenario:
    return Scenario(name="interactive", seed=seed, duration_ms=1e12, classifier_mode="confusion")


class SessionDriver:
    """Owns one simulation; applies commands at tick boundaries and logs them."""

    def __init__(
        self,
        scenario: Scenario | None = None,
        scenarios_dir: Optional[Path] = None,
        snapshot_interval_ms: int = 20,
        capture_snapshots: bool = False,
    ) -> None:
        self.scenario = scenario or _default_scenario()
        self.scenarios_dir = Path(scenarios_dir) if scenarios_dir else None
        self.snapshot_interval_ms = snapshot_interval_ms
        self.capture_snapshots = capture_snapshots
        self.lock = threading.Lock()
        self.command_log: list[dict] = []
        self.snapshot_log: list[dict] = []
        self.paused = False
        self._start_session(self.scenario)

    def _start_session(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.sim: ClosedLoopSim = build_sim(scenario, trace=False)
        for obj in scenario.objects:
            self.sim.schedule_trigger(obj.trigger_ms, obj.scene_object(), obj.release_after_ms, obj.override)
        for spec in scenario.faults:
            self.sim.schedule_fault(spec.onset_ms, spec.fault)
        self.catalog = {o.name: o for o in DEFAULT_OBJECTS}
        for obj in scenario.objects:
            self.catalog.setdefault(obj.name, obj.scene_object())
        self.current_object = next(iter(self.catalog.values()))
        self._regrasp: Optional[GraspType] = None
        self.sim.on_idle = self._maybe_regrasp
        self._next_snapshot_tick = 0

    def _maybe_regrasp(self, sim: ClosedLoopSim) -> None:
        if self._regrasp is not None:
            grasp, self._regrasp = self._regrasp, None
            sim.set_pending_override(grasp)
            sim.operator_intent(self.current_object)

    # -- command application -------------------------------------------------------

    def apply_command(self, command: dict, log: bool = True) -> dict:
        """Apply one operator command at the current tick. Returns {ok, reason}."""
        if log:
            self.command_log.append({"t_ms": self.sim.sim_time_ms, "command": command})
        kind = command.get("kind")
        try:
            handler = getattr(self, f"_cmd_{kind}", None)
            if handler is None:
                return {"ok": False, "reason": f"unknown command kind {kind!r}"}
            return handler(command)
        except (KeyError, ValueError) as exc:
            return {"ok": False, "reason": str(exc)}

    def _cmd_trigger_intent(self, command: dict) -> dict:
        ok, reason = self.sim.operator_intent(self.current_object)
        return {"ok": ok, "reason": reason}

    def _cmd_select_object(self, command: dict) -> dict:
        name = command["name"]
        if name not in self.catalog:
            return {"ok": False, "reason": f"unknown object {name!r}"}
        self.current_object = self.catalog[name]
        return {"ok": True, "reason": f"selected {name}"}

    def _cmd_override_grasp(self, command: dict) -> dict:
        grasp = parse_grasp_label(command["grasp"])
        phase = self.sim.ctrl_state.phase
        if phase not in (Phase.IDLE, Phase.AWAIT_GRASP, Phase.HOLD):
            return {"ok": False, "reason": "phase"}
        ok, reason = self.sim.operator_override(grasp)
        if ok and phase is Phase.HOLD:
            self._regrasp = grasp
            self.sim.operator_intent(self.current_object)  # release; regrasp on idle
        return {"ok": ok, "reason": reason}

    def _cmd_inject_fault(self, command: dict) -> dict:
        fault = fault_from_dict(command["fault"])
        self.sim.schedule_fault(self.sim.sim_time_ms, fault)
        return {"ok": True, "reason": f"injected {command['fault']['kind']}"}

    def _cmd_clear_faults(self, command: dict) -> dict:
        self.sim.operator_clear_faults()
        return {"ok": True, "reason": "faults cleared"}

    def _cmd_set_classifier(self, command: dict) -> dict:
        mode = command["mode"]
        if mode == "stub":
            self.sim.classifier = StubClassifier(self.scenario.latency_model)
        elif mode == "confusion":
            self.sim.classifier = ConfusionClassifier(
                self.scenario.matrix or default_confusion_matrix(),
                seed=self.scenario.seed + 0x5EED,
                model=self.scenario.latency_model,
            )
        else:
            return {"ok": False, "reason": f"unknown classifier mode {mode!r}"}
        return {"ok": True, "reason": f"classifier {mode}"}

    def _cmd_abort(self, command: dict) -> dict:
        self.sim.operator_abort()
        return {"ok": True, "reason": "abort sent"}

    def _cmd_reset(self, command: dict) -> dict:
        self._start_session(self.scenario)
        return {"ok": True, "reason": "session reset"}

    def _cmd_start_scenario(self, command: dict) -> dict:
        name = command["name"]
        if self.scenarios_dir is None:
            return {"ok": False, "reason": "no scenarios directory configured"}
        path = self.scenarios_dir / f"{name}.json"
        if not path.exists():
            return {"ok": False, "reason": f"no scenario named {name!r}"}
        self._start_session(load_scenario(path))
        return {"ok": True, "reason": f"scenario {name} started"}

    def _cmd_pause(self, command: dict) -> dict:
        self.paused = True
        return {"ok": True, "reason": "paused"}

    def _cmd_resume(self, command: dict) -> dict:
        self.paused = False
        return {"ok": True, "reason": "resumed"}

    # -- advancing -------------------------------------------------------------------

    def advance(self, n_ms: int) -> None:
        """Advance sim time; capture sim-time-cadenced snapshots when enabled."""
        if self.paused or n_ms <= 0:
            return
        target = self.sim.tick + n_ms
        if not self.capture_snapshots:
            self.sim.run_until(target)
            return
        while self.sim.tick < target:
            bound = min(target, self._next_snapshot_tick or target)
            if bound > self.sim.tick:
                self.sim.run_until(bound)
            if self.sim.tick >= self._next_snapshot_tick:
                self.snapshot_log.append(self.snapshot())
                self._next_snapshot_tick += self.snapshot_interval_ms

    # -- projections -------------------------------------------------------------------

    def snapshot(self) -> dict:
        sim = self.sim
        state = sim.ctrl_state
        cmd = sim.command
        pressures = list(sim.engine.pressures)
        last = sim.triggers[-1] if sim.triggers else None
        recent = [r.total_ms for r in sim.triggers[-200:] if r.total_ms]
        tele = sim.last_telemetry
        return {
            "schema": SNAPSHOT_SCHEMA_VERSION,
            "seq": sim.tick // self.snapshot_interval_ms,
            "sim_time_ms": sim.sim_time_ms,
            "phase": state.phase.name.lower(),
            "fault_code": state.fault_code.name.lower() if state.fault_code else None,
            "pressures_kpa": pressures,
            "flexion": [flexion(p, sim.plant_cfg) for p in pressures],
            "valves": [r.name.lower() for r in cmd.finger_valve],
            "exhaust_open": cmd.exhaust_open,
            "pumps": {"inflation": cmd.inflation_pump, "vacuum": cmd.vacuum_pump},
            "soft_latched": sorted(f.name.lower() for f in state.soft_latched),
            "last_classification": (
                {
                    "object": last.object_name,
                    "true_grasp": last.true_grasp.label,
                    "predicted": last.predicted.label,
                    "confidence": last.confidence,
                    "overridden": last.overridden,
                    "total_ms": last.total_ms,
                    "grip_ok": last.grip_ok,
                }
                if last
                else None
            ),
            "latency": {
                "n": len(recent),
                "recent_ms": recent[-200:],
                "mean_ms": (sum(recent) / len(recent)) if recent else None,
            },
            "mean_power_w": sim.mean_power_w(),
            "energy_joules": sim.engine.energy_joules,
            "active_faults": [repr(f) for f in sim.engine.faults],
            "burst": sim.engine.burst.name.lower() if sim.engine.burst else None,
            "wire_telemetry": (
                {
                    "phase": tele.phase,
                    "pressures_dkpa": list(tele.pressures_dkpa),
                    "valve_bitmap": tele.valve_bitmap,
                    "pump_bitmap": tele.pump_bitmap,
                }
                if tele
                else None
            ),
            "paused": self.paused,
            "scenario": self.scenario.name,
            "current_object": self.current_object.name,
        }

    def current_report_bytes(self) -> bytes:
        return assemble_report(
            self.sim, scenario_name=self.scenario.name, seed=self.scenario.seed,
            include_traces=False,
        ).to_json_bytes()

    def save_command_log(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {"type": "session", "scenario": self.scenario.name, "seed": self.scenario.seed}
        lines = [json.dumps(header, sort_keys=True)]
        lines += [json.dumps(e, sort_keys=True) for e in self.command_log]
        lines.append(json.dumps({"type": "end", "t_ms": self.sim.sim_time_ms}, sort_keys=True))
        path.write_text("\n".join(lines) + "\n")


def replay_command_log(
    path: str | Path,
    scenario: Scenario | None = None,
    snapshot_interval_ms: int = 20,
) -> SessionDriver:
    """Re-run a session log headlessly; returns the finished driver.

    The same scenario and the same command timestamps reproduce the run
    tick-for-tick, so the replayed snapshot stream and report match the
    original byte-for-byte.
    """
    lines = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    if not lines or lines[0].get("type") != "session":
        raise ValueError("not a session log: missing header line")
    header = lines[0]
    end_ms = None
    commands = []
    for entry in lines[1:]:
        if entry.get("type") == "end":
            end_ms = entry["t_ms"]
        else:
            commands.append(entry)
    driver = SessionDriver(
        scenario or _default_scenario(int(header.get("seed", 0))),
        snapshot_interval_ms=snapshot_interval_ms,
        capture_snapshots=True,
    )
    for entry in commands:
        target = int(entry["t_ms"]) - driver.sim.tick
        if target > 0:
            driver.advance(target)
        # re-log so the replayed session produces the same command log
        driver.apply_command(entry["command"])
    if end_ms is not None and end_ms > driver.sim.tick:
        driver.advance(int(end_ms) - driver.sim.tick)
    return driver


# -- network layer ---------------------------------------------------------------------


class BroadcastHub:
    """Fan-out with newest-wins, per-client single-slot queues."""

    def __init__(self) -> None:
        self._clients: dict[object, tuple[asyncio.AbstractEventLoop, asyncio.Queue]] = {}
        self._lock = threading.Lock()

    def register(self, key, loop: asyncio.AbstractEventLoop) -> asyncio.Queue:
        queue: asyncio.Queue = asyncio.Queue(maxsize=1)
        with self._lock:
            self._clients[key] = (loop, queue)
        return queue

    def unregister(self, key) -> None:
        with self._lock:
            self._clients.pop(key, None)

    def broadcast(self, item: dict) -> None:
        with self._lock:
            clients = list(self._clients.values())
        for loop, queue in clients:
            loop.call_soon_threadsafe(self._offer, queue, item)

    @staticmethod
    def _offer(queue: asyncio.Queue, item: dict) -> None:
        if queue.full():
            try:
                queue.get_nowait()  # drop the stale snapshot: newest wins
            except asyncio.QueueEmpty:
                pass
        queue.put_nowait(item)


class ServiceLoop:
    """Wall-clock pacing thread: drains nothing itself (commands apply under
    the driver lock from network handlers) and broadcasts snapshots at 50 Hz."""

    def __init__(self, driver: SessionDriver, hub: BroadcastHub, rate: float = 1.0) -> None:
        self.driver = driver
        self.hub = hub
        self.rate = rate
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, name="reglove-sim", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def _run(self) -> None:
        period = 0.02  # one snapshot interval of wall time
        budget = 0.0
        last = time.monotonic()
        while not self._stop.is_set():
            now = time.monotonic()
            budget = min(budget + (now - last) * 1000.0 * self.rate, 1000.0)
            last = now
            n = min(int(budget), 200)  # cap catch-up after stalls
            budget -= n
            if n > 0:
                with self.driver.lock:
                    self.driver.advance(n)
            with self.driver.lock:
                snap = self.driver.snapshot()
            self.hub.broadcast(snap)
            elapsed = time.monotonic() - now
            if elapsed < period:
                time.sleep(period - elapsed)


def create_app(
    driver: SessionDriver,
    reports_dir: Optional[Path] = None,
    console_dir: Optional[Path] = None,
    loop: Optional[ServiceLoop] = None,
):
    from contextlib import asynccontextmanager

    from fastapi import FastAPI, WebSocket, WebSocketDisconnect
    from fastapi.responses import FileResponse, JSONResponse, Response

    hub = BroadcastHub()
    service_loop = loop or ServiceLoop(driver, hub)

    @asynccontextmanager
    async def lifespan(_app):
        service_loop.start()
        yield
        service_loop.stop()

    app = FastAPI(title="reglove service", lifespan=lifespan)
    app.state.driver = driver
    app.state.hub = hub
    app.state.loop = service_loop

    @app.get("/health")
    def health() -> dict:
        with driver.lock:
            return {
                "status": "ok",
                "schema": SNAPSHOT_SCHEMA_VERSION,
                "sim_time_ms": driver.sim.sim_time_ms,
                "scenario": driver.scenario.name,
            }

    @app.get("/objects")
    def objects() -> list[dict]:
        return [
            {"name": o.name, "grasp": o.true_grasp.label, "scale_ambiguous": o.scale_ambiguous}
            for o in driver.catalog.values()
        ]

    @app.get("/scenarios")
    def scenarios() -> list[str]:
        if driver.scenarios_dir is None or not driver.scenarios_dir.exists():
            return []
        return sorted(p.stem for p in driver.scenarios_dir.glob("*.json"))

    @app.get("/reports/current.json")
    def current_report() -> Response:
        with driver.lock:
            return Response(driver.current_report_bytes(), media_type="application/json")

    @app.get("/reports/{name}")
    def report(name: str):
        if reports_dir is None:
            return JSONResponse({"error": "no reports directory"}, status_code=404)
        path = (reports_dir / name).resolve()
        if reports_dir.resolve() not in path.parents or not path.exists():
            return JSONResponse({"error": "not found"}, status_code=404)
        return FileResponse(path)

    @app.websocket("/ws")
    async def ws(websocket: WebSocket) -> None:
        await websocket.accept()
        await websocket.send_json({"type": "hello", "schema": SNAPSHOT_SCHEMA_VERSION})
        queue = hub.register(websocket, asyncio.get_running_loop())

        async def sender() -> None:
            while True:
                snap = await queue.get()
                await websocket.send_text(json.dumps({"type": "snapshot", **snap}))

        send_task = asyncio.create_task(sender())
        try:
            while True:
                raw = await websocket.receive_text()
                try:
                    payload = json.loads(raw)
                except json.JSONDecodeError:
                    await websocket.send_json(
                        {"type": "command_result", "id": None, "ok": False, "reason": "bad json"}
                    )
                    continue
                if payload.get("type") != "command":
                    await websocket.send_json(
                        {"type": "command_result", "id": payload.get("id"), "ok": False,
                         "reason": "expected a command message"}
                    )
                    continue
                with driver.lock:
                    result = driver.apply_command(payload.get("command", {}))
                await websocket.send_json(
                    {"type": "command_result", "id": payload.get("id"), **result}
                )
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            hub.unregister(websocket)

    if console_dir is not None and Path(console_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(console_dir), html=True), name="console")

    return app


def serve(
    port: int,
    host: str = "127.0.0.1",
    scenario: Scenario | None = None,
    scenarios_dir: Optional[Path] = None,
    reports_dir: Optional[Path] = None,
    console_dir: Optional[Path] = None,
    log_path: Optional[Path] = None,
) -> None:
    """Run the gateway until interrupted; persists the session command log on exit."""
    import uvicorn

    driver = SessionDriver(scenario, scenarios_dir=scenarios_dir)
    app = create_app(driver, reports_dir=reports_dir, console_dir=console_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        if log_path is not None:
            driver.save_command_log(log_path)
