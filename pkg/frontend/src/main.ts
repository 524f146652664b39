import { GatewayClient } from "./client.js";
import { GRASPS, OperatorCommand } from "./protocol.js";
import { ConsoleView } from "./render.js";
import { ConsoleViewModel } from "./viewmodel.js";

const root = document.getElementById("app")!;
const vm = new ConsoleViewModel();
const view = new ConsoleView(root);

const controls = document.createElement("section");
controls.className = "panel controls";
root.prepend(controls);

const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const client = new GatewayClient(wsUrl, {
  onSnapshot: (snap) => {
    vm.applySnapshot(snap, performance.now());
  },
  onStatus: (status) => {
    if (status === "disconnected") vm.markDisconnected();
    if (status === "connecting") vm.markConnecting();
  },
  onParseError: () => {
    vm.parseErrors += 1;
  },
  onSchemaMismatch: (got) => {
    view.showMessage(`schema mismatch: gateway speaks v${got}`);
  },
});

async function run(cmd: OperatorCommand): Promise<void> {
  const result = await client.send(cmd);
  view.showMessage(result.ok ? result.reason : `rejected: ${result.reason}`);
}

function button(label: string, className: string, cmd: () => OperatorCommand): HTMLButtonElement {
  const b = document.createElement("button");
  b.textContent = label;
  b.className = className;
  b.onclick = () => void run(cmd());
  controls.appendChild(b);
  return b;
}

// The big tactile-switch stand-in.
button("TRIGGER", "trigger", () => ({ kind: "trigger_intent" }));
button("Abort", "danger", () => ({ kind: "abort" }));
button("Clear faults", "", () => ({ kind: "clear_faults" }));
button("Reset", "", () => ({ kind: "reset" }));
button("Pause", "", () => ({ kind: "pause" }));
button("Resume", "", () => ({ kind: "resume" }));

const objectPicker = document.createElement("select");
controls.appendChild(objectPicker);
objectPicker.onchange = () => void run({ kind: "select_object", name: objectPicker.value });

const overridePicker = document.createElement("select");
for (const g of ["override..."].concat(GRASPS as unknown as string[])) {
  const opt = document.createElement("option");
  opt.textContent = g;
  opt.value = g;
  overridePicker.appendChild(opt);
}
overridePicker.onchange = () => {
  if (overridePicker.value !== "override...") {
    void run({ kind: "override_grasp", grasp: overridePicker.value });
    overridePicker.value = "override...";
  }
};
controls.appendChild(overridePicker);

const faultPicker = document.createElement("select");
for (const name of ["inject fault...", "stuck index valve", "thumb leak", "weak vacuum pump"]) {
  const opt = document.createElement("option");
  opt.textContent = name;
  faultPicker.appendChild(opt);
}
faultPicker.onchange = () => {
  const faults: Record<string, Record<string, unknown>> = {
    "stuck index valve": { kind: "stuck_valve", finger: "index", route: "to_vacuum" },
    "thumb leak": { kind: "leak", finger: "thumb", rate_per_s: 1.5 },
    "weak vacuum pump": { kind: "pump_degraded", pump: "vacuum", flow_fraction: 0.4 },
  };
  const fault = faults[faultPicker.value];
  if (fault) void run({ kind: "inject_fault", fault });
  faultPicker.selectedIndex = 0;
};
controls.appendChild(faultPicker);

const scenarioPicker = document.createElement("select");
scenarioPicker.appendChild(new Option("scenario...", ""));
controls.appendChild(scenarioPicker);
scenarioPicker.onchange = () => {
  if (scenarioPicker.value) void run({ kind: "start_scenario", name: scenarioPicker.value });
  scenarioPicker.value = "";
};

async function loadCatalogs(): Promise<void> {
  try {
    const objects = (await (await fetch("/objects")).json()) as { name: string }[];
    objectPicker.replaceChildren(...objects.map((o) => new Option(o.name, o.name)));
    const scenarios = (await (await fetch("/scenarios")).json()) as string[];
    scenarioPicker.replaceChildren(
      new Option("scenario...", ""),
      ...scenarios.map((s) => new Option(s, s)),
    );
  } catch {
    view.showMessage("catalog fetch failed; controls limited");
  }
}

client.connect();
void loadCatalogs();
setInterval(() => {
  vm.checkStale(performance.now());
  view.update(vm);
}, 50);
