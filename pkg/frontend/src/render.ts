// DOM rendering. Everything shown comes from the view model's snapshot.

import { FINGERS } from "./protocol.js";
import { ConsoleViewModel } from "./viewmodel.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class ConsoleView {
  private banner: HTMLElement;
  private phase: HTMLElement;
  private gaugeFill: HTMLElement[] = [];
  private gaugeLabel: HTMLElement[] = [];
  private valveCells: HTMLElement[] = [];
  private exhaustCell: HTMLElement;
  private pumpInflation: HTMLElement;
  private pumpVacuum: HTMLElement;
  private classCard: HTMLElement;
  private latencyBars: HTMLElement;
  private latencyLabel: HTMLElement;
  private powerLabel: HTMLElement;
  private faultList: HTMLElement;
  private errorCounter: HTMLElement;
  private messageLine: HTMLElement;

  constructor(root: HTMLElement) {
    this.banner = el("div", "banner", "connecting...");
    root.appendChild(this.banner);

    const grid = el("div", "grid");
    root.appendChild(grid);

    const statePanel = el("section", "panel");
    statePanel.appendChild(el("h2", undefined, "Controller"));
    this.phase = el("div", "phase", "-");
    statePanel.appendChild(this.phase);
    const pumps = el("div", "pumps");
    this.pumpInflation = el("span", "pump", "inflation");
    this.pumpVacuum = el("span", "pump", "vacuum");
    this.exhaustCell = el("span", "pump", "exhaust");
    pumps.append(this.pumpInflation, this.pumpVacuum, this.exhaustCell);
    statePanel.appendChild(pumps);
    grid.appendChild(statePanel);

    const fingerPanel = el("section", "panel");
    fingerPanel.appendChild(el("h2", undefined, "Fingers"));
    for (const name of FINGERS) {
      const row = el("div", "finger-row");
      row.appendChild(el("span", "finger-name", name));
      const gauge = el("div", "gauge");
      const fill = el("div", "gauge-fill");
      gauge.appendChild(fill);
      row.appendChild(gauge);
      const label = el("span", "gauge-label", "0.0 kPa");
      row.appendChild(label);
      const valve = el("span", "valve", "closed");
      row.appendChild(valve);
      fingerPanel.appendChild(row);
      this.gaugeFill.push(fill);
      this.gaugeLabel.push(label);
      this.valveCells.push(valve);
    }
    grid.appendChild(fingerPanel);

    const classPanel = el("section", "panel");
    classPanel.appendChild(el("h2", undefined, "Classification"));
    this.classCard = el("div", "class-card", "no trigger yet");
    classPanel.appendChild(this.classCard);
    grid.appendChild(classPanel);

    const latencyPanel = el("section", "panel");
    latencyPanel.appendChild(el("h2", undefined, "Latency"));
    this.latencyBars = el("div", "histogram");
    latencyPanel.appendChild(this.latencyBars);
    this.latencyLabel = el("div", "latency-label", "-");
    latencyPanel.appendChild(this.latencyLabel);
    this.powerLabel = el("div", "power-label", "-");
    latencyPanel.appendChild(this.powerLabel);
    grid.appendChild(latencyPanel);

    const faultPanel = el("section", "panel");
    faultPanel.appendChild(el("h2", undefined, "Faults"));
    this.faultList = el("ul", "faults");
    faultPanel.appendChild(this.faultList);
    grid.appendChild(faultPanel);

    this.messageLine = el("div", "message", "");
    root.appendChild(this.messageLine);
    this.errorCounter = el("div", "errors", "");
    root.appendChild(this.errorCounter);
  }

  showMessage(text: string): void {
    this.messageLine.textContent = text;
  }

  update(vm: ConsoleViewModel): void {
    this.banner.textContent = vm.status;
    this.banner.dataset.status = vm.status;
    this.errorCounter.textContent = vm.parseErrors ? `dropped messages: ${vm.parseErrors}` : "";

    const snap = vm.snapshot;
    if (!snap) return;
    this.phase.textContent = vm.phaseLabel();
    this.phase.dataset.phase = snap.phase;

    for (let i = 0; i < 5; i++) {
      const flex = snap.flexion[i]; // -1 flexed .. +1 extended
      const pct = ((flex + 1) / 2) * 100;
      this.gaugeFill[i].style.width = `${pct.toFixed(1)}%`;
      this.gaugeLabel[i].textContent = `${snap.pressures_kpa[i].toFixed(1)} kPa`;
      this.valveCells[i].textContent = snap.valves[i].replace("to_", "→");
      this.valveCells[i].dataset.route = snap.valves[i];
      this.gaugeFill[i].classList.toggle("latched", snap.soft_latched.includes(FINGERS[i]));
    }
    this.pumpInflation.dataset.on = String(snap.pumps.inflation);
    this.pumpVacuum.dataset.on = String(snap.pumps.vacuum);
    this.exhaustCell.dataset.on = String(snap.exhaust_open);
    this.exhaustCell.textContent = snap.exhaust_open ? "exhaust open" : "exhaust closed";

    const cls = snap.last_classification;
    if (cls) {
      const badge = cls.overridden ? " [override]" : "";
      const grip = cls.grip_ok === null ? "pending" : cls.grip_ok ? "grip ok" : "grip failed";
      this.classCard.textContent =
        `${cls.object}: true ${cls.true_grasp}, predicted ${cls.predicted}` +
        `${badge} (conf ${cls.confidence.toFixed(3)}, ${cls.total_ms.toFixed(1)} ms, ${grip})`;
      this.classCard.dataset.overridden = String(cls.overridden);
    }

    const counts = vm.histogram(20);
    const peak = Math.max(1, ...counts);
    this.latencyBars.replaceChildren(
      ...counts.map((c) => {
        const bar = el("div", "bar");
        bar.style.height = `${(c / peak) * 100}%`;
        return bar;
      }),
    );
    const mean = snap.latency.mean_ms;
    this.latencyLabel.textContent =
      mean === null ? "no triggers yet" : `mean ${mean.toFixed(2)} ms over ${snap.latency.n}`;
    this.powerLabel.textContent =
      `power ${snap.mean_power_w.toFixed(2)} W | sim ${(snap.sim_time_ms / 1000).toFixed(1)} s` +
      (snap.paused ? " | PAUSED" : "");

    this.faultList.replaceChildren(
      ...snap.active_faults.map((f) => el("li", undefined, f)),
      ...(snap.burst ? [el("li", "burst", `BURST: ${snap.burst}`)] : []),
      ...(snap.fault_code ? [el("li", "fault-code", snap.fault_code)] : []),
    );
  }
}
