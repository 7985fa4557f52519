// Studio entry point: wires the WebSocket client to the waterfalls, the RSSI
// trace, the classification bar overlay, and the control panels.

import { layoutClassificationBars } from "./bars.js";
import { StudioClient } from "./client.js";
import { cssColor } from "./colormap.js";
import type {
  ClassificationEnvelope,
  ConfigEnvelope,
  Envelope,
  FrameEnvelope,
  StatsEnvelope,
} from "./protocol.js";
import { createDualSlider, type DualSlider } from "./slider.js";
import { DEFAULT_WINDOW, WaterfallBuffer, renderWaterfall } from "./waterfall.js";

const PI = Math.PI;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, attrs: Record<string, string> = {}, text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function must<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

class Studio {
  client!: StudioClient;
  ampBuffer = new WaterfallBuffer(DEFAULT_WINDOW);
  phaseBuffer = new WaterfallBuffer(DEFAULT_WINDOW);
  rssiTrace: number[] = [];
  classifications: ClassificationEnvelope[] = [];
  frameTimes: number[] = [];
  lastGapCount = 0;
  ampRange = { lo: 0, hi: 1e-4 };
  phaseRange = { lo: -PI, hi: PI };
  ampSlider!: DualSlider;
  phaseSlider!: DualSlider;
  autoRanged = false;
  nClasses = 4;
  selectedMacs = new Set<string>();
  rendering = false;

  connect(): void {
    const url = `ws://${location.host}/ws`;
    const socket = new WebSocket(url);
    this.client = new StudioClient(socket as never, {
      onEnvelope: (env) => this.onEnvelope(env),
      onClose: () => this.setStatus("disconnected; reload to retry"),
    });
    socket.addEventListener("open", () => this.setStatus(`connected to ${url}`));
    this.requestFrame();
  }

  setStatus(text: string): void {
    must<HTMLElement>("status").textContent = text;
  }

  onEnvelope(env: Envelope): void {
    switch (env.kind) {
      case "frame":
        this.onFrame(env);
        break;
      case "config":
        this.onConfig(env);
        break;
      case "classification":
        this.classifications.push(env);
        if (this.classifications.length > 200) this.classifications.shift();
        break;
      case "stats":
        this.onStats(env);
        break;
      case "error":
        this.setStatus(`error: ${env.error} ${env.detail ?? ""}`);
        break;
      default:
        break;
    }
  }

  onFrame(frame: FrameEnvelope): void {
    // server-side drops appear as seq gaps; render them as thin blank columns
    const gaps = this.client.stream.gaps;
    if (gaps > this.lastGapCount) {
      this.ampBuffer.pushGap(Math.min(gaps - this.lastGapCount, 10));
      this.phaseBuffer.pushGap(Math.min(gaps - this.lastGapCount, 10));
      this.lastGapCount = gaps;
    }
    this.ampBuffer.push(frame.amplitudes);
    this.phaseBuffer.push(frame.phases);
    this.rssiTrace.push(frame.rssi_smoothed);
    if (this.rssiTrace.length > DEFAULT_WINDOW) this.rssiTrace.shift();
    this.frameTimes.push(frame.t_us);
    if (this.frameTimes.length > DEFAULT_WINDOW) this.frameTimes.shift();
    if (!this.autoRanged && this.client.framesSeen >= 5) {
      this.autoRange();
    }
    this.renderMacList();
  }

  autoRange(): void {
    const view = this.ampBuffer.view();
    const amps = view[view.length - 1];
    if (!amps) return;
    const hi = Math.max(...amps) * 1.2;
    if (hi > 0) {
      this.ampRange = { lo: 0, hi };
      this.ampSlider.set(0, hi);
      this.autoRanged = true;
    }
  }

  onConfig(config: ConfigEnvelope): void {
    must<HTMLElement>("config-version").textContent = `v${config.version}`;
    this.renderPluginPanel(config);
    const view = config.view;
    if (view && view.lo < view.hi && this.autoRanged) {
      this.ampRange = { ...view };
      this.ampSlider.set(view.lo, view.hi);
    }
  }

  onStats(stats: StatsEnvelope): void {
    must<HTMLElement>("stats").textContent =
      `in ${stats.frames_in} / out ${stats.frames_out}`
      + ` / filtered ${stats.frames_dropped}`
      + ` / source drops ${stats.source_dropped}`
      + ` / recording ${stats.recording ? "yes" : "no"}`
      + ` / classifier ${stats.bridge_alive ? "up" : "down"}`;
  }

  // --- rendering loop (decoupled from socket handling by the buffers) ---

  requestFrame(): void {
    if (!this.rendering) {
      this.rendering = true;
      requestAnimationFrame(() => {
        this.rendering = false;
        this.draw();
        this.requestFrame();
      });
    }
  }

  draw(): void {
    this.drawWaterfall("amp-canvas", this.ampBuffer, this.ampRange);
    this.drawWaterfall("phase-canvas", this.phaseBuffer, this.phaseRange);
    this.drawRssi();
    this.drawBars();
  }

  drawWaterfall(id: string, buffer: WaterfallBuffer,
                range: { lo: number; hi: number }): void {
    const canvas = must<HTMLCanvasElement>(id);
    const ctx = canvas.getContext("2d");
    if (!ctx || buffer.width === 0) return;
    const grid = renderWaterfall(buffer, range, canvas.height);
    const image = new ImageData(grid.data, grid.width, grid.height);
    // draw at native buffer resolution, let CSS scale it
    if (canvas.width !== grid.width) canvas.width = grid.width;
    ctx.putImageData(image, 0, 0);
  }

  drawRssi(): void {
    const canvas = must<HTMLCanvasElement>("rssi-canvas");
    const ctx = canvas.getContext("2d");
    if (!ctx || this.rssiTrace.length === 0) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.strokeStyle = "#7fd4ff";
    ctx.beginPath();
    const offset = canvas.width - this.rssiTrace.length;
    this.rssiTrace.forEach((value, i) => {
      const y = ((value + 120) / 120) * canvas.height;
      const x = offset + i;
      if (i === 0) ctx.moveTo(x, canvas.height - y);
      else ctx.lineTo(x, canvas.height - y);
    });
    ctx.stroke();
  }

  drawBars(): void {
    const canvas = must<HTMLCanvasElement>("bars-canvas");
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (this.frameTimes.length < 2) return;
    const bars = layoutClassificationBars(this.classifications, {
      timeStartUs: this.frameTimes[0],
      timeEndUs: this.frameTimes[this.frameTimes.length - 1],
      width: canvas.width,
      maxHeight: canvas.height,
      nClasses: this.nClasses,
    });
    for (const bar of bars) {
      ctx.fillStyle = cssColor(bar.color);
      ctx.fillRect(bar.x - 2, canvas.height - bar.height, 4, bar.height);
    }
  }

  // --- panels ---

  renderPluginPanel(config: ConfigEnvelope): void {
    const body = must<HTMLElement>("plugin-rows");
    body.replaceChildren();
    const plugins = [...config.chain].sort((a, b) =>
      a.priority - b.priority || a.id.localeCompare(b.id));
    for (const plugin of plugins) {
      const row = el("tr");
      const toggle = el("input", { type: "checkbox" }) as HTMLInputElement;
      toggle.checked = plugin.enabled;
      toggle.addEventListener("change", async () => {
        const ack = await this.client.setPlugin(plugin.id,
                                                { enabled: toggle.checked });
        this.setStatus(ack.kind === "ack"
          ? `${plugin.id} ${toggle.checked ? "enabled" : "disabled"}`
            + ` (v${ack.version})`
          : `error: ${(ack as { error: string }).error}`);
      });
      const toggleCell = el("td");
      toggleCell.append(toggle);

      const priority = el("input", {
        type: "number", value: String(plugin.priority), class: "priority",
      }) as HTMLInputElement;
      priority.addEventListener("change", () => {
        void this.client.setPlugin(plugin.id,
                                   { priority: Number(priority.value) });
      });
      const priorityCell = el("td");
      priorityCell.append(priority);

      const paramsCell = el("td");
      for (const [key, value] of Object.entries(plugin.params)) {
        const input = el("input", {
          type: "text", value: String(value), class: "param",
          title: key,
        }) as HTMLInputElement;
        input.addEventListener("change", () => {
          const raw = input.value;
          const parsed: unknown =
            typeof value === "number" ? Number(raw)
            : typeof value === "boolean" ? raw === "true"
            : raw;
          void this.client.setPlugin(plugin.id,
                                     { params: { [key]: parsed } });
        });
        paramsCell.append(el("label", {}, `${key}=`), input);
      }

      row.append(el("td", {}, plugin.id), toggleCell, priorityCell,
                 paramsCell);
      body.append(row);
    }
  }

  renderMacList(): void {
    const list = must<HTMLElement>("mac-list");
    const macs = [...this.client.macCounters.entries()]
      .sort((a, b) => b[1] - a[1]);
    if (list.childElementCount === macs.length) {
      // update counters in place
      macs.forEach(([mac, count], i) => {
        const counter = list.children[i].querySelector(".count");
        if (counter) counter.textContent = String(count);
      });
      return;
    }
    list.replaceChildren();
    for (const [mac, count] of macs) {
      const item = el("li");
      const check = el("input", { type: "checkbox" }) as HTMLInputElement;
      check.checked = this.selectedMacs.has(mac);
      check.addEventListener("change", () => {
        if (check.checked) this.selectedMacs.add(mac);
        else this.selectedMacs.delete(mac);
        void this.client.setMacFilter([...this.selectedMacs]);
      });
      item.append(check, el("code", {}, mac),
                  el("span", { class: "count" }, String(count)));
      list.append(item);
    }
  }

  wireControls(): void {
    this.ampSlider = createDualSlider("amplitude", 0, 2e-4, 1e-6,
                                      this.ampRange, (lo, hi) => {
      this.ampRange = { lo, hi };
      void this.client.setViewRange(lo, hi);
    });
    must<HTMLElement>("amp-sliders").append(this.ampSlider.root);

    this.phaseSlider = createDualSlider("phase", -PI, PI, 0.01,
                                        this.phaseRange, (lo, hi) => {
      this.phaseRange = { lo, hi };
    });
    must<HTMLElement>("phase-sliders").append(this.phaseSlider.root);

    must<HTMLButtonElement>("record-start").addEventListener("click",
      async () => {
        const path = must<HTMLInputElement>("record-path").value;
        const format = must<HTMLSelectElement>("record-format").value;
        const label = must<HTMLInputElement>("record-label").value;
        const ack = await this.client.startRecord(path, format,
                                                  label || undefined);
        this.setStatus(ack.kind === "ack" ? `recording to ${path}`
          : `error: ${(ack as { error: string }).error}`);
      });
    must<HTMLButtonElement>("record-stop").addEventListener("click",
      async () => {
        const ack = await this.client.stopRecord();
        this.setStatus(ack.kind === "ack"
          ? `recorded ${(ack as Record<string, unknown>).frames_written} frames`
          : `error: ${(ack as { error: string }).error}`);
      });

    must<HTMLButtonElement>("classifier-start").addEventListener("click",
      async () => {
        const argv = must<HTMLInputElement>("classifier-argv").value
          .split(/\s+/).filter(Boolean);
        const ack = await this.client.spawnClassifier(argv);
        this.setStatus(ack.kind === "ack"
          ? `classifier pid ${(ack as Record<string, unknown>).pid}`
          : `error: ${(ack as { error: string }).error}`);
      });
    must<HTMLButtonElement>("classifier-stop").addEventListener("click",
      () => void this.client.killClassifier());

    must<HTMLButtonElement>("stats-refresh").addEventListener("click",
      () => void this.client.requestStats());
  }
}

const studio = new Studio();
if (typeof document !== "undefined" && document.readyState !== "loading") {
  studio.wireControls();
  studio.connect();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => {
    studio.wireControls();
    studio.connect();
  });
}
