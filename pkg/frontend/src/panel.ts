/**
 * DOM control panel. Sliders and fields emit through a single callback;
 * the echo column always shows what the server last rendered, never the
 * local optimistic value.
 */

import { ParamsEcho } from "./protocol.js";
import { ControlId, SURFACE_SLIDERS, SliderSpec, surfaceUiValue, validateMask } from "./state.js";

export interface PanelHooks {
  onControl(control: ControlId, value: unknown, continuous: boolean): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, cls?: string, text?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

const sliderToValue = (spec: SliderSpec, pos: number): number => {
  if (!spec.log) return pos;
  return Math.exp(pos);
};

const valueToSlider = (spec: SliderSpec, value: number): number => {
  if (!spec.log) return value;
  return Math.log(Math.max(value, spec.min));
};

export class ControlPanel {
  root: HTMLElement;
  private sliderInputs = new Map<string, HTMLInputElement>();
  private sliderReadouts = new Map<string, HTMLElement>();
  private maskInputs = new Map<string, HTMLInputElement>();
  private maskSource!: HTMLSelectElement;
  private maskError!: HTMLElement;
  private apertureOpen!: HTMLInputElement;
  private aperturePinhole!: HTMLInputElement;
  private gridBox!: HTMLInputElement;
  private pinholeLabel!: HTMLElement;
  private echoPane!: HTMLElement;
  private statusBanner!: HTMLElement;
  private latencyLabel!: HTMLElement;

  constructor(private hooks: PanelHooks) {
    this.root = el("div", "panel");
    this.root.appendChild(this.buildStatus());
    this.root.appendChild(this.buildSurfaceSection());
    this.root.appendChild(this.buildMaskSection());
    this.root.appendChild(this.buildApertureSection());
    this.root.appendChild(this.buildEchoSection());
  }

  private buildStatus(): HTMLElement {
    const box = el("div", "section status");
    this.statusBanner = el("div", "banner disconnected", "connecting…");
    this.latencyLabel = el("div", "latency", "");
    box.append(this.statusBanner, this.latencyLabel);
    return box;
  }

  private buildSurfaceSection(): HTMLElement {
    const box = el("div", "section");
    box.appendChild(el("h2", undefined, "Focal surface"));
    for (const spec of SURFACE_SLIDERS) {
      const row = el("div", "row");
      row.appendChild(el("label", undefined,
        `${spec.label} (${spec.unit}${spec.log ? ", log" : ""})`));
      const input = el("input");
      input.type = "range";
      if (spec.log) {
        input.min = String(Math.log(spec.min));
        input.max = String(Math.log(spec.max));
        input.step = "0.01";
      } else {
        input.min = String(spec.min);
        input.max = String(spec.max);
        input.step = String(spec.step);
      }
      const readout = el("span", "value");
      input.addEventListener("input", () => {
        const value = sliderToValue(spec, Number(input.value));
        readout.textContent = value.toPrecision(4);
        this.hooks.onControl(`surface.${spec.key}`, value, true);
      });
      this.sliderInputs.set(spec.key, input);
      this.sliderReadouts.set(spec.key, readout);
      row.append(input, readout);
      box.appendChild(row);
    }
    const gridRow = el("div", "row");
    gridRow.appendChild(el("label", undefined, "surface grid"));
    this.gridBox = el("input");
    this.gridBox.type = "checkbox";
    this.gridBox.addEventListener("change", () => {
      this.hooks.onControl("grid", this.gridBox.checked, false);
    });
    gridRow.appendChild(this.gridBox);
    box.appendChild(gridRow);
    return box;
  }

  private buildMaskSection(): HTMLElement {
    const box = el("div", "section");
    box.appendChild(el("h2", undefined, "Occlusion mask"));
    const srcRow = el("div", "row");
    srcRow.appendChild(el("label", undefined, "source"));
    this.maskSource = el("select");
    for (const opt of ["none", "vdvi"]) {
      const o = el("option", undefined, opt);
      o.value = opt;
      this.maskSource.appendChild(o);
    }
    this.maskSource.addEventListener("change", () => this.emitMask());
    srcRow.appendChild(this.maskSource);
    box.appendChild(srcRow);
    for (const key of ["t", "lb", "ub"]) {
      const row = el("div", "row");
      row.appendChild(el("label", undefined, key.toUpperCase()));
      const input = el("input");
      input.type = "number";
      input.step = "0.005";
      input.min = "-1";
      input.max = "1";
      input.value = key === "t" ? "0.05" : key === "lb" ? "0" : "0.1";
      input.addEventListener("change", () => this.emitMask());
      this.maskInputs.set(key, input);
      row.appendChild(input);
      box.appendChild(row);
    }
    this.maskError = el("div", "error", "");
    box.appendChild(this.maskError);
    return box;
  }

  private emitMask(): void {
    const mask = {
      source: this.maskSource.value,
      t: Number(this.maskInputs.get("t")!.value),
      lb: Number(this.maskInputs.get("lb")!.value),
      ub: Number(this.maskInputs.get("ub")!.value),
    };
    const problem = validateMask(mask);
    this.maskError.textContent = problem ?? "";
    if (!problem) {
      this.hooks.onControl("mask", mask, false);
    }
  }

  private buildApertureSection(): HTMLElement {
    const box = el("div", "section");
    box.appendChild(el("h2", undefined, "Virtual camera"));
    const row = el("div", "row");
    this.apertureOpen = el("input");
    this.apertureOpen.type = "radio";
    this.apertureOpen.name = "aperture";
    this.apertureOpen.checked = true;
    this.aperturePinhole = el("input");
    this.aperturePinhole.type = "radio";
    this.aperturePinhole.name = "aperture";
    for (const [input, label] of [
      [this.apertureOpen, "open"],
      [this.aperturePinhole, "pinhole"],
    ] as const) {
      const wrap = el("label", "radio", label);
      wrap.prepend(input);
      input.addEventListener("change", () => {
        if (input.checked) this.hooks.onControl("aperture", label, false);
      });
      row.appendChild(wrap);
    }
    box.appendChild(row);
    const jumps = el("div", "row");
    const minus = el("button", undefined, "Jump −");
    const plus = el("button", undefined, "Jump +");
    minus.addEventListener("click", () => this.hooks.onControl("jump-", null, false));
    plus.addEventListener("click", () => this.hooks.onControl("jump+", null, false));
    this.pinholeLabel = el("span", "value", "#0");
    jumps.append(minus, plus, this.pinholeLabel);
    box.appendChild(jumps);
    return box;
  }

  private buildEchoSection(): HTMLElement {
    const box = el("div", "section");
    box.appendChild(el("h2", undefined, "Rendered parameters"));
    this.echoPane = el("pre", "echo", "(no frame yet)");
    box.appendChild(this.echoPane);
    return box;
  }

  setConnected(connected: boolean): void {
    this.statusBanner.textContent = connected ? "connected" : "disconnected";
    this.statusBanner.className = `banner ${connected ? "connected" : "disconnected"}`;
    this.root.querySelectorAll("input, button, select").forEach((node) => {
      (node as HTMLInputElement).disabled = !connected;
    });
  }

  setLatency(ms: number | null): void {
    this.latencyLabel.textContent = ms === null ? "" : `latency ${ms.toFixed(0)} ms`;
  }

  /** Refresh the echo pane and pinhole indicator from a delivered frame. */
  showEcho(echo: ParamsEcho): void {
    const s = echo.surface;
    const lines = [
      `frame   ${echo.frame_id}`,
      `z       ${s.z.toFixed(3)} m`,
      `tx, ty  ${s.tx.toFixed(3)}, ${s.ty.toFixed(3)} m`,
      `rx,ry,rz ${surfaceUiValue("rx", s.rx).toFixed(1)}, `
        + `${surfaceUiValue("ry", s.ry).toFixed(1)}, `
        + `${surfaceUiValue("rz", s.rz).toFixed(1)} deg`,
      `sx,sy,sz ${s.sx.toPrecision(3)}, ${s.sy.toPrecision(3)}, ${s.sz.toPrecision(3)} m`,
      `mask    ${echo.mask.source} t=${echo.mask.t} lb=${echo.mask.lb} ub=${echo.mask.ub}`,
      `aperture ${echo.aperture} #${echo.pinhole_index}`,
      `grid    ${echo.grid}`,
    ];
    this.echoPane.textContent = lines.join("\n");
    this.pinholeLabel.textContent = `#${echo.pinhole_index}`;
  }

  /** Align control positions with the server state (initial frame). */
  syncControls(echo: ParamsEcho): void {
    for (const spec of SURFACE_SLIDERS) {
      const input = this.sliderInputs.get(spec.key)!;
      const ui = surfaceUiValue(spec.key, echo.surface[spec.key]);
      input.value = String(valueToSlider(spec, ui));
      this.sliderReadouts.get(spec.key)!.textContent = ui.toPrecision(4);
    }
    this.gridBox.checked = echo.grid;
    (echo.aperture === "open" ? this.apertureOpen : this.aperturePinhole).checked = true;
  }
}
