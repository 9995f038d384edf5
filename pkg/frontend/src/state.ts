/**
 * Control panel model: slider specs, unit conversion, validation, and the
 * control -> protocol-message mapping. Angles are degrees in the UI and
 * radians on the wire; SX/SY use log-scale sliders because flattening the
 * dome toward a plane takes values around 1e4.
 */

import { ControlMessage, MaskParams, SurfaceParams } from "./protocol.js";

export type SurfaceKey = keyof SurfaceParams;

export interface SliderSpec {
  key: SurfaceKey;
  label: string;
  min: number;
  max: number;
  step: number;
  unit: "m" | "deg";
  log?: boolean;
}

export const ANGLE_KEYS: SurfaceKey[] = ["rx", "ry", "rz"];

export const SURFACE_SLIDERS: SliderSpec[] = [
  { key: "z", label: "Z", min: 0.05, max: 20, step: 0.01, unit: "m" },
  { key: "tx", label: "TX", min: -2, max: 2, step: 0.01, unit: "m" },
  { key: "ty", label: "TY", min: -2, max: 2, step: 0.01, unit: "m" },
  { key: "rx", label: "RX", min: -180, max: 180, step: 0.5, unit: "deg" },
  { key: "ry", label: "RY", min: -180, max: 180, step: 0.5, unit: "deg" },
  { key: "rz", label: "RZ", min: -180, max: 180, step: 0.5, unit: "deg" },
  { key: "sx", label: "SX", min: 0.01, max: 1e4, step: 0.001, unit: "m", log: true },
  { key: "sy", label: "SY", min: 0.01, max: 1e4, step: 0.001, unit: "m", log: true },
  { key: "sz", label: "SZ", min: 0.001, max: 10, step: 0.001, unit: "m" },
];

export const degToRad = (d: number): number => (d * Math.PI) / 180;
export const radToDeg = (r: number): number => (r * 180) / Math.PI;

/** UI value -> wire value for one surface parameter. */
export function surfaceWireValue(key: SurfaceKey, uiValue: number): number {
  return ANGLE_KEYS.includes(key) ? degToRad(uiValue) : uiValue;
}

/** Wire value -> UI value (frame echoes carry radians). */
export function surfaceUiValue(key: SurfaceKey, wireValue: number): number {
  return ANGLE_KEYS.includes(key) ? radToDeg(wireValue) : wireValue;
}

export function validateSurfaceValue(key: SurfaceKey, wireValue: number): string | null {
  if (!Number.isFinite(wireValue)) return `${key} must be a finite number`;
  if ((key === "sx" || key === "sy" || key === "sz") && wireValue <= 0) {
    return `${key} must be positive`;
  }
  return null;
}

/** null when consistent, else a human-readable reason. Invalid configs
 * must never reach the wire. */
export function validateMask(mask: MaskParams): string | null {
  if (!(mask.lb <= mask.t && mask.t <= mask.ub)) {
    return `thresholds need lb <= t <= ub (got lb=${mask.lb}, t=${mask.t}, ub=${mask.ub})`;
  }
  return null;
}

export type ControlId =
  | `surface.${SurfaceKey}`
  | "mask"
  | "aperture"
  | "jump+"
  | "jump-"
  | "grid"
  | "camera"
  | "refresh";

/**
 * Each panel control maps to exactly one protocol message kind; returns
 * null when validation blocks the change (nothing is sent).
 */
export function controlMessage(control: ControlId, value: unknown): ControlMessage | null {
  if (control.startsWith("surface.")) {
    const key = control.slice("surface.".length) as SurfaceKey;
    const wire = surfaceWireValue(key, value as number);
    if (validateSurfaceValue(key, wire)) return null;
    return { kind: "set_surface", [key]: wire } as ControlMessage;
  }
  switch (control) {
    case "mask": {
      const mask = value as MaskParams;
      if (validateMask(mask)) return null;
      return { kind: "set_mask", ...mask };
    }
    case "aperture":
      return { kind: "set_aperture", aperture: value as "open" | "pinhole" };
    case "jump+":
      return { kind: "jump", delta: 1 };
    case "jump-":
      return { kind: "jump", delta: -1 };
    case "grid":
      return { kind: "set_grid", grid: value as boolean };
    case "camera":
      return { kind: "set_camera", ...(value as object) };
    case "refresh":
      return { kind: "request_frame" };
  }
  return null;
}

/** Display-side prediction of cyclic pinhole browsing (server is authoritative). */
export function nextPinholeIndex(current: number, delta: 1 | -1, count: number): number {
  return ((current + delta) % count + count) % count;
}
