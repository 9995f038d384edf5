import { describe, expect, it } from "vitest";

import {
  ControlId,
  SURFACE_SLIDERS,
  controlMessage,
  degToRad,
  nextPinholeIndex,
  radToDeg,
  surfaceUiValue,
  surfaceWireValue,
  validateMask,
} from "../src/state.js";

describe("control -> message mapping", () => {
  it("maps every control to exactly one message kind", () => {
    const cases: Array<[ControlId, unknown, string]> = [
      ["surface.z", 2.5, "set_surface"],
      ["surface.rz", 90, "set_surface"],
      ["mask", { source: "vdvi", t: 0.05, lb: 0, ub: 0.1 }, "set_mask"],
      ["aperture", "pinhole", "set_aperture"],
      ["jump+", null, "jump"],
      ["jump-", null, "jump"],
      ["grid", true, "set_grid"],
      ["camera", { pose: new Array(16).fill(0) }, "set_camera"],
      ["refresh", null, "request_frame"],
    ];
    for (const [control, value, kind] of cases) {
      const msg = controlMessage(control, value);
      expect(msg, control).not.toBeNull();
      expect(msg!.kind, control).toBe(kind);
    }
  });

  it("drag on the z slider produces a set_surface with only z", () => {
    const msg = controlMessage("surface.z", 2.5)!;
    expect(msg).toEqual({ kind: "set_surface", z: 2.5 });
  });

  it("jump buttons carry +1 / -1", () => {
    expect(controlMessage("jump+", null)).toEqual({ kind: "jump", delta: 1 });
    expect(controlMessage("jump-", null)).toEqual({ kind: "jump", delta: -1 });
  });

  it("blocks lb > ub locally (no message)", () => {
    const msg = controlMessage("mask", { source: "vdvi", t: 0.15, lb: 0.2, ub: 0.1 });
    expect(msg).toBeNull();
  });

  it("blocks non-positive scales locally", () => {
    expect(controlMessage("surface.sx", 0)).toBeNull();
    expect(controlMessage("surface.sx", -3)).toBeNull();
  });
});

describe("units", () => {
  it("degrees in the UI become radians on the wire", () => {
    const msg = controlMessage("surface.rz", 90)!;
    expect((msg as Record<string, unknown>)["rz"]).toBeCloseTo(Math.PI / 2, 12);
  });

  it("display round trip is exact enough", () => {
    for (const deg of [-180, -33.5, 0, 45, 179.5]) {
      expect(radToDeg(degToRad(deg))).toBeCloseTo(deg, 10);
      expect(surfaceUiValue("rx", surfaceWireValue("rx", deg))).toBeCloseTo(deg, 10);
    }
  });

  it("non-angle keys pass through unchanged", () => {
    expect(surfaceWireValue("z", 3.25)).toBe(3.25);
  });
});

describe("mask validation", () => {
  it("accepts lb <= t <= ub", () => {
    expect(validateMask({ source: "vdvi", t: 0.05, lb: 0, ub: 0.1 })).toBeNull();
  });
  it("rejects t outside the band", () => {
    expect(validateMask({ source: "vdvi", t: 0.5, lb: 0, ub: 0.1 })).toBeTruthy();
  });
});

describe("slider specs", () => {
  it("scale sliders never reach zero", () => {
    for (const spec of SURFACE_SLIDERS) {
      if (["sx", "sy", "sz"].includes(spec.key)) {
        expect(spec.min).toBeGreaterThan(0);
      }
    }
  });
  it("sx/sy are log-scaled up to 1e4", () => {
    const sx = SURFACE_SLIDERS.find((s) => s.key === "sx")!;
    expect(sx.log).toBe(true);
    expect(sx.max).toBe(1e4);
  });
});

describe("pinhole browsing", () => {
  it("cycles modulo N in both directions", () => {
    expect(nextPinholeIndex(26, 1, 27)).toBe(0);
    expect(nextPinholeIndex(0, -1, 27)).toBe(26);
    expect(nextPinholeIndex(5, 1, 27)).toBe(6);
  });
});
