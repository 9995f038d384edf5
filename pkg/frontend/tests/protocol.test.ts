import { describe, expect, it } from "vitest";

import { FRAME_MAGIC, FrameFormatError, ParamsEcho, decodeFrame, encodeFrame } from "../src/protocol.js";

const ECHO: ParamsEcho = {
  frame_id: 9,
  surface: { z: 2.5, tx: 0, ty: 0, rx: 0, ry: 0, rz: 0, sx: 1e4, sy: 1e4, sz: 1 },
  mask: { source: "none", t: 0.05, lb: 0, ub: 0.1 },
  aperture: "open",
  pinhole_index: 0,
  grid: false,
};

describe("frame codec", () => {
  it("round trips header, payload, and echo", () => {
    const png = new Uint8Array([137, 80, 78, 71, 1, 2, 3]);
    const buf = encodeFrame(9, 640, 480, png, ECHO);
    const frame = decodeFrame(buf);
    expect(frame.frameId).toBe(9);
    expect(frame.width).toBe(640);
    expect(frame.height).toBe(480);
    expect(Array.from(frame.png)).toEqual(Array.from(png));
    expect(frame.echo.surface.z).toBe(2.5);
    expect(frame.echo.mask.ub).toBe(0.1);
  });

  it("magic is 0x53414946 little-endian", () => {
    const buf = encodeFrame(1, 2, 2, new Uint8Array(0), ECHO);
    const view = new DataView(buf);
    expect(view.getUint32(0, true)).toBe(FRAME_MAGIC);
    expect(new Uint8Array(buf, 0, 4)).toEqual(new Uint8Array([0x46, 0x49, 0x41, 0x53]));
  });

  it("rejects bad magic", () => {
    const buf = encodeFrame(1, 2, 2, new Uint8Array(4), ECHO);
    new DataView(buf).setUint32(0, 0xdeadbeef, true);
    expect(() => decodeFrame(buf)).toThrow(FrameFormatError);
  });

  it("rejects truncated payloads", () => {
    const buf = encodeFrame(1, 2, 2, new Uint8Array(100), ECHO);
    expect(() => decodeFrame(buf.slice(0, 40))).toThrow(FrameFormatError);
  });
});
