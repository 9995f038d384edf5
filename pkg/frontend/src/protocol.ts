/**
 * Wire protocol shared with the render service.
 *
 * Control messages are UTF-8 JSON objects with a "kind" field; frames are
 * binary:
 *
 *   magic 0x53414946 | frame_id | width | height | payload_len  (u32 LE each)
 *   | payload (PNG) | echo_len (u32 LE) | echo (UTF-8 JSON)
 */

export const FRAME_MAGIC = 0x53414946;

export interface SurfaceParams {
  z: number;
  tx: number;
  ty: number;
  rx: number;
  ry: number;
  rz: number;
  sx: number;
  sy: number;
  sz: number;
}

export interface MaskParams {
  source: string;
  t: number;
  lb: number;
  ub: number;
}

export interface ParamsEcho {
  frame_id: number;
  surface: SurfaceParams;
  mask: MaskParams;
  aperture: "open" | "pinhole";
  pinhole_index: number;
  grid: boolean;
  vcam?: { fx: number; fy: number; cx: number; cy: number; width: number; height: number };
  vcam_pose?: number[];
}

export interface DecodedFrame {
  frameId: number;
  width: number;
  height: number;
  png: Uint8Array;
  echo: ParamsEcho;
}

export type ControlMessage =
  | ({ kind: "set_surface" } & Partial<SurfaceParams> & { grid?: boolean })
  | ({ kind: "set_mask" } & Partial<MaskParams>)
  | { kind: "set_aperture"; aperture: "open" | "pinhole" }
  | { kind: "jump"; delta: 1 | -1 }
  | { kind: "set_camera"; pose?: number[]; intrinsics?: Record<string, number> }
  | { kind: "set_grid"; grid: boolean }
  | { kind: "request_frame" };

export class FrameFormatError extends Error {}

export function decodeFrame(buf: ArrayBuffer): DecodedFrame {
  const view = new DataView(buf);
  if (buf.byteLength < 24) {
    throw new FrameFormatError(`frame too short (${buf.byteLength} bytes)`);
  }
  const magic = view.getUint32(0, true);
  if (magic !== FRAME_MAGIC) {
    throw new FrameFormatError(`bad magic 0x${magic.toString(16)}`);
  }
  const frameId = view.getUint32(4, true);
  const width = view.getUint32(8, true);
  const height = view.getUint32(12, true);
  const payloadLen = view.getUint32(16, true);
  let off = 20;
  if (off + payloadLen + 4 > buf.byteLength) {
    throw new FrameFormatError("payload length exceeds frame size");
  }
  const png = new Uint8Array(buf, off, payloadLen);
  off += payloadLen;
  const echoLen = view.getUint32(off, true);
  off += 4;
  if (off + echoLen > buf.byteLength) {
    throw new FrameFormatError("echo length exceeds frame size");
  }
  const echoText = new TextDecoder().decode(new Uint8Array(buf, off, echoLen));
  return { frameId, width, height, png, echo: JSON.parse(echoText) as ParamsEcho };
}

/** Test helper / protocol documentation: the inverse of decodeFrame. */
export function encodeFrame(
  frameId: number,
  width: number,
  height: number,
  png: Uint8Array,
  echo: ParamsEcho,
): ArrayBuffer {
  const echoBytes = new TextEncoder().encode(JSON.stringify(echo));
  const buf = new ArrayBuffer(20 + png.byteLength + 4 + echoBytes.byteLength);
  const view = new DataView(buf);
  view.setUint32(0, FRAME_MAGIC, true);
  view.setUint32(4, frameId, true);
  view.setUint32(8, width, true);
  view.setUint32(12, height, true);
  view.setUint32(16, png.byteLength, true);
  new Uint8Array(buf, 20, png.byteLength).set(png);
  view.setUint32(20 + png.byteLength, echoBytes.byteLength, true);
  new Uint8Array(buf, 24 + png.byteLength).set(echoBytes);
  return buf;
}
