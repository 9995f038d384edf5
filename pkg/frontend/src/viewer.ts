/**
 * Canvas painting plus mouse navigation: wheel dollies the virtual camera
 * along its view axis, dragging orbits it about the current focus point,
 * and a plain click re-aims the focal surface at the picked ray. The
 * camera pose is seeded from the first frame echo, after which the panel
 * tracks it locally between frames.
 */

import { DecodedFrame, ParamsEcho } from "./protocol.js";

type Mat4 = number[]; // 16 numbers, row-major camera-to-world

const IDENTITY: Mat4 = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1];

export interface NavEvents {
  onCameraPose(pose: Mat4): void;
  onFocusPick(tx: number, ty: number): void;
}

function matMul(a: Mat4, b: Mat4): Mat4 {
  const out = new Array(16).fill(0);
  for (let r = 0; r < 4; r++) {
    for (let c = 0; c < 4; c++) {
      let s = 0;
      for (let k = 0; k < 4; k++) s += a[r * 4 + k] * b[k * 4 + c];
      out[r * 4 + c] = s;
    }
  }
  return out;
}

function rotY(angle: number): Mat4 {
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  return [c, 0, s, 0, 0, 1, 0, 0, -s, 0, c, 0, 0, 0, 0, 1];
}

function rotX(angle: number): Mat4 {
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  return [1, 0, 0, 0, 0, c, -s, 0, 0, s, c, 0, 0, 0, 0, 1];
}

function translate(x: number, y: number, z: number): Mat4 {
  return [1, 0, 0, x, 0, 1, 0, y, 0, 0, 1, z, 0, 0, 0, 1];
}

export class Viewer {
  private ctx: CanvasRenderingContext2D;
  private pose: Mat4 = [...IDENTITY];
  private havePose = false;
  private echo: ParamsEcho | null = null;
  private dragging = false;
  private moved = false;
  private lastX = 0;
  private lastY = 0;

  constructor(private canvas: HTMLCanvasElement, private nav: NavEvents) {
    this.ctx = canvas.getContext("2d")!;
    canvas.addEventListener("wheel", (e) => this.onWheel(e), { passive: false });
    canvas.addEventListener("mousedown", (e) => {
      this.dragging = true;
      this.moved = false;
      this.lastX = e.clientX;
      this.lastY = e.clientY;
    });
    window.addEventListener("mouseup", (e) => {
      if (this.dragging && !this.moved) this.onClickFocus(e);
      this.dragging = false;
    });
    window.addEventListener("mousemove", (e) => this.onDrag(e));
  }

  async paint(frame: DecodedFrame): Promise<void> {
    this.echo = frame.echo;
    if (!this.havePose && frame.echo.vcam_pose?.length === 16) {
      this.pose = [...frame.echo.vcam_pose];
      this.havePose = true;
    }
    const blob = new Blob([frame.png.slice()], { type: "image/png" });
    const bitmap = await createImageBitmap(blob);
    if (this.canvas.width !== frame.width || this.canvas.height !== frame.height) {
      this.canvas.width = frame.width;
      this.canvas.height = frame.height;
    }
    this.ctx.drawImage(bitmap, 0, 0);
    bitmap.close();
  }

  private focusDistance(): number {
    const s = this.echo?.surface;
    return s ? s.z + s.sz : 5.0;
  }

  private onWheel(e: WheelEvent): void {
    e.preventDefault();
    if (!this.echo) return;
    // dolly along the view axis; 1 notch = 2% of the focus distance
    const step = -Math.sign(e.deltaY) * 0.02 * this.focusDistance();
    this.pose = matMul(this.pose, translate(0, 0, step));
    this.nav.onCameraPose([...this.pose]);
  }

  private onDrag(e: MouseEvent): void {
    if (!this.dragging || !this.echo) return;
    const dx = e.clientX - this.lastX;
    const dy = e.clientY - this.lastY;
    if (Math.abs(dx) + Math.abs(dy) < 2) return;
    this.moved = true;
    this.lastX = e.clientX;
    this.lastY = e.clientY;
    // orbit about the focus point on the view axis
    const d = this.focusDistance();
    const yaw = -dx * 0.004;
    const pitch = -dy * 0.004;
    const orbit = matMul(
      matMul(translate(0, 0, d), matMul(rotY(yaw), rotX(pitch))),
      translate(0, 0, -d));
    this.pose = matMul(this.pose, orbit);
    this.nav.onCameraPose([...this.pose]);
  }

  private onClickFocus(e: MouseEvent): void {
    if (!this.echo?.vcam) return;
    const rect = this.canvas.getBoundingClientRect();
    const u = ((e.clientX - rect.left) / rect.width) * this.canvas.width;
    const v = ((e.clientY - rect.top) / rect.height) * this.canvas.height;
    const k = this.echo.vcam;
    const depth = this.focusDistance();
    // translate the surface so its apex meets the picked ray at the
    // current focus distance (panel-frame approximation)
    const tx = ((u - k.cx) / k.fx) * depth;
    const ty = ((v - k.cy) / k.fy) * depth;
    this.nav.onFocusPick(tx, ty);
  }
}
