/**
 * Stream client: sends control messages (slider drags rate-limited,
 * latest-wins per control), receives frames, drops the stale ones, and
 * attributes message->frame latency when a frame's echo identifiably
 * reflects a sent value.
 */

import { ControlMessage, DecodedFrame, decodeFrame } from "./protocol.js";

export const MAX_SEND_RATE_HZ = 30;

/** The socket surface the client needs; ws adapters and fakes provide it. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
}

interface PendingSend {
  at: number;
  message: ControlMessage;
}

export interface FrameEvent {
  frame: DecodedFrame;
  latencyMs: number | null;
}

/** True when the echo provably reflects this message's parameters. */
export function echoReflects(message: ControlMessage, frame: DecodedFrame): boolean {
  const echo = frame.echo;
  switch (message.kind) {
    case "set_surface": {
      const entries = Object.entries(message).filter(([k]) => k !== "kind" && k !== "grid");
      return entries.every(([k, v]) =>
        Math.abs((echo.surface as unknown as Record<string, number>)[k] - (v as number)) < 1e-9);
    }
    case "set_mask":
      return ["t", "lb", "ub"].every((k) => {
        const sent = (message as unknown as Record<string, number | undefined>)[k];
        return sent === undefined
          || Math.abs((echo.mask as unknown as Record<string, number>)[k] - sent) < 1e-9;
      }) && (!("source" in message) || echo.mask.source === message.source);
    case "set_aperture":
      return echo.aperture === message.aperture;
    case "set_grid":
      return echo.grid === message.grid;
    default:
      return false;
  }
}

export class StreamClient {
  private socket: SocketLike | null = null;
  private lastFrameId = 0;
  private pending: PendingSend[] = [];
  // rate limiting: per-control latest value, flushed on a timer
  private queued = new Map<string, ControlMessage>();
  private lastFlush = Number.NEGATIVE_INFINITY;
  private flushTimer: ReturnType<typeof setTimeout> | null = null;

  onFrame: ((ev: FrameEvent) => void) | null = null;
  onDrop: ((frameId: number) => void) | null = null;
  droppedFrames = 0;

  constructor(private now: () => number = () => Date.now()) {}

  attach(socket: SocketLike): void {
    this.socket = socket;
  }

  detach(): void {
    this.socket = null;
    if (this.flushTimer !== null) {
      clearTimeout(this.flushTimer);
      this.flushTimer = null;
    }
    this.queued.clear();
    this.pending = [];
  }

  /** Send immediately (buttons, toggles). */
  send(message: ControlMessage): void {
    if (!this.socket) return;
    this.pending.push({ at: this.now(), message });
    if (this.pending.length > 64) this.pending.shift();
    this.socket.send(JSON.stringify(message));
  }

  /**
   * Rate-limited send for continuous controls: at most MAX_SEND_RATE_HZ
   * messages per second, intermediate drag values collapsing to the
   * latest per control. Leading edge fires immediately so a drag feels
   * instant; the trailing timer delivers the final position.
   */
  sendThrottled(controlKey: string, message: ControlMessage): void {
    this.queued.set(controlKey, message);
    const interval = 1000 / MAX_SEND_RATE_HZ;
    const elapsed = this.now() - this.lastFlush;
    if (this.flushTimer !== null) return;
    if (elapsed >= interval) {
      this.flush();
    } else {
      this.flushTimer = setTimeout(() => this.flush(), interval - elapsed);
    }
  }

  private flush(): void {
    this.flushTimer = null;
    this.lastFlush = this.now();
    for (const message of this.queued.values()) {
      this.send(message);
    }
    this.queued.clear();
  }

  /** Feed raw frame bytes; stale frames (ids out of order) are dropped. */
  handleFrameData(buf: ArrayBuffer): void {
    let frame: DecodedFrame;
    try {
      frame = decodeFrame(buf);
    } catch (err) {
      console.warn("dropping malformed frame:", err);
      return;
    }
    if (frame.frameId <= this.lastFrameId) {
      this.droppedFrames += 1;
      this.onDrop?.(frame.frameId);
      return;
    }
    this.lastFrameId = frame.frameId;
    const latency = this.matchLatency(frame);
    this.onFrame?.({ frame, latencyMs: latency });
  }

  private matchLatency(frame: DecodedFrame): number | null {
    for (let i = this.pending.length - 1; i >= 0; i--) {
      if (echoReflects(this.pending[i].message, frame)) {
        const latency = this.now() - this.pending[i].at;
        this.pending.splice(0, i + 1);
        return latency;
      }
    }
    return null;
  }
}
