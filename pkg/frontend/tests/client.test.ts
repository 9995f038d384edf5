import { describe, expect, it } from "vitest";

import { MAX_SEND_RATE_HZ, SocketLike, StreamClient } from "../src/client.js";
import { ParamsEcho, encodeFrame } from "../src/protocol.js";

function echo(frameId: number, z = 4.0): ParamsEcho {
  return {
    frame_id: frameId,
    surface: { z, tx: 0, ty: 0, rx: 0, ry: 0, rz: 0, sx: 1e4, sy: 1e4, sz: 1 },
    mask: { source: "none", t: 0.05, lb: 0, ub: 0.1 },
    aperture: "open",
    pinhole_index: 0,
    grid: false,
  };
}

function frameBytes(frameId: number, z = 4.0): ArrayBuffer {
  return encodeFrame(frameId, 8, 6, new Uint8Array(16), echo(frameId, z));
}

class FakeSocket implements SocketLike {
  sent: string[] = [];
  send(data: string): void {
    this.sent.push(data);
  }
  close(): void {}
}

describe("stale frame handling", () => {
  it("drops frames whose id is not strictly increasing", () => {
    const client = new StreamClient();
    const seen: number[] = [];
    client.onFrame = ({ frame }) => seen.push(frame.frameId);
    for (const id of [1, 2, 5, 3, 5, 6]) {
      client.handleFrameData(frameBytes(id));
    }
    expect(seen).toEqual([1, 2, 5, 6]);
    expect(client.droppedFrames).toBe(2);
  });

  it("ignores malformed frames but keeps the connection state", () => {
    const client = new StreamClient();
    const seen: number[] = [];
    client.onFrame = ({ frame }) => seen.push(frame.frameId);
    client.handleFrameData(new ArrayBuffer(5));
    client.handleFrameData(frameBytes(1));
    expect(seen).toEqual([1]);
  });
});

describe("throttled sends", () => {
  it("collapses a drag burst to the latest value at <= 30 msg/s", async () => {
    const client = new StreamClient();
    const sock = new FakeSocket();
    client.attach(sock);
    const t0 = Date.now();
    for (let i = 0; i < 50; i++) {
      client.sendThrottled("surface.z", { kind: "set_surface", z: 2 + i / 100 });
    }
    await new Promise((r) => setTimeout(r, 120));
    const windowMs = Date.now() - t0;
    // leading edge + trailing timer, but never above the rate cap
    expect(sock.sent.length).toBeGreaterThanOrEqual(1);
    expect(sock.sent.length).toBeLessThanOrEqual(
      Math.ceil((windowMs / 1000) * MAX_SEND_RATE_HZ) + 1);
    expect(JSON.parse(sock.sent[sock.sent.length - 1]).z).toBeCloseTo(2.49);
  });

  it("keeps distinct controls separate", async () => {
    const client = new StreamClient();
    const sock = new FakeSocket();
    client.attach(sock);
    client.sendThrottled("surface.z", { kind: "set_surface", z: 3 });
    client.sendThrottled("surface.tx", { kind: "set_surface", tx: 0.5 });
    await new Promise((r) => setTimeout(r, 120));
    expect(sock.sent.length).toBe(2);
    const kinds = sock.sent.map((s) => Object.keys(JSON.parse(s)).sort().join(","));
    expect(kinds).toContain("kind,z");
    expect(kinds).toContain("kind,tx");
  });
});

describe("latency attribution", () => {
  it("matches a frame to the send that its echo reflects", () => {
    let t = 1000;
    const client = new StreamClient(() => t);
    const sock = new FakeSocket();
    client.attach(sock);
    let latency: number | null = null;
    client.onFrame = (ev) => (latency = ev.latencyMs);

    client.send({ kind: "set_surface", z: 2.5 });
    t = 1120;
    client.handleFrameData(frameBytes(1, 2.5));
    expect(latency).toBe(120);
  });

  it("reports null when no pending send explains the frame", () => {
    const client = new StreamClient(() => 0);
    let latency: number | null = 0;
    client.onFrame = (ev) => (latency = ev.latencyMs);
    client.handleFrameData(frameBytes(1, 9.9));
    expect(latency).toBeNull();
  });
});
