import { StreamClient } from "./client.js";
import { ControlPanel } from "./panel.js";
import { ControlId, controlMessage } from "./state.js";
import { Viewer } from "./viewer.js";

const client = new StreamClient();
let synced = false;

const panel = new ControlPanel({
  onControl(control: ControlId, value: unknown, continuous: boolean) {
    const message = controlMessage(control, value);
    if (!message) return;
    if (continuous) {
      client.sendThrottled(control, message);
    } else {
      client.send(message);
    }
  },
});

const canvas = document.getElementById("view") as HTMLCanvasElement;
const viewer = new Viewer(canvas, {
  onCameraPose(pose) {
    const message = controlMessage("camera", { pose });
    if (message) client.sendThrottled("camera", message);
  },
  onFocusPick(tx, ty) {
    client.send({ kind: "set_surface", tx, ty });
  },
});

client.onFrame = ({ frame, latencyMs }) => {
  void viewer.paint(frame);
  panel.showEcho(frame.echo);
  panel.setLatency(latencyMs);
  if (!synced) {
    panel.syncControls(frame.echo);
    synced = true;
  }
};

document.getElementById("app")!.appendChild(panel.root);

function connect(): void {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  const ws = new WebSocket(`${scheme}://${location.host}/stream`);
  ws.binaryType = "arraybuffer";
  ws.onopen = () => {
    panel.setConnected(true);
    client.attach({ send: (d) => ws.send(d), close: () => ws.close() });
    client.send({ kind: "request_frame" });
  };
  ws.onmessage = (e: MessageEvent) => {
    if (typeof e.data === "string") {
      console.warn("service:", e.data);
      return;
    }
    client.handleFrameData(e.data as ArrayBuffer);
  };
  ws.onclose = () => {
    panel.setConnected(false);
    client.detach();
    setTimeout(connect, 1500);
  };
  ws.onerror = () => ws.close();
}

connect();
