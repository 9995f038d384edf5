"""Stateful frame server for interactive focusing.

One session, one render worker. Control messages arrive as UTF-8 JSON
over the ``/stream`` websocket; every state-changing message schedules a
render of the new state, with bursts coalescing latest-wins so at most
one render is in flight and one pending. Rendered frames go to every
connected client as binary messages:

    magic 0x53414946 (u32 LE) | frame_id (u32) | width (u32) | height (u32)
    | payload_len (u32) | payload (PNG, 8-bit)
    | echo_len (u32) | echo (UTF-8 JSON parameter echo)

Message kinds (all JSON objects with a "kind" field):
    set_surface  any subset of z/tx/ty/rx/ry/rz/sx/sy/sz (+ grid)
    set_mask     any subset of source/t/lb/ub
    set_aperture {"aperture": "open" | "pinhole"}
    jump         {"delta": +1 | -1}   (pinhole index, modulo N)
    set_camera   {"pose": [16 floats]} and/or {"intrinsics": {...}}
    set_grid     {"grid": bool}
    request_frame

Malformed messages are echoed back as {"kind": "error", ...} with a
diagnostic and leave the state unchanged.
"""

# note: postponed annotations would break FastAPI's resolution of the
# websocket endpoint signature defined inside create_app

import asyncio
import json
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np

from .engine import CaptureSession, IntegralImage, VirtualCamera, render_integral, render_pinhole
from .errors import EncodingFailure, MalformedMessage, NoSession
from .geometry import FocalSurfaceParams, Intrinsics, Pose, surface_to_world
from .masking import NO_SOURCE, MaskConfig, build_alpha_masks

FRAME_MAGIC = 0x53414946
MAX_PREVIEW_W = 1280
MAX_PREVIEW_H = 960
DEFAULT_PREVIEW = (640, 480)

APERTURE_OPEN = "open"
APERTURE_PINHOLE = "pinhole"

_SURFACE_KEYS = ("z", "tx", "ty", "rx", "ry", "rz", "sx", "sy", "sz")


@dataclass(frozen=True)
class ViewState:
    vcam: VirtualCamera
    surf: FocalSurfaceParams
    mask: MaskConfig
    aperture: str = APERTURE_OPEN
    pinhole_index: int = 0
    grid: bool = False
    frame_id: int = 0


@dataclass(frozen=True)
class FrameJob:
    """Snapshot of the state a frame should be rendered from."""

    state: ViewState


def _require_number(msg, key):
    v = msg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise MalformedMessage(f"field {key!r} must be a finite number")
    return float(v)


def _apply_surface(surf: FocalSurfaceParams, msg) -> FocalSurfaceParams:
    kw = {}
    for key in _SURFACE_KEYS:
        if key in msg:
            kw[key] = _require_number(msg, key)
    if "grid" in msg:
        if not isinstance(msg["grid"], bool):
            raise MalformedMessage("field 'grid' must be a boolean")
        kw["grid"] = msg["grid"]
    if not kw:
        raise MalformedMessage("set_surface carries no recognized parameter")
    for s in ("sx", "sy", "sz"):
        if s in kw and kw[s] <= 0:
            raise MalformedMessage(f"scale {s} must be positive")
    try:
        return replace(surf, **kw)
    except ValueError as e:
        raise MalformedMessage(str(e)) from e


def _apply_mask(mask: MaskConfig, msg) -> MaskConfig:
    source = msg.get("source", mask.source)
    if not isinstance(source, str):
        raise MalformedMessage("field 'source' must be a string")
    t = _require_number(msg, "t") if "t" in msg else mask.t
    lb = _require_number(msg, "lb") if "lb" in msg else mask.lb
    ub = _require_number(msg, "ub") if "ub" in msg else mask.ub
    if not (lb <= t <= ub):
        raise MalformedMessage(f"mask thresholds must satisfy lb <= t <= ub, got {lb}, {t}, {ub}")
    return MaskConfig(source=source, t=t, lb=lb, ub=ub)


def _apply_camera(vcam: VirtualCamera, msg) -> VirtualCamera:
    pose = vcam.pose
    k = vcam.intrinsics
    if "pose" in msg:
        vals = msg["pose"]
        if not isinstance(vals, list) or len(vals) != 16:
            raise MalformedMessage("field 'pose' must be a 16-element row-major matrix")
        m = np.asarray(vals, dtype=np.float64).reshape(4, 4)
        try:
            pose = Pose(m[:3, :3], m[:3, 3])
        except ValueError as e:
            raise MalformedMessage(f"invalid pose: {e}") from e
    if "intrinsics" in msg:
        d = msg["intrinsics"]
        if not isinstance(d, dict):
            raise MalformedMessage("field 'intrinsics' must be an object")
        try:
            k = Intrinsics(fx=float(d["fx"]), fy=float(d["fy"]),
                           cx=float(d["cx"]), cy=float(d["cy"]),
                           width=int(d["width"]), height=int(d["height"]))
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedMessage(f"invalid intrinsics: {e}") from e
        if k.width > MAX_PREVIEW_W or k.height > MAX_PREVIEW_H:
            raise MalformedMessage(
                f"preview resolution {k.width}x{k.height} exceeds {MAX_PREVIEW_W}x{MAX_PREVIEW_H}")
    if "pose" not in msg and "intrinsics" not in msg:
        raise MalformedMessage("set_camera carries neither pose nor intrinsics")
    return VirtualCamera(k, pose)


def handle_message(state: ViewState, msg, n_captures: int):
    """Apply one control message; returns (new_state, FrameJob or None).

    Raises MalformedMessage (state unchanged) on any validation failure.
    """
    if n_captures <= 0:
        raise NoSession("no session loaded")
    if not isinstance(msg, dict) or "kind" not in msg:
        raise MalformedMessage("message must be an object with a 'kind' field")
    kind = msg["kind"]

    if kind == "set_surface":
        new = replace(state, surf=_apply_surface(state.surf, msg))
    elif kind == "set_mask":
        new = replace(state, mask=_apply_mask(state.mask, msg))
    elif kind == "set_aperture":
        ap = msg.get("aperture")
        if ap not in (APERTURE_OPEN, APERTURE_PINHOLE):
            raise MalformedMessage("aperture must be 'open' or 'pinhole'")
        new = replace(state, aperture=ap)
    elif kind == "jump":
        delta = msg.get("delta")
        if not isinstance(delta, int) or isinstance(delta, bool):
            raise MalformedMessage("jump needs an integer 'delta'")
        new = replace(state, pinhole_index=(state.pinhole_index + delta) % n_captures)
    elif kind == "set_camera":
        new = replace(state, vcam=_apply_camera(state.vcam, msg))
    elif kind == "set_grid":
        g = msg.get("grid")
        if not isinstance(g, bool):
            raise MalformedMessage("set_grid needs a boolean 'grid'")
        new = replace(state, grid=g)
    elif kind == "request_frame":
        return state, FrameJob(state)
    else:
        raise MalformedMessage(f"unknown message kind {kind!r}")
    return new, FrameJob(new)


def params_echo(state: ViewState, frame_id: int) -> dict:
    s = state.surf
    k = state.vcam.intrinsics
    return {
        "frame_id": frame_id,
        "surface": {key: getattr(s, key) for key in _SURFACE_KEYS},
        "grid": state.grid,
        "mask": {"source": state.mask.source, "t": state.mask.t,
                 "lb": state.mask.lb, "ub": state.mask.ub},
        "aperture": state.aperture,
        "pinhole_index": state.pinhole_index,
        "vcam": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
                 "width": k.width, "height": k.height},
        "vcam_pose": [float(v) for v in state.vcam.pose.matrix().reshape(-1)],
    }


def encode_frame(img: IntegralImage, frame_id: int, echo: dict) -> bytes:
    """Binary frame: header, PNG payload, length-prefixed UTF-8 echo."""
    color = np.rint(np.clip(img.color, 0.0, 1.0) * 255.0).astype(np.uint8)
    if color.shape[2] == 3:
        color = color[:, :, ::-1]  # RGB -> BGR for the encoder
    else:
        color = color[:, :, 0]
    # lowest compression: frames go over a local socket, latency wins
    ok, payload = cv2.imencode(".png", color, [cv2.IMWRITE_PNG_COMPRESSION, 1])
    if not ok:
        raise EncodingFailure("PNG encoding failed")
    payload = payload.tobytes()
    h, w = img.color.shape[:2]
    trailer = json.dumps(echo).encode("utf-8")
    return (struct.pack("<IIIII", FRAME_MAGIC, frame_id, w, h, len(payload))
            + payload + struct.pack("<I", len(trailer)) + trailer)


def decode_frame(data: bytes):
    """Inverse of encode_frame; returns (frame_id, width, height, image, echo)."""
    magic, frame_id, w, h, plen = struct.unpack_from("<IIIII", data, 0)
    if magic != FRAME_MAGIC:
        raise EncodingFailure(f"bad frame magic 0x{magic:08x}")
    off = 20
    png = np.frombuffer(data[off:off + plen], dtype=np.uint8)
    img = cv2.imdecode(png, cv2.IMREAD_UNCHANGED)
    if img is None:
        raise EncodingFailure("frame payload is not decodable PNG")
    if img.ndim == 3 and img.shape[2] == 3:
        img = img[:, :, ::-1]
    off += plen
    (elen,) = struct.unpack_from("<I", data, off)
    echo = json.loads(data[off + 4:off + 4 + elen].decode("utf-8"))
    return frame_id, w, h, img, echo


def draw_surface_grid(img: IntegralImage, vcam: VirtualCamera,
                      surf: FocalSurfaceParams, ref_pose: Pose) -> IntegralImage:
    """Overlay the focal-surface grid; its center marks the focus point."""
    m = surface_to_world(surf, ref_pose)
    color = img.color.copy()
    h, w = color.shape[:2]
    rings = np.linspace(0.15, 0.9, 6)
    spokes = np.linspace(0.0, 2 * np.pi, 13)[:-1]
    ts = np.linspace(0.0, 2 * np.pi, 256)
    curves = [np.stack([r * np.cos(ts), r * np.sin(ts), np.full_like(ts, np.sqrt(1 - r * r))], 1)
              for r in rings]
    rr = np.linspace(0.0, 0.95, 64)
    curves += [np.stack([rr * np.cos(a), rr * np.sin(a), np.sqrt(1 - rr * rr)], 1) for a in spokes]
    rot_wc = vcam.pose.rotation.T
    k = vcam.intrinsics
    for pts in curves:
        world = pts @ m[:3, :3].T + m[:3, 3]
        cam = (world - vcam.pose.translation) @ rot_wc.T
        z = cam[:, 2]
        ok = z > 1e-9
        u = np.rint(k.fx * cam[ok, 0] / z[ok] + k.cx).astype(int)
        v = np.rint(k.fy * cam[ok, 1] / z[ok] + k.cy).astype(int)
        inside = (u >= 0) & (u < w) & (v >= 0) & (v < h)
        color[v[inside], u[inside]] = 1.0
    return IntegralImage(color, img.coverage, img.params_echo)


class RenderHub:
    """Owns the session and the single render worker for it.

    The focal surface stays pinned to the reference pose captured at
    load time, so navigating the virtual camera orbits a fixed surface.
    """

    def __init__(self, session: CaptureSession, defaults=None, preview=DEFAULT_PREVIEW):
        self.session = session
        self.ref_pose = session.captures[len(session) // 2].pose
        surf = defaults.surface if defaults else FocalSurfaceParams()
        mask = defaults.mask if defaults else MaskConfig()
        w = preview[0]
        k0 = session.captures[0].intrinsics
        scale = w / k0.width
        h = max(2, round(k0.height * scale))  # keep the source aspect
        k = Intrinsics(fx=k0.fx * scale, fy=k0.fy * scale,
                       cx=k0.cx * scale, cy=k0.cy * scale, width=w, height=h)
        self.state = ViewState(vcam=VirtualCamera(k, self.ref_pose), surf=surf, mask=mask)
        self._masked_cache: tuple[MaskConfig, CaptureSession] | None = None
        self._frame_id = 0
        self._pending: FrameJob | None = None
        # Loop-bound machinery; rebuilt whenever the hub is driven from a
        # new event loop (test clients spin one per connection).
        self._loop = None
        self._wakeup: asyncio.Event | None = None
        self._clients: set[asyncio.Queue] = set()
        self._worker: asyncio.Task | None = None

    # -- session views -----------------------------------------------------

    def _session_for(self, mask: MaskConfig) -> CaptureSession:
        if mask.source == NO_SOURCE:
            return self.session
        if self._masked_cache is not None and self._masked_cache[0] == mask:
            return self._masked_cache[1]
        masked = build_alpha_masks(self.session, mask)
        self._masked_cache = (mask, masked)
        return masked

    def render(self, state: ViewState) -> IntegralImage:
        session = self._session_for(state.mask)
        if state.aperture == APERTURE_PINHOLE:
            img = render_pinhole(session, state.pinhole_index, state.vcam,
                                 state.surf, self.ref_pose)
        else:
            img = render_integral(session, state.vcam, state.surf, self.ref_pose)
        if state.grid:
            img = draw_surface_grid(img, state.vcam, state.surf, self.ref_pose)
        return img

    def render_frame(self, state: ViewState) -> bytes:
        """Render + encode with the next frame id (sync; used by the worker)."""
        img = self.render(state)
        self._frame_id += 1
        return encode_frame(img, self._frame_id, params_echo(state, self._frame_id))

    # -- async plumbing ------------------------------------------------------

    def submit(self, job: FrameJob):
        self._pending = job  # latest wins
        if self._wakeup is not None:
            self._wakeup.set()

    def attach(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=4)
        self._clients.add(q)
        return q

    def detach(self, q: asyncio.Queue):
        self._clients.discard(q)

    async def worker(self):
        loop = asyncio.get_running_loop()
        while True:
            await self._wakeup.wait()
            self._wakeup.clear()
            job = self._pending
            self._pending = None
            if job is None:
                continue
            data = await loop.run_in_executor(None, self.render_frame, job.state)
            for q in list(self._clients):
                if q.full():
                    try:
                        q.get_nowait()  # drop the oldest frame for slow clients
                    except asyncio.QueueEmpty:
                        pass
                q.put_nowait(data)

    def ensure_worker(self):
        """Bind (or rebind) the render worker to the running loop."""
        loop = asyncio.get_running_loop()
        if self._loop is not loop:
            self._loop = loop
            self._wakeup = asyncio.Event()
            self._clients = set()
            self._worker = loop.create_task(self.worker())
            if self._pending is not None:
                self._wakeup.set()
        elif self._worker is None or self._worker.done():
            self._worker = loop.create_task(self.worker())


_FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>peersa</title></head>
<body><h1>peersa render service</h1>
<p>No viewer bundle found. Build the frontend (frontend/dist) or connect a
client to the <code>/stream</code> websocket directly.</p></body></html>
"""


def bundled_session():
    """Fallback dataset: a dense synthetic scene, used when none is given.

    Ships focused on its background plane so the first frame is sharp.
    """
    from .dataset import SessionDefaults
    from .sim import (SceneConfig, TrajectorySpec, generate_scene,
                      generate_trajectory, plane_surface, render_views)

    cfg = SceneConfig(density=0.6, seed=11, width=640, height=480)
    scene = generate_scene(cfg)
    poses = generate_trajectory(TrajectorySpec("horizontal", 0.15, 30))
    session = render_views(scene, poses)
    session.metadata["bundled"] = True
    defaults = SessionDefaults(surface=plane_surface(scene.d_bg), mask=MaskConfig())
    return session, defaults


def create_app(session: CaptureSession | None = None, defaults=None,
               viewer_dir: str | None = None):
    from fastapi import FastAPI, WebSocket, WebSocketDisconnect
    from fastapi.responses import HTMLResponse, PlainTextResponse

    if session is None:
        session, defaults = bundled_session()
    hub = RenderHub(session, defaults)
    hub.render(hub.state)  # warm the JIT and the packed buffers

    app = FastAPI(title="peersa render service")
    app.state.hub = hub

    @app.get("/health")
    async def health():
        return PlainTextResponse("ok")

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        hub.ensure_worker()
        q = hub.attach()

        async def pump_frames():
            while True:
                await ws.send_bytes(await q.get())

        sender = asyncio.ensure_future(pump_frames())
        try:
            while True:
                text = await ws.receive_text()
                try:
                    msg = json.loads(text)
                except json.JSONDecodeError as e:
                    await ws.send_text(json.dumps(
                        {"kind": "error", "error": "MalformedMessage",
                         "message": f"not valid JSON: {e}"}))
                    continue
                try:
                    hub.state, job = handle_message(hub.state, msg, len(hub.session))
                except MalformedMessage as e:
                    await ws.send_text(json.dumps(
                        {"kind": "error", "error": "MalformedMessage", "message": str(e)}))
                    continue
                if job is not None:
                    hub.submit(job)
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            hub.detach(q)

    # The root mount must come last: a "/" mount matches every path and
    # would otherwise swallow the websocket upgrade for /stream.
    viewer = Path(viewer_dir) if viewer_dir else Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if viewer.is_dir() and (viewer / "index.html").is_file():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(viewer), html=True), name="viewer")
    else:
        @app.get("/")
        async def index():
            return HTMLResponse(_FALLBACK_PAGE)

    return app


def serve(session=None, defaults=None, host: str | None = None, port: int = 8977):
    import os

    import uvicorn

    host = host or os.environ.get("PEERSA_BIND", "127.0.0.1")
    app = create_app(session, defaults)
    # frames are PNG already; re-deflating ~100 KB per frame costs tens of
    # milliseconds per round trip on a small CPU
    uvicorn.run(app, host=host, port=port, log_level="warning",
                ws_per_message_deflate=False)
