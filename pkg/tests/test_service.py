import json
from contextlib import contextmanager

import numpy as np
import pytest

from peersa import service, sim
from peersa.engine import Capture, CaptureSession, VirtualCamera
from peersa.errors import MalformedMessage, NoSession
from peersa.geometry import FocalSurfaceParams, Intrinsics, Pose
from peersa.masking import MaskConfig
from peersa.service import (FrameJob, ViewState, decode_frame, encode_frame,
                            handle_message, params_echo)

K = Intrinsics(fx=50, fy=50, cx=16, cy=12, width=32, height=24)


def make_state():
    return ViewState(vcam=VirtualCamera(K, Pose.identity()),
                     surf=FocalSurfaceParams(z=4.0),
                     mask=MaskConfig())


class TestHandleMessage:
    def test_set_surface_updates_and_schedules(self):
        state, job = handle_message(make_state(), {"kind": "set_surface", "z": 2.5}, 10)
        assert state.surf.z == 2.5
        assert isinstance(job, FrameJob) and job.state.surf.z == 2.5

    def test_set_surface_partial_keeps_rest(self):
        state, _ = handle_message(make_state(), {"kind": "set_surface", "tx": 0.3}, 10)
        assert state.surf.z == 4.0 and state.surf.tx == 0.3

    def test_jump_wraps_modulo(self):
        s = make_state()
        s, _ = handle_message(s, {"kind": "set_aperture", "aperture": "pinhole"}, 27)
        for _ in range(26):
            s, _ = handle_message(s, {"kind": "jump", "delta": 1}, 27)
        assert s.pinhole_index == 26
        s, _ = handle_message(s, {"kind": "jump", "delta": 1}, 27)
        assert s.pinhole_index == 0
        s, _ = handle_message(s, {"kind": "jump", "delta": -1}, 27)
        assert s.pinhole_index == 26

    def test_invalid_mask_bounds_rejected_state_unchanged(self):
        s = make_state()
        with pytest.raises(MalformedMessage):
            handle_message(s, {"kind": "set_mask", "lb": 0.2, "ub": 0.1}, 10)
        assert s.mask.lb == 0.0  # untouched

    def test_nonpositive_scale_rejected(self):
        with pytest.raises(MalformedMessage):
            handle_message(make_state(), {"kind": "set_surface", "sx": 0.0}, 10)

    def test_unknown_kind_rejected(self):
        with pytest.raises(MalformedMessage):
            handle_message(make_state(), {"kind": "warp_drive"}, 10)

    def test_non_numeric_value_rejected(self):
        with pytest.raises(MalformedMessage):
            handle_message(make_state(), {"kind": "set_surface", "z": "far"}, 10)

    def test_resolution_cap(self):
        msg = {"kind": "set_camera",
               "intrinsics": {"fx": 1000, "fy": 1000, "cx": 960, "cy": 720,
                              "width": 1920, "height": 1440}}
        with pytest.raises(MalformedMessage):
            handle_message(make_state(), msg, 10)

    def test_request_frame_keeps_state(self):
        s = make_state()
        s2, job = handle_message(s, {"kind": "request_frame"}, 10)
        assert s2 is s and job is not None

    def test_no_session(self):
        with pytest.raises(NoSession):
            handle_message(make_state(), {"kind": "request_frame"}, 0)

    def test_set_grid(self):
        s, job = handle_message(make_state(), {"kind": "set_grid", "grid": True}, 10)
        assert s.grid is True and job is not None


class TestFrameCodec:
    def _image(self):
        rng = np.random.default_rng(0)
        from peersa.engine import render_integral

        img = rng.integers(0, 256, (24, 32, 3)).astype(np.float32) / 255.0
        ses = CaptureSession([Capture(img, Pose.identity(), K)])
        return render_integral(ses, VirtualCamera(K, Pose.identity()),
                               sim.plane_surface(5.0), Pose.identity())

    def test_header_fields(self):
        img = self._image()
        data = encode_frame(img, 7, params_echo(make_state(), 7))
        frame_id, w, h, decoded, echo = decode_frame(data)
        assert frame_id == 7
        assert (w, h) == (32, 24)
        assert echo["frame_id"] == 7
        assert data[:4] == (0x53414946).to_bytes(4, "little")

    def test_lossless_8bit_round_trip(self):
        img = self._image()
        data = encode_frame(img, 1, {})
        _, _, _, decoded, _ = decode_frame(data)
        expected = np.rint(np.clip(img.color, 0, 1) * 255).astype(np.uint8)
        assert np.array_equal(decoded, expected)

    def test_echo_carries_surface_params(self):
        state = make_state()
        state, _ = handle_message(state, {"kind": "set_surface", "z": 2.5}, 4)
        echo = params_echo(state, 3)
        assert echo["surface"]["z"] == 2.5
        assert echo["mask"]["source"] == "none"


@contextmanager
def ws_session(client, url="/stream"):
    """Websocket session that tolerates the close-on-exit disconnect this
    starlette test client raises when the client side hangs up first."""
    from starlette.websockets import WebSocketDisconnect

    completed = False
    try:
        with client.websocket_connect(url) as ws:
            yield ws
            completed = True
    except WebSocketDisconnect:
        if not completed:
            raise


@pytest.fixture(scope="module")
def client():
    fastapi_testclient = pytest.importorskip("fastapi.testclient")
    scene = sim.generate_scene(sim.SceneConfig(
        density=0.3, seed=2, width=64, height=48, focal_px=50.0))
    poses = sim.generate_trajectory(sim.TrajectorySpec("horizontal", 0.12, 6))
    session = sim.render_views(scene, poses)
    app = service.create_app(session)
    # no lifespan hooks; the plain client avoids a portal clash between
    # the lifespan context and per-connection websocket portals
    return fastapi_testclient.TestClient(app)


class TestEndpoints:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200 and r.text == "ok"

    def test_index_serves_viewer_or_fallback(self, client):
        r = client.get("/")
        assert r.status_code == 200
        assert "peersa" in r.text.lower() or "<canvas" in r.text.lower()

    def test_stream_round_trip_and_echo(self, client):
        with ws_session(client) as ws:
            ws.send_text(json.dumps({"kind": "set_surface", "z": 2.5}))
            data = ws.receive_bytes()
            frame_id, w, h, img, echo = decode_frame(data)
            assert echo["surface"]["z"] == 2.5
            assert (w, h) == (640, 480)

    def test_malformed_echoes_error(self, client):
        with ws_session(client) as ws:
            ws.send_text("{not json")
            reply = json.loads(ws.receive_text())
            assert reply["kind"] == "error"
            ws.send_text(json.dumps({"kind": "set_mask", "lb": 0.9, "ub": 0.1}))
            reply = json.loads(ws.receive_text())
            assert reply["kind"] == "error" and "lb" in reply["message"]

    def test_frame_ids_strictly_increase(self, client):
        with ws_session(client) as ws:
            ids = []
            for z in (3.0, 3.5, 4.0):
                ws.send_text(json.dumps({"kind": "set_surface", "z": z}))
                frame_id, *_ = decode_frame(ws.receive_bytes())
                ids.append(frame_id)
            assert ids == sorted(ids)
            assert len(set(ids)) == len(ids)

    def test_pinhole_browse_via_stream(self, client):
        with ws_session(client) as ws:
            ws.send_text(json.dumps({"kind": "set_aperture", "aperture": "pinhole"}))
            _, _, _, _, echo = decode_frame(ws.receive_bytes())
            assert echo["aperture"] == "pinhole" and echo["pinhole_index"] == 0
            for expected in (1, 2, 3, 4, 5, 0):
                ws.send_text(json.dumps({"kind": "jump", "delta": 1}))
                _, _, _, _, echo = decode_frame(ws.receive_bytes())
                assert echo["pinhole_index"] == expected


class TestGridOverlay:
    def test_grid_draws_over_the_render(self):
        scene = sim.generate_scene(sim.SceneConfig(
            density=0.2, seed=1, width=64, height=48, focal_px=50.0))
        poses = sim.generate_trajectory(sim.TrajectorySpec("horizontal", 0.1, 4))
        hub = service.RenderHub(sim.render_views(scene, poses), None, preview=(64, 48))
        plain = hub.render(hub.state)
        from dataclasses import replace

        with_grid = hub.render(replace(hub.state, grid=True))
        assert (with_grid.color == 1.0).any()
        assert not np.array_equal(plain.color, with_grid.color)


class TestCoalescing:
    def test_latest_wins_after_burst(self, client):
        hub = client.app.state.hub
        with ws_session(client) as ws:
            for z in np.linspace(2.0, 6.0, 9):
                ws.send_text(json.dumps({"kind": "set_surface", "z": float(z)}))
            # drain until the final value shows up; the burst may coalesce
            # into fewer frames than messages
            seen = []
            for _ in range(9):
                _, _, _, _, echo = decode_frame(ws.receive_bytes())
                seen.append(echo["surface"]["z"])
                if echo["surface"]["z"] == 6.0:
                    break
            assert seen[-1] == 6.0
        assert hub.state.surf.z == 6.0
