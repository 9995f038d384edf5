import json

import numpy as np
import pytest

from peersa import dataset as dio
from peersa import sim
from peersa.engine import Capture, CaptureSession, VirtualCamera, render_integral
from peersa.errors import ImageMissing, ManifestMissing, MixedChannels, PoseInvalid
from peersa.geometry import FocalSurfaceParams, Intrinsics, Pose
from peersa.masking import MaskConfig

K = Intrinsics(fx=50, fy=50, cx=16, cy=12, width=32, height=24)


def quantized_session(rng, n=3, channels=3):
    caps = []
    for i in range(n):
        img = rng.integers(0, 65536, (24, 32, channels)).astype(np.float32) / np.float32(65535.0)
        pose = Pose(np.eye(3), np.array([0.01 * i, 0.0, 0.0]))
        aux = (rng.integers(0, 65536, (24, 32)).astype(np.float32) / np.float32(65535.0)) * 2 - 1
        caps.append(Capture(img, pose, K, aux_mask=aux if i == 0 else None))
    return CaptureSession(caps, metadata={"note": "fixture"})


class TestRoundTrip:
    def test_save_load_is_identity(self, tmp_path):
        rng = np.random.default_rng(0)
        ses = quantized_session(rng)
        defaults = dio.SessionDefaults(
            surface=FocalSurfaceParams(z=4.5, sx=100.0),
            mask=MaskConfig(source="vdvi", t=0.05, lb=0.0, ub=0.1))
        dio.save_session(ses, tmp_path / "ds", defaults=defaults)
        loaded, d2 = dio.load_session(tmp_path / "ds")
        assert len(loaded) == len(ses)
        for a, b in zip(ses.captures, loaded.captures):
            assert np.array_equal(a.image, b.image)
            assert np.array_equal(a.pose.rotation, b.pose.rotation)
            assert np.array_equal(a.pose.translation, b.pose.translation)
            assert a.intrinsics == b.intrinsics
        assert np.allclose(ses.captures[0].aux_mask, loaded.captures[0].aux_mask, atol=1e-6)
        assert d2.surface == defaults.surface
        assert d2.mask == defaults.mask
        assert loaded.metadata["note"] == "fixture"

    def test_double_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        ses = quantized_session(rng)
        dio.save_session(ses, tmp_path / "a")
        first, _ = dio.load_session(tmp_path / "a")
        dio.save_session(first, tmp_path / "b")
        second, _ = dio.load_session(tmp_path / "b")
        for a, b in zip(first.captures, second.captures):
            assert np.array_equal(a.image, b.image)
            assert np.array_equal(a.pose.matrix(), b.pose.matrix())

    def test_manifest_order_is_render_order(self, tmp_path):
        rng = np.random.default_rng(2)
        ses = quantized_session(rng, n=5)
        dio.save_session(ses, tmp_path / "ds")
        loaded, _ = dio.load_session(tmp_path / "ds")
        for a, b in zip(ses.captures, loaded.captures):
            assert np.array_equal(a.pose.translation, b.pose.translation)


class TestLoaderErrors:
    def test_manifest_missing(self, tmp_path):
        with pytest.raises(ManifestMissing):
            dio.load_session(tmp_path)

    def test_image_missing_names_path(self, tmp_path):
        rng = np.random.default_rng(3)
        root = dio.save_session(quantized_session(rng), tmp_path / "ds")
        (root / "images" / "0001.png").unlink()
        with pytest.raises(ImageMissing) as err:
            dio.load_session(root)
        assert "0001.png" in str(err.value)

    def test_pose_invalid(self, tmp_path):
        rng = np.random.default_rng(4)
        root = dio.save_session(quantized_session(rng), tmp_path / "ds")
        manifest = json.loads((root / "session.json").read_text())
        manifest["captures"][1]["pose"] = [1.0] * 16
        (root / "session.json").write_text(json.dumps(manifest))
        with pytest.raises(PoseInvalid):
            dio.load_session(root)

    def test_slightly_off_rotation_reorthonormalized(self, tmp_path):
        rng = np.random.default_rng(5)
        root = dio.save_session(quantized_session(rng), tmp_path / "ds")
        manifest = json.loads((root / "session.json").read_text())
        pose = np.array(manifest["captures"][0]["pose"]).reshape(4, 4)
        pose[0, 0] += 4e-5
        manifest["captures"][0]["pose"] = pose.reshape(-1).tolist()
        (root / "session.json").write_text(json.dumps(manifest))
        with pytest.warns(UserWarning, match="re-orthonormalized"):
            loaded, _ = dio.load_session(root)
        r = loaded.captures[0].pose.rotation
        assert np.abs(r.T @ r - np.eye(3)).max() < 1e-9

    def test_mixed_channels(self, tmp_path):
        import cv2

        rng = np.random.default_rng(6)
        root = dio.save_session(quantized_session(rng), tmp_path / "ds")
        gray = rng.integers(0, 65536, (24, 32)).astype(np.uint16)
        cv2.imwrite(str(root / "images" / "0001.png"), gray)
        with pytest.raises(MixedChannels):
            dio.load_session(root)


class TestSimulatedFixtures:
    """Synthetic stand-ins shaped like the published capture sessions."""

    def test_wide_rgb_fixture(self, tmp_path):
        # 300 images across ~11 cm, color
        scene = sim.generate_scene(sim.SceneConfig(
            density=0.2, seed=0, width=64, height=48, focal_px=50.0))
        poses = sim.generate_trajectory(sim.TrajectorySpec("horizontal", 0.11, 300))
        ses = sim.render_views(scene, poses)
        dio.save_session(ses, tmp_path / "rgb", band="rgb")
        loaded, _ = dio.load_session(tmp_path / "rgb")
        assert len(loaded) == 300
        c = np.array([cap.pose.translation for cap in loaded.captures])
        assert np.linalg.norm(c.max(axis=0) - c.min(axis=0)) == pytest.approx(0.11, abs=1e-6)
        assert loaded.channels == 3

    def test_narrow_nir_fixture(self, tmp_path):
        # 27 single-channel images across ~7 cm
        scene = sim.generate_scene(sim.SceneConfig(
            density=0.2, seed=1, width=64, height=48, focal_px=50.0))
        poses = sim.generate_trajectory(sim.TrajectorySpec("horizontal", 0.07, 27))
        ses = sim.render_views(scene, poses, channels=1)
        dio.save_session(ses, tmp_path / "nir", band="nir")
        loaded, _ = dio.load_session(tmp_path / "nir")
        assert len(loaded) == 27
        c = np.array([cap.pose.translation for cap in loaded.captures])
        assert np.linalg.norm(c.max(axis=0) - c.min(axis=0)) == pytest.approx(0.07, abs=1e-6)
        assert loaded.channels == 1


class TestExportImage:
    def _render(self):
        rng = np.random.default_rng(7)
        img = rng.integers(0, 256, (24, 32, 3)).astype(np.float32) / 255.0
        ses = CaptureSession([Capture(img, Pose.identity(), K)])
        return render_integral(ses, VirtualCamera(K, Pose.identity()),
                               sim.plane_surface(5.0), Pose.identity())

    def test_invalid_pixels_get_zero_alpha(self, tmp_path):
        import cv2

        out = self._render()
        # knock out some coverage artificially
        out.coverage[:4, :4] = 0.0
        path = dio.export_image(out, tmp_path / "o.png",
                                mask_cfg=MaskConfig(source="none"))
        raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        assert raw.shape[2] == 4
        assert np.all(raw[:4, :4, 3] == 0)
        assert np.all(raw[:4, :4, :3] == 0)
        assert np.all(raw[8:, 8:, 3] == 255)
        sidecar = (tmp_path / "o.png.txt").read_text()
        assert "sx" in sidecar and "mask.source" in sidecar

    def test_16bit_uses_full_range(self, tmp_path):
        import cv2

        out = self._render()
        out.color[0, 0] = 0.0
        out.color[0, 1] = 1.0
        path = dio.export_image(out, tmp_path / "o16.png", bit_depth=16)
        raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        assert raw.dtype == np.uint16
        assert raw[0, 1, :3].max() == 65535
        assert raw[0, 0, :3].min() == 0


class TestAdapter:
    def _make_src(self, tmp_path, c2w=True):
        import cv2

        src = tmp_path / "thirdparty"
        (src / "images").mkdir(parents=True)
        rng = np.random.default_rng(8)
        lines = []
        for i in range(4):
            img = rng.integers(0, 256, (24, 32, 3)).astype(np.uint8)
            cv2.imwrite(str(src / "images" / f"{i:03d}.png"), img)
            m = np.eye(4)
            m[:3, 3] = [0.02 * i, 0, 0]
            if not c2w:
                m[:3, 3] = -m[:3, :3].T @ m[:3, 3]
            lines.append(" ".join(f"{v:.9f}" for v in m.reshape(-1)))
        (src / "poses.txt").write_text("\n".join(lines))
        return src

    def test_adapts_c2w_layout(self, tmp_path):
        src = self._make_src(tmp_path)
        out = dio.adapt_dataset(src, tmp_path / "out", sa_width_hint=0.06)
        ses, _ = dio.load_session(out)
        assert len(ses) == 4
        c = np.array([cap.pose.translation for cap in ses.captures])
        assert c[:, 0].max() - c[:, 0].min() == pytest.approx(0.06, abs=1e-6)
