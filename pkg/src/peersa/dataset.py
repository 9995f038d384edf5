"""Capture-session storage: the session manifest format and adapters.

Normative layout
----------------
A dataset is a directory holding ``session.json`` plus the image files
it references (paths are relative to the manifest, UTF-8 throughout):

    {
      "version": 1,
      "band": "rgb",                  # rgb | nir | fir | reg | mono
      "intrinsics": {"fx":..,"fy":..,"cx":..,"cy":..,"width":..,"height":..},
      "captures": [
        {"image_path": "images/0000.png",
         "pose": [r00,r01,r02,tx, r10,..,ty, r20,..,tz, 0,0,0,1],
         "aux_mask_path": "masks/0000.png",      # optional
         "intrinsics": {...}},                   # optional per-capture override
        ...
      ],
      "defaults": {"surface": {"z":..,"tx":..,...,"grid":false},
                   "mask": {"source":"none","t":..,"lb":..,"ub":..}},
      "metadata": {...}
    }

Poses are 16 numbers, row-major, camera-to-world. Images are PNG; 8-bit
values map to v/255, 16-bit to v/65535. Auxiliary mask planes are
grayscale PNGs whose [0, max] range maps linearly onto mask values
[-1, 1]. ``save_session`` writes 16-bit PNGs, so a load -> save -> load
round trip reproduces pixel data exactly and poses bit-exactly.

Loading re-orthonormalizes slightly off rotations (up to 1e-4) with a
warning and rejects anything worse. Manifest order is render order;
the loader never reorders captures.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import cv2
import numpy as np

from .engine import Capture, CaptureSession, IntegralImage
from .errors import (ImageMissing, IoFailure, ManifestMissing, MixedChannels,
                     PoseInvalid)
from .geometry import FocalSurfaceParams, Intrinsics, Pose

MANIFEST_NAME = "session.json"
BANDS = ("rgb", "nir", "fir", "reg", "mono")

ORTHO_LOAD_TOL = 1e-4
ORTHO_CLEAN_TOL = 1e-6


@dataclass(frozen=True)
class SessionDefaults:
    surface: FocalSurfaceParams
    mask: "MaskConfig"


def _default_defaults():
    from .masking import MaskConfig

    return SessionDefaults(surface=FocalSurfaceParams(), mask=MaskConfig())


def _manifest_path(path) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    if not p.is_file():
        raise ManifestMissing(f"no {MANIFEST_NAME} at {path}")
    return p


def _decode_image(path: Path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IoFailure(f"could not decode image {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise IoFailure(f"unsupported image dtype {raw.dtype} in {path}")
    img = raw.astype(np.float32) / np.float32(scale)
    if img.ndim == 2:
        img = img[:, :, None]
    elif img.shape[2] == 3:
        img = img[:, :, ::-1]  # BGR -> RGB
    elif img.shape[2] == 4:
        img = img[:, :, 2::-1]
    return np.ascontiguousarray(img)


def _encode_u16(img: np.ndarray) -> np.ndarray:
    out = np.rint(np.clip(img, 0.0, 1.0) * 65535.0).astype(np.uint16)
    if out.ndim == 3 and out.shape[2] == 3:
        out = out[:, :, ::-1]  # RGB -> BGR
    elif out.ndim == 3 and out.shape[2] == 1:
        out = out[:, :, 0]
    return np.ascontiguousarray(out)


def _parse_pose(values, index) -> Pose:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size != 16:
        raise PoseInvalid(index, f"expected 16 numbers, got {arr.size}")
    m = arr.reshape(4, 4)
    if not np.allclose(m[3], [0, 0, 0, 1], atol=1e-6):
        raise PoseInvalid(index, "bottom row is not [0, 0, 0, 1]")
    r = m[:3, :3]
    err = float(np.abs(r.T @ r - np.eye(3)).max())
    if err > ORTHO_LOAD_TOL:
        raise PoseInvalid(index, f"rotation block off-orthonormal by {err:.2e}")
    if np.linalg.det(r) < 0:
        raise PoseInvalid(index, "rotation block has negative determinant")
    if err > ORTHO_CLEAN_TOL:
        u, _, vt = np.linalg.svd(r)
        r = u @ vt
        warnings.warn(f"capture {index}: pose rotation re-orthonormalized "
                      f"(deviation {err:.2e})", stacklevel=3)
    return Pose(r, m[:3, 3])


def _parse_intrinsics(d) -> Intrinsics:
    return Intrinsics(fx=float(d["fx"]), fy=float(d["fy"]),
                      cx=float(d["cx"]), cy=float(d["cy"]),
                      width=int(d["width"]), height=int(d["height"]))


def _parse_surface(d) -> FocalSurfaceParams:
    keys = ("z", "tx", "ty", "rx", "ry", "rz", "sx", "sy", "sz")
    kw = {k: float(d[k]) for k in keys if k in d}
    if "grid" in d:
        kw["grid"] = bool(d["grid"])
    return FocalSurfaceParams(**kw)


def load_session(path):
    """Load a session directory; returns (CaptureSession, SessionDefaults)."""
    from .masking import MaskConfig

    mpath = _manifest_path(path)
    root = mpath.parent
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise IoFailure(f"manifest is not valid JSON: {e}") from e
    if manifest.get("version") != 1:
        raise IoFailure(f"unsupported manifest version {manifest.get('version')!r}")

    shared_k = _parse_intrinsics(manifest["intrinsics"]) if "intrinsics" in manifest else None
    captures = []
    channels = None
    for i, entry in enumerate(manifest.get("captures", [])):
        img_path = root / entry["image_path"]
        if not img_path.is_file():
            raise ImageMissing(img_path)
        image = _decode_image(img_path)
        if channels is None:
            channels = image.shape[2]
        elif image.shape[2] != channels:
            raise MixedChannels(
                f"capture {i} has {image.shape[2]} channels, session started with {channels}")
        pose = _parse_pose(entry["pose"], i)
        k = _parse_intrinsics(entry["intrinsics"]) if "intrinsics" in entry else shared_k
        if k is None:
            raise IoFailure(f"capture {i} has no intrinsics and none are shared")
        aux = None
        if entry.get("aux_mask_path"):
            ap = root / entry["aux_mask_path"]
            if not ap.is_file():
                raise ImageMissing(ap)
            plane = _decode_image(ap)[:, :, 0]
            aux = plane * 2.0 - 1.0
        captures.append(Capture(image, pose, k, aux_mask=aux))

    if not captures:
        raise IoFailure("manifest lists no captures")
    session = CaptureSession(captures, metadata=dict(manifest.get("metadata", {})))
    if "band" in manifest:
        session.metadata.setdefault("band", manifest["band"])

    defaults = _default_defaults()
    d = manifest.get("defaults", {})
    if "surface" in d:
        defaults = SessionDefaults(surface=_parse_surface(d["surface"]), mask=defaults.mask)
    if "mask" in d:
        md = d["mask"]
        defaults = SessionDefaults(
            surface=defaults.surface,
            mask=MaskConfig(source=md.get("source", "none"), t=float(md.get("t", 0.05)),
                            lb=float(md.get("lb", 0.0)), ub=float(md.get("ub", 0.1))))
    return session, defaults


def save_session(session: CaptureSession, path, defaults: SessionDefaults | None = None,
                 band: str | None = None) -> Path:
    """Write a session as a normative dataset directory; returns its path."""
    root = Path(path)
    try:
        (root / "images").mkdir(parents=True, exist_ok=True)
        entries = []
        shared_k = session.captures[0].intrinsics
        uniform = all(c.intrinsics == shared_k for c in session.captures)
        any_aux = any(c.aux_mask is not None for c in session.captures)
        if any_aux:
            (root / "masks").mkdir(exist_ok=True)
        for i, cap in enumerate(session.captures):
            rel = f"images/{i:04d}.png"
            if not cv2.imwrite(str(root / rel), _encode_u16(cap.image)):
                raise IoFailure(f"failed to write {root / rel}")
            entry = {"image_path": rel, "pose": [float(v) for v in cap.pose.matrix().reshape(-1)]}
            if not uniform:
                entry["intrinsics"] = asdict(cap.intrinsics)
            if cap.aux_mask is not None:
                mrel = f"masks/{i:04d}.png"
                if not cv2.imwrite(str(root / mrel), _encode_u16((cap.aux_mask + 1.0) / 2.0)):
                    raise IoFailure(f"failed to write {root / mrel}")
                entry["aux_mask_path"] = mrel
            entries.append(entry)
        defaults = defaults or _default_defaults()
        band = band or session.metadata.get("band") or ("rgb" if session.channels == 3 else "mono")
        manifest = {
            "version": 1,
            "band": band,
            "captures": entries,
            "defaults": {
                "surface": {**{k: getattr(defaults.surface, k)
                               for k in ("z", "tx", "ty", "rx", "ry", "rz", "sx", "sy", "sz")},
                            "grid": defaults.surface.grid},
                "mask": {"source": defaults.mask.source, "t": defaults.mask.t,
                         "lb": defaults.mask.lb, "ub": defaults.mask.ub},
            },
            "metadata": {k: v for k, v in session.metadata.items() if k != "band"},
        }
        if uniform:
            manifest["intrinsics"] = asdict(shared_k)
        (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"could not write dataset to {root}: {e}") from e
    return root


def export_image(img: IntegralImage, path, mask_cfg=None, bit_depth: int = 8) -> Path:
    """Write an integral image as RGBA PNG plus a parameter sidecar.

    Invalid pixels come out black with alpha 0; valid pixels get alpha
    max. 16-bit export uses the full 0..65535 range.
    """
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    path = Path(path)
    color = img.color
    if color.shape[2] == 1:
        color = np.repeat(color, 3, axis=2)
    valid = img.valid
    scale = 255.0 if bit_depth == 8 else 65535.0
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    rgba = np.zeros((*color.shape[:2], 4), dtype=dtype)
    quant = np.rint(np.clip(color, 0.0, 1.0) * scale).astype(dtype)
    rgba[:, :, :3] = np.where(valid[:, :, None], quant[:, :, ::-1], 0)  # BGR for cv2
    rgba[:, :, 3] = np.where(valid, dtype(scale), 0)
    if not cv2.imwrite(str(path), rgba):
        raise IoFailure(f"failed to write {path}")

    p = img.params_echo
    lines = [f"{k} = {getattr(p, k)!r}" for k in
             ("z", "tx", "ty", "rx", "ry", "rz", "sx", "sy", "sz", "grid")]
    if mask_cfg is not None:
        lines += [f"mask.{k} = {getattr(mask_cfg, k)!r}" for k in ("source", "t", "lb", "ub")]
    sidecar = path.with_name(path.name + ".txt")
    sidecar.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Third-party layout adapter
# ---------------------------------------------------------------------------

def adapt_dataset(src, dst, sa_width_hint: float | None = None) -> Path:
    """Convert a pose-per-line + image-folder layout into a manifest dataset.

    Expects ``src/poses.txt`` with 12 or 16 whitespace-separated numbers
    per line (row-major 3x4 or 4x4) and an ``src/images`` folder whose
    sorted files pair with the pose lines. The camera-to-world vs.
    world-to-camera convention is auto-detected: the reading whose camera
    centers span a plausible peering aperture wins (the hint, when given,
    picks the closer span). Best-effort; ambiguity produces a warning.
    """
    src = Path(src)
    pose_file = src / "poses.txt"
    img_dir = src / "images"
    if not pose_file.is_file():
        raise ManifestMissing(f"no poses.txt in {src}")
    if not img_dir.is_dir():
        raise ImageMissing(img_dir)
    images = sorted(p for p in img_dir.iterdir() if p.suffix.lower() == ".png")
    lines = [ln for ln in pose_file.read_text().splitlines() if ln.strip()]
    if len(images) != len(lines):
        raise IoFailure(f"{len(images)} images vs {len(lines)} pose lines")

    mats = []
    for i, ln in enumerate(lines):
        vals = np.array([float(x) for x in ln.split()], dtype=np.float64)
        if vals.size == 12:
            m = np.vstack([vals.reshape(3, 4), [0, 0, 0, 1]])
        elif vals.size == 16:
            m = vals.reshape(4, 4)
        else:
            raise PoseInvalid(i, f"line has {vals.size} numbers (need 12 or 16)")
        mats.append(m)

    def span(centers):
        c = np.array(centers)
        return float(np.linalg.norm(c.max(axis=0) - c.min(axis=0)))

    span_c2w = span([m[:3, 3] for m in mats])
    span_w2c = span([-m[:3, :3].T @ m[:3, 3] for m in mats])
    if sa_width_hint is not None:
        use_c2w = abs(span_c2w - sa_width_hint) <= abs(span_w2c - sa_width_hint)
    else:
        # Peering apertures are centimeter scale; the wrong reading of a
        # moving camera usually produces a wildly different span.
        use_c2w = span_c2w <= span_w2c
    if sa_width_hint is None and min(span_c2w, span_w2c) > 0 \
            and max(span_c2w, span_w2c) / max(min(span_c2w, span_w2c), 1e-12) < 2.0:
        warnings.warn(
            f"pose convention ambiguous (spans {span_c2w:.3f} vs {span_w2c:.3f} m); "
            f"assuming {'camera-to-world' if use_c2w else 'world-to-camera'}")

    captures = []
    channels = None
    for i, (img_path, m) in enumerate(zip(images, mats)):
        if use_c2w:
            pose = _parse_pose(m.reshape(-1), i)
        else:
            r = m[:3, :3]
            inv = np.eye(4)
            inv[:3, :3] = r.T
            inv[:3, 3] = -r.T @ m[:3, 3]
            pose = _parse_pose(inv.reshape(-1), i)
        image = _decode_image(img_path)
        if channels is None:
            channels = image.shape[2]
        elif image.shape[2] != channels:
            raise MixedChannels(f"image {img_path} breaks the channel count")
        h, w = image.shape[:2]
        # No calibration in these layouts; assume a generic lens with the
        # principal point at the center and a 65-degree horizontal FOV.
        fx = (w / 2.0) / math.tan(math.radians(65.0) / 2.0)
        k = Intrinsics(fx=fx, fy=fx, cx=w / 2.0, cy=h / 2.0, width=w, height=h)
        captures.append(Capture(image, pose, k))

    session = CaptureSession(captures, metadata={
        "adapted_from": str(src),
        "pose_convention": "camera-to-world" if use_c2w else "world-to-camera (inverted)",
        "sa_span_m": span_c2w if use_c2w else span_w2c,
    })
    return save_session(session, dst)
