"""Per-image occluder masks and the threshold-to-alpha mapping.

Mask values live in [-1, 1]; high values flag occluder pixels, low
values non-occluders. The alpha mapping turns a mask value into samples'
integration weight: at or below LB the pixel is fully opaque (alpha 1),
at or above UB fully transparent (alpha 0), with a linear ramp between.
LB and UB are absolute mask values constrained to lb <= t <= ub; the
central threshold T only anchors UI defaults (lb = t - 0.05,
ub = t + 0.05).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChannelMismatch, SourceUnavailable

VDVI_SOURCE = "vdvi"
NO_SOURCE = "none"

DEFAULT_BAND_HALFWIDTH = 0.05


@dataclass(frozen=True)
class MaskConfig:
    """Mask source plus T/LB/UB thresholds.

    ``source`` is "vdvi", "none", or the id of a per-capture auxiliary
    mask channel loaded with the dataset.
    """

    source: str = NO_SOURCE
    t: float = 0.05
    lb: float = 0.0
    ub: float = 0.1

    def __post_init__(self):
        if not (self.lb <= self.t <= self.ub):
            raise ValueError(f"thresholds must satisfy lb <= t <= ub, got {self.lb}, {self.t}, {self.ub}")

    @staticmethod
    def around(t: float, source: str = VDVI_SOURCE, halfwidth: float = DEFAULT_BAND_HALFWIDTH) -> "MaskConfig":
        """Config with bounds centered on T (the UI default)."""
        return MaskConfig(source=source, t=t, lb=t - halfwidth, ub=t + halfwidth)


def compute_vdvi(image: np.ndarray) -> np.ndarray:
    """Visible Difference Vegetation Index, (2G - R - B) / (2G + R + B).

    Expects an (H, W, 3) RGB image in [0, 1]; returns an (H, W) plane in
    [-1, 1]. Pixels whose denominator is ~0 (black) map to 0.
    """
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ChannelMismatch("VDVI requires a 3-channel RGB image")
    r = img[:, :, 0].astype(np.float64)
    g = img[:, :, 1].astype(np.float64)
    b = img[:, :, 2].astype(np.float64)
    num = 2.0 * g - r - b
    den = 2.0 * g + r + b
    out = np.where(den < 1e-9, 0.0, num / np.where(den < 1e-9, 1.0, den))
    return np.clip(out, -1.0, 1.0).astype(np.float32)


def alpha_from_mask(v, cfg: MaskConfig):
    """Map mask value(s) to alpha in [0, 1]; works on scalars and arrays.

    v <= lb -> 1, v >= ub -> 0, linear in between. With lb == ub the
    ramp degenerates to a step (<= lb -> 1, above -> 0).
    """
    v_arr = np.asarray(v, dtype=np.float64)
    if cfg.lb == cfg.ub:
        out = np.where(v_arr <= cfg.lb, 1.0, 0.0)
    else:
        out = np.clip((cfg.ub - v_arr) / (cfg.ub - cfg.lb), 0.0, 1.0)
    if np.isscalar(v) or v_arr.ndim == 0:
        return float(out)
    return out.astype(np.float32)


def mask_plane_for(capture, cfg: MaskConfig) -> np.ndarray:
    """Resolve the configured mask source to an (H, W) value plane."""
    if cfg.source == VDVI_SOURCE:
        if capture.image.ndim != 3 or capture.image.shape[2] != 3:
            raise SourceUnavailable("vdvi mask requires RGB captures")
        return compute_vdvi(capture.image)
    if capture.aux_mask is None:
        raise SourceUnavailable(f"capture has no auxiliary mask channel for source {cfg.source!r}")
    return capture.aux_mask


def build_alpha_masks(session, cfg: MaskConfig):
    """Return a new session whose captures carry alpha planes per cfg.

    cfg.source == "none" clears all masks. The mapping is applied to
    each capture individually, so every capture gets its own alpha.
    """
    from .engine import Capture, CaptureSession

    captures = []
    alphas = []
    for cap in session.captures:
        if cfg.source == NO_SOURCE:
            alpha = None
        else:
            alpha = alpha_from_mask(mask_plane_for(cap, cfg), cfg)
            alphas.append(alpha)
        captures.append(Capture(cap.image, cap.pose, cap.intrinsics, alpha=alpha, aux_mask=cap.aux_mask))
    alpha_stack = None
    if len(alphas) == len(captures) and len({a.shape for a in alphas}) == 1:
        alpha_stack = np.stack(alphas)
        captures = [Capture(c.image, c.pose, c.intrinsics, alpha=alpha_stack[i], aux_mask=c.aux_mask)
                    for i, c in enumerate(captures)]
    return CaptureSession(captures, metadata=dict(session.metadata),
                          image_stack=getattr(session, "_image_stack", None),
                          alpha_stack=alpha_stack)
