"""Sharpness-driven selection of the focal distance.

The focus measure is the mean squared gradient magnitude (central
differences) of the luma plane over a region of interest, evaluated on
valid pixels only. The depth search sweeps 32 log-spaced distances and
then refines the bracketing triple with golden-section steps; only the
z parameter moves, all other surface parameters come from a template.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import CaptureSession, IntegralImage, VirtualCamera, render_integral
from .errors import InsufficientCoverage, NoContrast
from .geometry import FocalSurfaceParams, Pose

LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])

COARSE_STEPS = 32
BRACKET_REL = 0.005  # refine until the bracket is below 0.5% of z
MIN_METRIC = 1e-12


@dataclass(frozen=True)
class RoI:
    """Rectangle in output-pixel coordinates."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0 or self.w <= 0 or self.h <= 0:
            raise ValueError("RoI must have non-negative origin and positive size")
        if self.w * self.h < 64:
            raise ValueError("RoI must cover at least 64 pixels")

    def slices(self):
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)


def centered_roi(width: int, height: int, frac: float = 0.5) -> RoI:
    w = max(8, int(width * frac))
    h = max(8, int(height * frac))
    return RoI((width - w) // 2, (height - h) // 2, w, h)


def luma(color: np.ndarray) -> np.ndarray:
    if color.shape[2] == 1:
        return color[:, :, 0].astype(np.float64)
    return color.astype(np.float64) @ LUMA_WEIGHTS


def focus_metric(img: IntegralImage, roi: RoI) -> float:
    """Mean squared gradient magnitude over valid RoI pixels."""
    h, w = img.color.shape[:2]
    if roi.x + roi.w > w or roi.y + roi.h > h:
        raise ValueError(f"RoI {roi} exceeds the {w}x{h} image")
    ys, xs = roi.slices()
    valid = img.valid[ys, xs]
    if valid.mean() < 0.5:
        raise InsufficientCoverage(
            f"only {valid.mean():.0%} of the RoI has valid coverage (need >= 50%)")
    lum = luma(img.color)
    gy, gx = np.gradient(lum)
    sq = (gx[ys, xs] ** 2 + gy[ys, xs] ** 2)[valid]
    return float(sq.mean())


def autofocus_depth(session: CaptureSession, vcam: VirtualCamera, roi: RoI,
                    z_min: float, z_max: float,
                    surf_template: FocalSurfaceParams,
                    ref_pose: Pose) -> float:
    """Depth z* in [z_min, z_max] maximizing the focus metric.

    Coarse log-spaced sweep, then golden-section refinement on the
    bracketing triple. Deterministic for fixed inputs.
    """
    if not (0 < z_min < z_max):
        raise ValueError("need 0 < z_min < z_max")

    def measure(z: float) -> float:
        img = render_integral(session, vcam, surf_template.replace(z=z), ref_pose)
        return focus_metric(img, roi)

    zs = np.geomspace(z_min, z_max, COARSE_STEPS)
    metrics = [measure(z) for z in zs]
    best = int(np.argmax(metrics))
    if metrics[best] < MIN_METRIC:
        raise NoContrast(f"best coarse focus metric {metrics[best]:.3g} is below {MIN_METRIC}")

    lo = zs[max(best - 1, 0)]
    hi = zs[min(best + 1, COARSE_STEPS - 1)]
    best_z = float(zs[best])
    best_m = metrics[best]

    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = measure(c), measure(d)
    while (b - a) >= BRACKET_REL * best_z:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = measure(c)
            cand_z, cand_m = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = measure(d)
            cand_z, cand_m = d, fd
        if cand_m > best_m:
            best_m, best_z = cand_m, float(cand_z)
    return float(min(max(best_z, z_min), z_max))
