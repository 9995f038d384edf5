"""Integral-image rendering over a capture set.

For every output pixel the engine casts a ray from the virtual camera,
intersects it with the focal surface, projects the hit point into each
capture, and takes a bilinear sample there. Sampling is premultiplied:
each texel's bilinear coefficient is scaled by its alpha, the sample
weight is the sum of those scaled coefficients, and the pixel value is
the weight-normalized average over all in-frustum samples. A fully
masked texel therefore contributes nothing, even as an interpolation
neighbor. The summed weight is kept as a per-pixel coverage plane;
pixels whose coverage falls below EPS_COVERAGE are invalid: rendered
black and excluded from metrics.

Accumulation runs in double precision and in capture order per pixel,
so renders are bit-reproducible regardless of how many worker threads
the kernel uses. Out-of-bounds samples contribute nothing (no edge
clamping), which keeps coverage honest near frustum borders.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels
from .errors import BadGeometry, ChannelMismatch, EmptySession, IndexOutOfRange
from .geometry import (MIN_DEPTH, FocalSurfaceParams, Intrinsics, Pose,
                       surface_from_world)

# Below this summed weight a pixel is invalid rather than amplified noise.
EPS_COVERAGE = 1e-4


class Capture:
    """One narrow-aperture image with its pose and intrinsics.

    image: (H, W, C) float32 in [0, 1], C in {1, 3}
    alpha: optional (H, W) float32 in [0, 1] integration weights
    aux_mask: optional (H, W) float32 in [-1, 1] external mask channel
    """

    __slots__ = ("image", "pose", "intrinsics", "alpha", "aux_mask")

    def __init__(self, image, pose: Pose, intrinsics: Intrinsics, alpha=None, aux_mask=None):
        image = np.ascontiguousarray(image, dtype=np.float32)
        if image.ndim == 2:
            image = image[:, :, None]
        if image.ndim != 3 or image.shape[2] not in (1, 3):
            raise ValueError(f"image must be (H, W, C) with C in {{1, 3}}, got {image.shape}")
        if image.shape[0] != intrinsics.height or image.shape[1] != intrinsics.width:
            raise ValueError(
                f"image dims {image.shape[:2]} do not match intrinsics "
                f"{(intrinsics.height, intrinsics.width)}")
        if alpha is not None:
            alpha = np.ascontiguousarray(alpha, dtype=np.float32)
            if alpha.shape != image.shape[:2]:
                raise ValueError("alpha dims must match image dims")
        if aux_mask is not None:
            aux_mask = np.ascontiguousarray(aux_mask, dtype=np.float32)
            if aux_mask.shape != image.shape[:2]:
                raise ValueError("aux_mask dims must match image dims")
        self.image = image
        self.pose = pose
        self.intrinsics = intrinsics
        self.alpha = alpha
        self.aux_mask = aux_mask

    @property
    def channels(self) -> int:
        return self.image.shape[2]


class CaptureSession:
    """Ordered list of captures plus free-form metadata.

    ``image_stack``/``alpha_stack`` optionally hand over the contiguous
    (N, H, W, C) / (N, H, W) arrays the captures are views into, letting
    the kernel use them without re-packing (matters for 300-capture
    sessions).
    """

    def __init__(self, captures, metadata=None, image_stack=None, alpha_stack=None):
        captures = list(captures)
        if not captures:
            raise EmptySession("a session needs at least one capture")
        c0 = captures[0].channels
        for i, cap in enumerate(captures):
            if cap.channels != c0:
                raise ChannelMismatch(f"capture {i} has {cap.channels} channels, expected {c0}")
        self.captures = captures
        self.metadata = dict(metadata or {})
        if image_stack is not None:
            assert image_stack.shape[0] == len(captures) and image_stack.flags["C_CONTIGUOUS"]
        if alpha_stack is not None:
            assert alpha_stack.shape[0] == len(captures) and alpha_stack.flags["C_CONTIGUOUS"]
        self._image_stack = image_stack
        self._alpha_stack = alpha_stack
        self._packed = None

    def __len__(self) -> int:
        return len(self.captures)

    @property
    def channels(self) -> int:
        return self.captures[0].channels

    def _pack(self):
        """Flat sample buffers + per-capture tables for the kernel (cached)."""
        if self._packed is not None:
            return self._packed
        n = len(self.captures)
        nch = self.channels
        img_off = np.zeros(n, dtype=np.int64)
        alp_off = np.full(n, -1, dtype=np.int64)
        dims = np.zeros((n, 2), dtype=np.int64)
        kmat = np.zeros((n, 4), dtype=np.float64)
        rwc = np.zeros((n, 3, 3), dtype=np.float64)
        twc = np.zeros((n, 3), dtype=np.float64)
        img_parts = []
        alpha_parts = []
        pos = 0
        apos = 0
        for i, cap in enumerate(self.captures):
            k = cap.intrinsics
            dims[i] = (k.height, k.width)
            kmat[i] = (k.fx, k.fy, k.cx, k.cy)
            rwc[i] = cap.pose.rotation.T
            twc[i] = -cap.pose.rotation.T @ cap.pose.translation
            img_off[i] = pos
            img_parts.append(cap.image.reshape(-1))
            pos += cap.image.size
            if cap.alpha is not None:
                alp_off[i] = apos
                alpha_parts.append(cap.alpha.reshape(-1))
                apos += cap.alpha.size
        if self._image_stack is not None:
            buf = self._image_stack.reshape(-1)
        else:
            buf = np.concatenate(img_parts) if len(img_parts) > 1 else img_parts[0]
        if self._alpha_stack is not None:
            alpha_buf = self._alpha_stack.reshape(-1)
        elif alpha_parts:
            alpha_buf = np.concatenate(alpha_parts)
        else:
            alpha_buf = np.zeros(1, dtype=np.float32)
        self._packed = (buf, img_off, alpha_buf, alp_off, dims, kmat, rwc, twc, nch)
        return self._packed


class VirtualCamera:
    """Free-flying camera the integral image is rendered from."""

    __slots__ = ("intrinsics", "pose")

    def __init__(self, intrinsics: Intrinsics, pose: Pose):
        self.intrinsics = intrinsics
        self.pose = pose


class IntegralImage:
    """Averaged color planes + coverage (sum of weights) + the params used."""

    __slots__ = ("color", "coverage", "params_echo")

    def __init__(self, color, coverage, params_echo: FocalSurfaceParams):
        self.color = color
        self.coverage = coverage
        self.params_echo = params_echo

    @property
    def valid(self) -> np.ndarray:
        """Boolean plane of pixels with enough coverage to be meaningful."""
        return self.coverage >= EPS_COVERAGE


# Ray directions depend only on the camera, not the surface; caching them
# keeps interactive focus drags (same camera, new surface every message)
# off the meshgrid/normalize path.
_RAY_CACHE: dict = {}
_RAY_CACHE_MAX = 8


def _camera_rays(vcam: VirtualCamera) -> np.ndarray:
    k = vcam.intrinsics
    key = (k.fx, k.fy, k.cx, k.cy, k.width, k.height,
           vcam.pose.rotation.tobytes(), vcam.pose.translation.tobytes())
    hit = _RAY_CACHE.get(key)
    if hit is not None:
        return hit
    uu, vv = np.meshgrid(np.arange(k.width, dtype=np.float64),
                         np.arange(k.height, dtype=np.float64))
    d_cam = np.stack([(uu - k.cx) / k.fx, (vv - k.cy) / k.fy, np.ones_like(uu)], axis=-1)
    d_world = d_cam.reshape(-1, 3) @ vcam.pose.rotation.T
    d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
    d_world.setflags(write=False)
    if len(_RAY_CACHE) >= _RAY_CACHE_MAX:
        _RAY_CACHE.pop(next(iter(_RAY_CACHE)))
    _RAY_CACHE[key] = d_world
    return d_world


def surface_hit_grid(vcam: VirtualCamera, surf: FocalSurfaceParams, ref_pose: Pose):
    """Per-pixel focal-surface intersection points for a whole camera.

    Vectorized version of pixel_ray + intersect_surface over the output
    grid. Returns ((H*W, 3) float64 world points, (H*W,) uint8 valid).
    """
    d_world = _camera_rays(vcam)
    origin = vcam.pose.translation

    m_inv = surface_from_world(surf, ref_pose)
    o_can = m_inv[:3, :3] @ origin + m_inv[:3, 3]

    if _kernels.HAVE_NUMBA and not _kernels.FORCE_NUMPY:
        npix = d_world.shape[0]
        points = np.empty((npix, 3), dtype=np.float64)
        valid = np.empty(npix, dtype=np.uint8)
        _kernels.hit_grid_kernel(d_world, np.ascontiguousarray(m_inv[:3, :3]),
                                 o_can, origin, points, valid)
        return points, valid

    d_can = d_world @ m_inv[:3, :3].T
    a = np.einsum("ij,ij->i", d_can, d_can)
    b = 2.0 * (d_can @ o_can)
    c = float(o_can @ o_can) - 1.0
    disc = b * b - 4.0 * a * c
    has_roots = disc >= 0.0
    sq = np.sqrt(np.where(has_roots, disc, 0.0))
    t_lo = (-b - sq) / (2.0 * a)
    t_hi = (-b + sq) / (2.0 * a)

    z_lo = o_can[2] + t_lo * d_can[:, 2]
    z_hi = o_can[2] + t_hi * d_can[:, 2]
    lo_ok = has_roots & (t_lo > 1e-9) & (z_lo >= 0.0)
    hi_ok = has_roots & (t_hi > 1e-9) & (z_hi >= 0.0)
    t = np.where(lo_ok, t_lo, t_hi)
    valid = lo_ok | hi_ok

    points = origin + t[:, None] * d_world
    points[~valid] = 0.0
    return points, valid.astype(np.uint8)


def _shift_offsets(session, vcam: VirtualCamera, points, valid, i0, i1):
    """Per-capture constant sample offsets, or None if not applicable.

    Valid when every capture shares the virtual camera's orientation and
    focal lengths and the focal surface is fronto-parallel to them; then
    capture i samples at (px + du[i], py + dv[i]) for every pixel. The
    constancy is verified on a probe grid to 1e-7 px, which bounds the
    color deviation from the exact per-pixel projection far below one
    8-bit quantization step.
    """
    if os.environ.get("PEERSA_NO_FASTPATH", "") == "1":
        return None
    k = vcam.intrinsics
    rv = vcam.pose.rotation
    caps = session.captures[i0:i1]
    for cap in caps:
        ki = cap.intrinsics
        if ki.fx != k.fx or ki.fy != k.fy:
            return None
        if not np.array_equal(cap.pose.rotation, rv):
            return None
    h, w = k.height, k.width
    ys = np.array([0, h // 2, h - 1])
    xs = np.array([0, w // 2, w - 1])
    probe_idx = (ys[:, None] * w + xs[None, :]).reshape(-1)
    if not np.all(valid[probe_idx]):
        return None
    probes = points[probe_idx]
    pu = np.tile(xs, 3).astype(np.float64)
    pv = np.repeat(ys, 3).astype(np.float64)
    # batched over captures: (N,3,3) world-to-camera applied to 9 probes
    rwc = np.stack([cap.pose.rotation.T for cap in caps])
    tw = -np.einsum("nij,nj->ni", rwc, np.stack([cap.pose.translation for cap in caps]))
    cam = np.einsum("nij,pj->npi", rwc, probes) + tw[:, None, :]
    if np.any(cam[:, :, 2] <= MIN_DEPTH):
        return None
    kf = np.array([(c.intrinsics.fx, c.intrinsics.fy, c.intrinsics.cx, c.intrinsics.cy)
                   for c in caps])
    us = kf[:, 0:1] * cam[:, :, 0] / cam[:, :, 2] + kf[:, 2:3] - pu[None, :]
    vs = kf[:, 1:2] * cam[:, :, 1] / cam[:, :, 2] + kf[:, 3:4] - pv[None, :]
    if (us.max(axis=1) - us.min(axis=1)).max() > 1e-7 \
            or (vs.max(axis=1) - vs.min(axis=1)).max() > 1e-7:
        return None
    du = us[:, 4].copy()
    dv = vs[:, 4].copy()
    # Snap offsets that are integral up to round-off so edge texels keep
    # exact unit weights (mirrors the general path's edge tolerance).
    near_int = np.abs(du - np.rint(du)) < 1e-9
    du[near_int] = np.rint(du[near_int])
    near_int = np.abs(dv - np.rint(dv)) < 1e-9
    dv[near_int] = np.rint(dv[near_int])
    return du, dv


def _finalize(acc, cov, h, w, nch, surf) -> IntegralImage:
    if _kernels.HAVE_NUMBA and not _kernels.FORCE_NUMPY:
        color = np.empty((h * w, nch), dtype=np.float32)
        cov32 = np.empty(h * w, dtype=np.float32)
        _kernels.finalize_kernel(acc, cov, EPS_COVERAGE, color, cov32)
        return IntegralImage(color.reshape(h, w, nch), cov32.reshape(h, w), surf)
    cov_img = cov.reshape(h, w)
    ok = cov_img >= EPS_COVERAGE
    color = acc.reshape(h, w, nch)
    color = np.where(ok[:, :, None], color / np.where(ok, cov_img, 1.0)[:, :, None], 0.0)
    color = np.clip(color, 0.0, 1.0).astype(np.float32)
    return IntegralImage(color, cov_img.astype(np.float32), surf)


def _render_range(session, vcam, surf, ref_pose, i0, i1) -> IntegralImage:
    points, valid = surface_hit_grid(vcam, surf, ref_pose)
    buf, img_off, alpha_buf, alp_off, dims, kmat, rwc, twc, nch = session._pack()
    k = vcam.intrinsics
    use_jit = _kernels.HAVE_NUMBA and not _kernels.FORCE_NUMPY
    shift = _shift_offsets(session, vcam, points, valid, i0, i1) if use_jit else None
    if shift is not None:
        du, dv = shift
        npix = points.shape[0]
        acc = np.zeros((npix, nch), dtype=np.float64)
        cov = np.zeros(npix, dtype=np.float64)
        full_du = np.zeros(len(session))
        full_dv = np.zeros(len(session))
        full_du[i0:i1] = du
        full_dv[i0:i1] = dv
        all_valid = 1 if valid.all() else 0
        _kernels.integrate_shift(valid, all_valid, buf, img_off, alpha_buf, alp_off, dims,
                                 full_du, full_dv, nch, i0, i1, k.height, k.width, acc, cov)
    else:
        acc, cov = _kernels.integrate(points, valid, buf, img_off, alpha_buf, alp_off,
                                      dims, kmat, rwc, twc, nch, i0, i1)
    return _finalize(acc, cov, k.height, k.width, nch, surf)


def render_integral(session: CaptureSession, vcam: VirtualCamera,
                    surf: FocalSurfaceParams, ref_pose: Pose) -> IntegralImage:
    """Project every capture onto the focal surface and average.

    Weights come from capture alpha planes when present (1 otherwise);
    summation runs in capture order, accumulated in double precision.
    """
    if not isinstance(session, CaptureSession) or len(session) == 0:
        raise EmptySession("render_integral needs a non-empty session")
    return _render_range(session, vcam, surf, ref_pose, 0, len(session))


def render_pinhole(session: CaptureSession, index: int, vcam: VirtualCamera,
                   surf: FocalSurfaceParams, ref_pose: Pose) -> IntegralImage:
    """Integral restricted to a single capture (pinhole-aperture browsing)."""
    if not (0 <= index < len(session)):
        raise IndexOutOfRange(f"capture index {index} outside [0, {len(session)})")
    return _render_range(session, vcam, surf, ref_pose, index, index + 1)


def blur_footprint(surf_depth: float, occ_depth: float, sa_width: float, k: Intrinsics) -> float:
    """Image-space parallax span (pixels) of an out-of-focus occluder point.

    An occluder at occ_depth, seen while focused at surf_depth across a
    synthetic aperture sa_width wide, is smeared over
    fx * sa * (surf - occ) / (occ * surf) pixels.
    """
    if occ_depth <= 0 or surf_depth <= 0:
        raise BadGeometry("depths must be positive")
    if occ_depth >= surf_depth:
        raise BadGeometry("occluder must be nearer than the focal surface")
    if sa_width < 0:
        raise BadGeometry("aperture width must be non-negative")
    return k.fx * sa_width * (surf_depth - occ_depth) / (occ_depth * surf_depth)
