"""Synthetic two-plane scenes with known ground truth.

The scene is a textured background plane at d_bg meters and an opaque
occluder layer at d_occ meters whose coverage fraction (the occlusion
density) is controlled to within +/-2%. Everything is deterministic for
a fixed seed, so the simulator doubles as the brute-force oracle for the
integration engine: it can render any pinhole view, the occluder-free
ground truth, and per-view occluder-fraction planes that serve as exact
occlusion masks.

Occluders live in a boolean occupancy grid on the occluder plane (1 mm
cells by default); density is measured as the covered fraction of the
reference camera's frustum footprint on that plane. The background
texture is a band-limited random plaid (sum of smooth sinusoids), gray
across channels so that vegetation-index masking of the green occluders
stays clean; a hard checkerboard is available as an alternative.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .engine import Capture, CaptureSession, IntegralImage, VirtualCamera, render_integral, render_pinhole
from .errors import DensityUnreachable, LimitExceeded, NoValidPixels
from .geometry import FocalSurfaceParams, Intrinsics, Pose, rot_y
from .masking import MaskConfig, build_alpha_masks

# Mechanical peering limits of the carrier platform (meters).
LIMIT_HORIZONTAL = 0.30
LIMIT_VERTICAL = 0.20

DENSITY_TOL = 0.02

# Plane-like focal surface: a thin, very wide dome whose apex sits at
# exactly the requested depth.
PLANE_SZ = 1e-3
PLANE_SXY = 1e4

# Exact occluder masking from the simulator's per-view occluder-fraction
# planes (aux values are 2*fraction - 1). The degenerate band acts as a
# step: only pixels whose fraction is exactly zero stay opaque, so no
# occluder energy survives masked integration.
ORACLE_MASK = MaskConfig(source="oracle", t=-1.0, lb=-1.0, ub=-1.0)


def default_intrinsics(width: int = 640, height: int = 480, f: float = 500.0) -> Intrinsics:
    return Intrinsics(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def plane_surface(depth: float) -> FocalSurfaceParams:
    """Focal surface approximating a frontal plane at the given depth."""
    return FocalSurfaceParams(z=depth - PLANE_SZ, sx=PLANE_SXY, sy=PLANE_SXY, sz=PLANE_SZ)


@dataclass(frozen=True)
class SceneConfig:
    density: float = 0.5
    seed: int = 0
    shape: str = "disks"  # disks | horizontal-bar | random-rects
    d_occ: float = 1.0
    d_bg: float = 5.0
    disk_radius: float = 0.004  # meters on the occluder plane
    occluder_color: tuple = (0.17, 0.52, 0.18)
    texture: str = "plaid"  # plaid | checker
    texture_rms: float = 0.13
    width: int = 640
    height: int = 480
    focal_px: float = 500.0

    def __post_init__(self):
        if not (0.0 <= self.density <= 1.0):
            raise ValueError("density must be in [0, 1]")
        if not (0.0 < self.d_occ < self.d_bg):
            raise ValueError("need 0 < d_occ < d_bg")
        if self.shape not in ("disks", "horizontal-bar", "random-rects"):
            raise ValueError(f"unknown occluder shape {self.shape!r}")
        if self.texture not in ("plaid", "checker"):
            raise ValueError(f"unknown texture {self.texture!r}")


class SyntheticScene:
    """Generated occupancy + texture grids with their plane geometry."""

    def __init__(self, cfg, intrinsics, occ, occ_origin, occ_cell,
                 tex, tex_origin, tex_cell, measured_density):
        self.cfg = cfg
        self.intrinsics = intrinsics
        self.occ = occ
        self.occ_origin = occ_origin  # (x0, y0) of grid cell (0, 0)
        self.occ_cell = occ_cell
        self.tex = tex
        self.tex_origin = tex_origin
        self.tex_cell = tex_cell
        self.measured_density = measured_density
        self.d_occ = cfg.d_occ
        self.d_bg = cfg.d_bg
        self.occ_color = np.asarray(cfg.occluder_color, dtype=np.float64)


def _footprint_half(depth: float, k: Intrinsics) -> tuple[float, float]:
    return depth * (k.width / 2.0) / k.fx, depth * (k.height / 2.0) / k.fy


def _build_texture(cfg: SceneConfig, rng: np.random.Generator, k: Intrinsics):
    hx, hy = _footprint_half(cfg.d_bg, k)
    half_x = hx * 1.3 + 0.6
    half_y = hy * 1.3 + 0.6
    cell = 0.6 * cfg.d_bg / k.fx  # fraction of a pixel footprint at the plane
    nx = int(math.ceil(2 * half_x / cell)) + 1
    ny = int(math.ceil(2 * half_y / cell)) + 1
    xs = -half_x + cell * np.arange(nx)
    ys = -half_y + cell * np.arange(ny)
    xx, yy = np.meshgrid(xs, ys)
    if cfg.texture == "checker":
        tile = 0.35
        tex = np.where(((np.floor(xx / tile) + np.floor(yy / tile)) % 2) == 0, 0.35, 0.65)
    else:
        ncomp = 12
        # Wavelengths of 8..24 output pixels keep the texture smooth at
        # the sampling scale, which is what bounds the resampling floor.
        lam_px = rng.uniform(8.0, 24.0, ncomp)
        lam = lam_px * cfg.d_bg / k.fx
        theta = rng.uniform(0.0, np.pi, ncomp)
        phase = rng.uniform(0.0, 2 * np.pi, ncomp)
        amps = rng.uniform(0.5, 1.0, ncomp)
        amps *= cfg.texture_rms / math.sqrt(float(np.sum(amps ** 2)) / 2.0)
        tex = np.full(xx.shape, 0.5)
        for a, l, th, ph in zip(amps, lam, theta, phase):
            tex += a * np.cos(2 * np.pi * (xx * np.cos(th) + yy * np.sin(th)) / l + ph)
        tex = np.clip(tex, 0.02, 0.98)
    return tex.astype(np.float32), (-half_x, -half_y), cell


def generate_scene(cfg: SceneConfig) -> SyntheticScene:
    """Deterministic scene for a config; density hit within +/-2%."""
    rng = np.random.default_rng(cfg.seed)
    k = default_intrinsics(cfg.width, cfg.height, cfg.focal_px)
    tex, tex_origin, tex_cell = _build_texture(cfg, rng, k)

    hx, hy = _footprint_half(cfg.d_occ, k)
    margin = 0.45
    half_x = hx + margin
    half_y = hy + margin
    cell = 0.001
    gw = int(math.ceil(2 * half_x / cell))
    gh = int(math.ceil(2 * half_y / cell))
    occ = np.zeros((gh, gw), dtype=np.uint8)
    origin = (-half_x, -half_y)

    # Measurement rectangle: the reference camera's footprint, in cells.
    rr0 = int(round((-hy - origin[1]) / cell))
    rr1 = int(round((hy - origin[1]) / cell))
    cc0 = int(round((-hx - origin[0]) / cell))
    cc1 = int(round((hx - origin[0]) / cell))
    rect = (rr0, rr1, cc0, cc1)
    rect_area = (rr1 - rr0) * (cc1 - cc0)

    target = cfg.density
    if target >= 1.0:
        occ[:, :] = 1
        measured = 1.0
    elif target <= 0.0:
        measured = 0.0
    elif cfg.shape == "horizontal-bar":
        bar_h = target * (rr1 - rr0)
        mid = (rr0 + rr1) / 2.0
        b0 = int(round(mid - bar_h / 2.0))
        b1 = int(round(mid + bar_h / 2.0))
        occ[b0:b1, :] = 1
        measured = (min(b1, rr1) - max(b0, rr0)) / (rr1 - rr0)
    else:
        covered = 0
        stalled = 0
        r_px = cfg.disk_radius / cell
        is_rect = cfg.shape == "random-rects"
        target_cells = int(math.ceil(target * rect_area))
        while covered < target_cells:
            chunk = 20000
            cands = np.stack([rng.uniform(0, gh, chunk), rng.uniform(0, gw, chunk)], axis=1)
            if is_rect:
                half_h = rng.uniform(1.0, 3.0, chunk) * r_px
                half_w = rng.uniform(1.0, 3.0, chunk) * r_px
            else:
                half_h = np.full(chunk, r_px)
                half_w = np.full(chunk, r_px)
            covered, _, stalled = _kernels.place_shapes(
                occ, cands, half_h, half_w, is_rect,
                rect[0], rect[1], rect[2], rect[3], target_cells, covered, stalled)
            if stalled >= 10000:
                raise DensityUnreachable(
                    f"density {target} unreachable: 10000 placements added no coverage "
                    f"(reached {covered / rect_area:.3f})")
        measured = covered / rect_area

    if abs(measured - target) > DENSITY_TOL:
        raise DensityUnreachable(
            f"measured density {measured:.3f} outside +/-{DENSITY_TOL} of {target}")
    return SyntheticScene(cfg, k, occ, origin, cell, tex, tex_origin, tex_cell, measured)


# ---------------------------------------------------------------------------
# Peering trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectorySpec:
    kind: str  # horizontal | vertical | diagonal | planar-grid | rotation
    sa_width: float
    count: int
    pivot_offset: float = 0.5  # meters behind the reference camera (rotation)
    limits: bool = True

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.sa_width < 0:
            raise ValueError("sa_width must be >= 0")
        if self.kind not in ("horizontal", "vertical", "diagonal", "planar-grid", "rotation"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")


# Diagonal shifts follow the 3:2 slope of the mechanical envelope.
_DIAG_DIR = np.array([0.3, 0.2, 0.0]) / np.hypot(0.3, 0.2)


def _lin_centers(n: int, span: float) -> np.ndarray:
    if n == 1:
        return np.zeros(1)
    return np.linspace(-span / 2.0, span / 2.0, n)


def generate_trajectory(spec: TrajectorySpec) -> list[Pose]:
    """Ordered capture poses, centered on the reference camera at the origin.

    Lateral shifts keep the orientation fixed; the rotation pattern sweeps
    an arc about a pivot behind the reference camera with the orientation
    turning along the arm, its chord equal to sa_width.
    """
    kind = spec.kind
    if kind in ("horizontal", "vertical", "diagonal"):
        s = _lin_centers(spec.count, spec.sa_width)
        if kind == "horizontal":
            centers = np.stack([s, np.zeros_like(s), np.zeros_like(s)], axis=1)
        elif kind == "vertical":
            centers = np.stack([np.zeros_like(s), s, np.zeros_like(s)], axis=1)
        else:
            centers = s[:, None] * _DIAG_DIR[None, :]
        poses = [Pose(np.eye(3), c) for c in centers]
    elif kind == "planar-grid":
        cols = max(1, int(round(math.sqrt(spec.count * 1.5))))
        rows = int(math.ceil(spec.count / cols))
        xs = _lin_centers(cols, spec.sa_width)
        ys = _lin_centers(rows, spec.sa_width * 2.0 / 3.0)
        poses = []
        for y in ys:
            for x in xs:
                poses.append(Pose(np.eye(3), np.array([x, y, 0.0])))
                if len(poses) == spec.count:
                    break
            if len(poses) == spec.count:
                break
    else:  # rotation
        r = spec.pivot_offset
        if r <= 0:
            raise ValueError("pivot_offset must be positive for rotation")
        if spec.sa_width > 2 * r:
            raise ValueError("sa_width exceeds the rotation diameter")
        theta = 2.0 * math.asin(spec.sa_width / (2.0 * r))
        phis = _lin_centers(spec.count, theta)
        poses = []
        for phi in phis:
            center = np.array([r * math.sin(phi), 0.0, r * math.cos(phi) - r])
            poses.append(Pose(rot_y(phi), center))

    centers = np.array([p.translation for p in poses])
    ext = centers.max(axis=0) - centers.min(axis=0) if len(poses) > 1 else np.zeros(3)
    if spec.limits:
        if ext[0] > LIMIT_HORIZONTAL + 1e-9:
            raise LimitExceeded(f"horizontal extent {ext[0]:.3f} m exceeds {LIMIT_HORIZONTAL} m")
        if ext[1] > LIMIT_VERTICAL + 1e-9:
            raise LimitExceeded(f"vertical extent {ext[1]:.3f} m exceeds {LIMIT_VERTICAL} m")
    return poses


def perturb_centers(poses, sigma: float, rng: np.random.Generator) -> list[Pose]:
    """Gaussian jitter on camera centers (pose noise stand-in, off by default)."""
    return [Pose(p.rotation, p.translation + rng.normal(0.0, sigma, 3)) for p in poses]


# ---------------------------------------------------------------------------
# Oracle rendering
# ---------------------------------------------------------------------------

def _pose_arrays(poses):
    rcw = np.stack([p.rotation for p in poses]).astype(np.float64)
    centers = np.stack([p.translation for p in poses]).astype(np.float64)
    return np.ascontiguousarray(rcw), np.ascontiguousarray(centers)


def _render_raw(scene: SyntheticScene, poses, k: Intrinsics, channels: int, with_occluders: bool):
    rcw, centers = _pose_arrays(poses)
    return _kernels.render_views_raw(
        rcw, centers, k.fx, k.fy, k.cx, k.cy, k.width, k.height, channels,
        scene.occ, scene.occ_origin[0], scene.occ_origin[1], scene.occ_cell,
        1 if with_occluders else 0,
        scene.tex, scene.tex_origin[0], scene.tex_origin[1], scene.tex_cell,
        scene.occ_color, scene.d_occ, scene.d_bg)


def render_views(scene: SyntheticScene, poses, k: Intrinsics | None = None,
                 channels: int = 3) -> CaptureSession:
    """Pinhole views of the scene along the trajectory (2x2 supersampled).

    Each capture carries its exact occluder-fraction plane as an
    auxiliary mask channel (values 2*fraction - 1 in [-1, 1]) so masked
    integration can be driven by ground truth.
    """
    k = k or scene.intrinsics
    imgs, fracs = _render_raw(scene, poses, k, channels, True)
    aux = fracs * 2.0 - 1.0
    captures = [
        Capture(imgs[i], poses[i], k, aux_mask=aux[i])
        for i in range(len(poses))
    ]
    meta = {
        "generator": "peersa-sim",
        "density": scene.cfg.density,
        "measured_density": scene.measured_density,
        "seed": scene.cfg.seed,
        "d_occ": scene.d_occ,
        "d_bg": scene.d_bg,
        "occluder_shape": scene.cfg.shape,
    }
    return CaptureSession(captures, metadata=meta, image_stack=imgs)


def render_background(scene: SyntheticScene, vcam: VirtualCamera, channels: int = 3) -> np.ndarray:
    """Ground-truth, occluder-free view of the background plane."""
    imgs, _ = _render_raw(scene, [vcam.pose], vcam.intrinsics, channels, False)
    return imgs[0]


def occluder_fraction(scene: SyntheticScene, pose: Pose, k: Intrinsics) -> np.ndarray:
    """Per-pixel occluder cover fraction of a single view, in [0, 1]."""
    _, fracs = _render_raw(scene, [pose], k, 1, True)
    return fracs[0]


def shadow_mask(scene: SyntheticScene, pose: Pose, k: Intrinsics) -> np.ndarray:
    """Pixels mostly covered by an occluder in the given view."""
    return occluder_fraction(scene, pose, k) > 0.5


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RecoveryMetrics:
    psnr_bg: float
    residual_occ: float
    valid_fraction: float


# Reconstructions at or above this PSNR are resampling-limited; scores
# saturate here so that ratios between essentially perfect images do not
# masquerade as improvements (a pinhole view rendered from its own
# capture pose is bit-exact, i.e. nominally infinite PSNR).
PSNR_SATURATION_DB = 50.0


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images."""
    diff = (np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2
    if mask is not None:
        if not mask.any():
            raise NoValidPixels("empty mask for PSNR")
        diff = diff[mask]
    mse = float(diff.mean())
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


def evaluate_recovery(integral: IntegralImage, scene: SyntheticScene,
                      vcam: VirtualCamera) -> RecoveryMetrics:
    """Score an integral image against the scene's ground truth.

    psnr_bg runs over valid pixels vs. the occluder-free background
    render; residual_occ is the mean absolute error over pixels that the
    virtual camera's own view shows as occluder-shadowed.
    """
    channels = integral.color.shape[2]
    gt = render_background(scene, vcam, channels)
    valid = integral.valid
    if not valid.any():
        raise NoValidPixels("integral image has no valid pixels")
    psnr_bg = min(psnr(integral.color, gt, valid), PSNR_SATURATION_DB)
    shadow = shadow_mask(scene, vcam.pose, vcam.intrinsics)
    region = shadow & valid
    if region.any():
        residual = float(np.abs(integral.color - gt).mean(axis=2)[region].mean())
    else:
        residual = 0.0
    return RecoveryMetrics(psnr_bg=psnr_bg, residual_occ=residual,
                           valid_fraction=float(valid.mean()))


# ---------------------------------------------------------------------------
# Density sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    density: float
    seed: int
    psnr_single: float
    psnr_integral: float

    @property
    def improvement_db(self) -> float:
        return self.psnr_integral - self.psnr_single


def run_case(scene: SyntheticScene, traj: TrajectorySpec,
             mask: MaskConfig | None = ORACLE_MASK,
             surf: FocalSurfaceParams | None = None,
             channels: int = 3):
    """Render the trajectory over a scene and score single vs. integral.

    The single-view baseline is the raw central pinhole view; the
    integral uses the given mask config (exact oracle masks by default,
    None for plain averaging). Returns (single_metrics, integral_metrics).
    """
    poses = generate_trajectory(traj)
    session = render_views(scene, poses, channels=channels)
    center = len(poses) // 2
    vcam = VirtualCamera(scene.intrinsics, poses[center])
    ref = Pose.identity()
    surf = surf or plane_surface(scene.d_bg)
    single = render_pinhole(session, center, vcam, surf, ref)
    m_single = evaluate_recovery(single, scene, vcam)
    if mask is not None:
        session = build_alpha_masks(session, mask)
    integral = render_integral(session, vcam, surf, ref)
    m_integral = evaluate_recovery(integral, scene, vcam)
    return m_single, m_integral


def density_sweep(densities, traj: TrajectorySpec, scene_cfg: SceneConfig,
                  surf: FocalSurfaceParams | None = None,
                  seeds=(0, 1, 2), mask: MaskConfig | None = ORACLE_MASK) -> list[SweepRow]:
    """Sweep occlusion density, scoring improvement per (density, seed)."""
    densities = list(densities)
    if any(b < a for a, b in zip(densities, densities[1:])):
        raise ValueError("densities must be sorted ascending")
    rows = []
    for d in densities:
        for seed in seeds:
            cfg = replace(scene_cfg, density=float(d), seed=int(seed))
            scene = generate_scene(cfg)
            m1, m2 = run_case(scene, traj, mask=mask, surf=surf)
            rows.append(SweepRow(float(d), int(seed), m1.psnr_bg, m2.psnr_bg))
    return rows


def sweep_to_csv(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["density", "seed", "psnr_single", "psnr_integral", "improvement_db"])
        for r in rows:
            w.writerow([f"{r.density:g}", r.seed, f"{r.psnr_single:.6f}",
                        f"{r.psnr_integral:.6f}", f"{r.improvement_db:.6f}"])


def mean_improvement(rows) -> dict[float, float]:
    """Seed-averaged improvement per density."""
    acc: dict[float, list[float]] = {}
    for r in rows:
        acc.setdefault(r.density, []).append(r.improvement_db)
    return {d: float(np.mean(v)) for d, v in acc.items()}
