"""Camera model, poses, rays, and the parametric focal surface.

Coordinate conventions
----------------------
World and camera frames are right-handed. The camera frame is the usual
computer-vision one: x-right, y-down, z-forward (the camera looks along
+z). A :class:`Pose` stores the camera-to-world rotation and the camera
center in world coordinates, so ``p_world = R @ p_cam + t``.

Pixel coordinates are continuous; integer ``(u, v)`` falls on a pixel
center and ``(0, 0)`` is the top-left pixel. ``u`` grows to the right,
``v`` grows downward.

Focal surface
-------------
The focal surface is a unit half-sphere ``{x^2 + y^2 + z^2 = 1, z >= 0}``
with the dome apex pointing toward +z (deeper into the scene). It is
placed in a reference frame by scaling (sx, sy, sz), rotating
(Rz @ Ry @ Rx), and finally translating by (tx, ty, z); a positive z
pushes the surface forward, and large sx/sy flatten the dome toward a
plane at depth ``z + sz`` near the axis. Rotation order and the
scale-then-rotate-then-translate composition are normative here; angles
are radians throughout this module.

All functions are pure and operate on immutable inputs, so they are safe
to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, DegenerateScale

# Tolerances shared with the rest of the package.
MIN_DEPTH = 1e-9
MIN_SCALE = 1e-9
ORTHO_TOL = 1e-6


def _as_float_array(x, shape, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width):
            raise ValueError("cx must lie within [0, width)")
        if not (0 <= self.cy < self.height):
            raise ValueError("cy must lie within [0, height)")


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rotation + camera center (meters)."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        r = _as_float_array(self.rotation, (3, 3), "rotation")
        t = _as_float_array(self.translation, (3,), "translation")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        err = np.abs(r.T @ r - np.eye(3)).max()
        if err > ORTHO_TOL:
            raise ValueError(f"rotation is not orthonormal (|R'R - I| = {err:.2e})")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation must be proper (det = +1)")

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        """4x4 camera-to-world transform."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class FocalSurfaceParams:
    """Placement of the half-sphere focal surface in the reference frame.

    z shifts the surface forward (meters, positive into the scene),
    tx/ty translate it laterally, rx/ry/rz rotate it (radians), and
    sx/sy/sz scale the unit dome (meters). ``grid`` only toggles the
    surface-grid visualization and has no geometric effect.
    """

    z: float = 4.0
    tx: float = 0.0
    ty: float = 0.0
    rx: float = 0.0
    ry: float = 0.0
    rz: float = 0.0
    sx: float = 1.0
    sy: float = 1.0
    sz: float = 1.0
    grid: bool = False

    def __post_init__(self):
        if self.sx <= 0 or self.sy <= 0 or self.sz <= 0:
            raise ValueError("scale factors must be positive")

    def replace(self, **kw) -> "FocalSurfaceParams":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass(frozen=True)
class Ray:
    """Origin + unit direction in world coordinates."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = _as_float_array(self.origin, (3,), "origin")
        d = _as_float_array(self.direction, (3,), "direction")
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"direction must be unit length (|d| = {n})")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


def rotation_zyx(rx: float, ry: float, rz: float) -> np.ndarray:
    """Rz @ Ry @ Rx, the rotation applied to the canonical surface."""
    return rot_z(rz) @ rot_y(ry) @ rot_x(rx)


def project_point(p, pose: Pose, k: Intrinsics) -> tuple[float, float, float]:
    """Project a world point into a camera; returns (u, v, depth).

    The returned pixel coordinates may lie outside the image; the caller
    is responsible for bounds checks.

    Raises BehindCamera when the camera-frame depth is <= MIN_DEPTH.
    """
    p = np.asarray(p, dtype=np.float64)
    pc = pose.rotation.T @ (p - pose.translation)
    z = pc[2]
    if z <= MIN_DEPTH:
        raise BehindCamera(f"point depth {z:.3g} m is not in front of the camera")
    u = k.fx * pc[0] / z + k.cx
    v = k.fy * pc[1] / z + k.cy
    return float(u), float(v), float(z)


def pixel_ray(k: Intrinsics, pose: Pose, u: float, v: float) -> Ray:
    """Back-project a pixel to a world-space ray through the camera center."""
    d_cam = np.array([(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0])
    d_world = pose.rotation @ d_cam
    d_world = d_world / np.linalg.norm(d_world)
    return Ray(pose.translation.copy(), d_world)


def surface_to_world(params: FocalSurfaceParams, ref_pose: Pose) -> np.ndarray:
    """4x4 transform taking canonical half-sphere coords to world coords.

    world = ref_pose . Translate(tx, ty, z) . Rz Ry Rx . Scale(sx, sy, sz)
    """
    rs = rotation_zyx(params.rx, params.ry, params.rz)
    a = rs * np.array([params.sx, params.sy, params.sz])  # R @ diag(s)
    m = np.eye(4)
    m[:3, :3] = ref_pose.rotation @ a
    m[:3, 3] = ref_pose.rotation @ np.array([params.tx, params.ty, params.z]) + ref_pose.translation
    return m


def surface_from_world(params: FocalSurfaceParams, ref_pose: Pose) -> np.ndarray:
    """Exact inverse of :func:`surface_to_world`, assembled analytically."""
    if min(params.sx, params.sy, params.sz) < MIN_SCALE:
        raise DegenerateScale("focal surface scale below invertibility threshold")
    rs = rotation_zyx(params.rx, params.ry, params.rz)
    # (R_ref @ Rs @ S)^-1 = S^-1 @ Rs' @ R_ref'
    a_inv = (1.0 / np.array([params.sx, params.sy, params.sz]))[:, None] * (rs.T @ ref_pose.rotation.T)
    t = ref_pose.rotation @ np.array([params.tx, params.ty, params.z]) + ref_pose.translation
    m = np.eye(4)
    m[:3, :3] = a_inv
    m[:3, 3] = -a_inv @ t
    return m


def intersect_surface(ray: Ray, params: FocalSurfaceParams, ref_pose: Pose):
    """First intersection of a ray with the focal surface, or None.

    The ray is mapped into canonical space, the ray/unit-sphere quadratic
    is solved there, and among real roots with t > MIN_DEPTH and
    canonical z >= 0 the smallest t wins. The camera sees the concave
    front side of the dome, so that nearest sheet is the focused one.
    """
    m_inv = surface_from_world(params, ref_pose)
    a3 = m_inv[:3, :3]
    o = a3 @ ray.origin + m_inv[:3, 3]
    d = a3 @ ray.direction
    # |o + t d|^2 = 1; the affine map preserves the ray parameter t.
    a = float(d @ d)
    b = 2.0 * float(o @ d)
    c = float(o @ o) - 1.0
    disc = b * b - 4.0 * a * c
    if disc < 0.0 or a == 0.0:
        return None
    sq = np.sqrt(disc)
    for t in sorted(((-b - sq) / (2 * a), (-b + sq) / (2 * a))):
        if t > MIN_DEPTH and o[2] + t * d[2] >= 0.0:
            return ray.origin + t * ray.direction
    return None
