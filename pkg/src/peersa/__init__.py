"""Synthetic-aperture integral imaging from peering camera motion.

Many narrow-aperture images captured along a short side-to-side
trajectory are reprojected onto a parametric focal surface and averaged,
emulating a lens as wide as the swept path. Foreground occluders melt
into defocus blur (or are masked away entirely) while the focused
background stays sharp.
"""

from .engine import (Capture, CaptureSession, IntegralImage, VirtualCamera,
                     blur_footprint, render_integral, render_pinhole)
from .errors import PeersaError
from .focus import RoI, autofocus_depth, focus_metric
from .geometry import (FocalSurfaceParams, Intrinsics, Pose, Ray,
                       intersect_surface, pixel_ray, project_point,
                       surface_to_world)
from .masking import MaskConfig, alpha_from_mask, build_alpha_masks, compute_vdvi

__version__ = "0.1.0"

__all__ = [
    "Capture", "CaptureSession", "IntegralImage", "VirtualCamera",
    "blur_footprint", "render_integral", "render_pinhole",
    "PeersaError",
    "RoI", "autofocus_depth", "focus_metric",
    "FocalSurfaceParams", "Intrinsics", "Pose", "Ray",
    "intersect_surface", "pixel_ray", "project_point", "surface_to_world",
    "MaskConfig", "alpha_from_mask", "build_alpha_masks", "compute_vdvi",
    "__version__",
]
