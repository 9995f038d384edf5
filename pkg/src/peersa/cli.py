"""Command-line entry points.

Subcommands: render, sweep, autofocus, simulate, adapt, serve. Angles
are degrees on the command line and radians internally; surface flags
take a comma list of key=value pairs using the interactive parameter
names (z, tx, ty, rx, ry, rz, sx, sy, sz).

Exit codes: 0 success, 2 usage error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import math
import sys
import time

from . import dataset as dio
from . import errors, sim
from .engine import VirtualCamera, render_integral, render_pinhole
from .focus import RoI, autofocus_depth, centered_roi
from .geometry import FocalSurfaceParams
from .masking import NO_SOURCE, MaskConfig, build_alpha_masks

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

_DATA_ERRORS = (errors.ManifestMissing, errors.ImageMissing, errors.PoseInvalid,
                errors.MixedChannels, errors.IoFailure)

_ANGLE_KEYS = ("rx", "ry", "rz")


def parse_surface(spec: str | None, base: FocalSurfaceParams) -> FocalSurfaceParams:
    """Parse 'z=5,sx=1e4,rz=90' (angles in degrees) over a base."""
    if not spec:
        return base
    kw = {}
    for item in spec.split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise ValueError(f"surface item {item!r} is not key=value")
        key, val = item.split("=", 1)
        key = key.strip().lower()
        if key == "grid":
            kw["grid"] = val.strip().lower() in ("1", "true", "yes", "on")
            continue
        if key not in ("z", "tx", "ty", "rx", "ry", "rz", "sx", "sy", "sz"):
            raise ValueError(f"unknown surface parameter {key!r}")
        x = float(val)
        if key in _ANGLE_KEYS:
            x = math.radians(x)
        kw[key] = x
    return base.replace(**kw)


def parse_densities(spec: str) -> list[float]:
    """'0.1:0.9:0.1' range or '0.1,0.3,0.5' list."""
    if ":" in spec:
        lo, hi, step = (float(x) for x in spec.split(":"))
        n = int(round((hi - lo) / step)) + 1
        return [round(lo + i * step, 10) for i in range(n)]
    return [float(x) for x in spec.split(",")]


def _mask_from_args(args) -> MaskConfig | None:
    if args.mask is None or args.mask == NO_SOURCE:
        return None
    t = args.t if args.t is not None else 0.05
    lb = args.lb if args.lb is not None else t - 0.05
    ub = args.ub if args.ub is not None else t + 0.05
    return MaskConfig(source=args.mask, t=t, lb=lb, ub=ub)


def _load(args):
    session, defaults = dio.load_session(args.dataset)
    return session, defaults


def cmd_render(args) -> int:
    session, defaults = _load(args)
    surf = parse_surface(args.surface, defaults.surface)
    mask = _mask_from_args(args)
    if mask is not None:
        session = build_alpha_masks(session, mask)
    center = len(session) // 2
    ref = session.captures[center].pose
    vcam = VirtualCamera(session.captures[center].intrinsics, ref)
    t0 = time.perf_counter()
    if args.aperture == "pinhole":
        img = render_pinhole(session, args.index, vcam, surf, ref)
    else:
        img = render_integral(session, vcam, surf, ref)
    dt_ms = (time.perf_counter() - t0) * 1e3
    dio.export_image(img, args.out, mask_cfg=mask, bit_depth=args.bits)
    print(f"render time: {dt_ms:.1f} ms")
    print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    densities = parse_densities(args.densities)
    traj = sim.TrajectorySpec(args.motion, args.sa, args.n)
    cfg = sim.SceneConfig(seed=args.seed, width=args.width, height=args.height)
    mask = None if args.no_mask else sim.ORACLE_MASK
    rows = sim.density_sweep(densities, traj, cfg,
                             seeds=[args.seed + i for i in range(args.seeds)], mask=mask)
    sim.sweep_to_csv(rows, args.out)
    means = sim.mean_improvement(rows)
    for d in densities:
        print(f"density {d:.2f}: mean improvement {means[d]:+.2f} dB")
    print(f"wrote {args.out}")
    return 0


def cmd_autofocus(args) -> int:
    session, defaults = _load(args)
    center = len(session) // 2
    ref = session.captures[center].pose
    k = session.captures[center].intrinsics
    vcam = VirtualCamera(k, ref)
    if args.roi:
        x, y, w, h = (int(v) for v in args.roi.split(","))
        roi = RoI(x, y, w, h)
    else:
        roi = centered_roi(k.width, k.height)
    template = parse_surface(args.surface, sim.plane_surface(args.zmin).replace(z=args.zmin))
    z = autofocus_depth(session, vcam, roi, args.zmin, args.zmax, template, ref)
    print(f"z* = {z:.4f} m")
    return 0


def cmd_simulate(args) -> int:
    cfg = sim.SceneConfig(density=args.density, seed=args.seed, shape=args.shape,
                          width=args.width, height=args.height)
    scene = sim.generate_scene(cfg)
    traj = sim.TrajectorySpec(args.motion, args.sa, args.n)
    poses = sim.generate_trajectory(traj)
    channels = 1 if args.band in ("nir", "fir", "reg", "mono") else 3
    session = sim.render_views(scene, poses, channels=channels)
    session.metadata["band"] = args.band
    session.metadata["sa_width_m"] = args.sa
    defaults = dio.SessionDefaults(surface=sim.plane_surface(scene.d_bg),
                                   mask=MaskConfig())
    dio.save_session(session, args.out, defaults=defaults, band=args.band)
    print(f"wrote session with {len(session)} captures to {args.out} "
          f"(measured density {scene.measured_density:.3f})")
    return 0


def cmd_adapt(args) -> int:
    out = dio.adapt_dataset(args.src, args.dst, sa_width_hint=args.sa_hint)
    print(f"wrote adapted dataset to {out}")
    return 0


def cmd_serve(args) -> int:
    from . import service

    if args.dataset:
        session, defaults = _load(args)
    else:
        session, defaults = None, None
        print("no dataset given; serving the bundled synthetic scene")
    service.serve(session, defaults, host=args.bind, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="peersa",
                                description="Synthetic-aperture integral imaging tools")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="render an integral or pinhole image from a dataset")
    r.add_argument("--dataset", required=True, help="dataset directory (contains session.json)")
    r.add_argument("--surface", help="focal surface, comma list of key=value "
                                     "(z,tx,ty in m; rx,ry,rz in degrees; sx,sy,sz in m)")
    r.add_argument("--mask", help="mask source: vdvi, none, or an aux channel id")
    r.add_argument("--t", type=float, help="mask central threshold, in [-1,1]")
    r.add_argument("--lb", type=float, help="mask lower bound (alpha 1 at or below), in [-1,1]")
    r.add_argument("--ub", type=float, help="mask upper bound (alpha 0 at or above), in [-1,1]")
    r.add_argument("--aperture", choices=["open", "pinhole"], default="open",
                   help="open = integrate all captures, pinhole = single capture")
    r.add_argument("--index", type=int, default=0, help="capture index for pinhole mode")
    r.add_argument("--bits", type=int, choices=[8, 16], default=8, help="output PNG bit depth")
    r.add_argument("--out", required=True, help="output PNG path")
    r.set_defaults(func=cmd_render)

    s = sub.add_parser("sweep", help="occlusion-density sweep on the simulator")
    s.add_argument("--densities", default="0.1:0.9:0.1",
                   help="lo:hi:step range or comma list, fractions in [0,1]")
    s.add_argument("--seeds", type=int, default=3, help="number of seeds to average")
    s.add_argument("--seed", type=int, default=0, help="first seed value")
    s.add_argument("--motion", default="horizontal",
                   choices=["horizontal", "vertical", "diagonal", "planar-grid", "rotation"],
                   help="peering pattern")
    s.add_argument("--sa", type=float, default=0.15, help="synthetic aperture width in m")
    s.add_argument("--n", type=int, default=20, help="number of captures")
    s.add_argument("--width", type=int, default=640, help="image width in px")
    s.add_argument("--height", type=int, default=480, help="image height in px")
    s.add_argument("--no-mask", action="store_true",
                   help="integrate without occluder masking (plain averaging)")
    s.add_argument("--out", required=True, help="output CSV path")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("autofocus", help="search the focal distance maximizing sharpness")
    a.add_argument("--dataset", required=True, help="dataset directory")
    a.add_argument("--roi", help="x,y,w,h region in output pixels (default: centered box)")
    a.add_argument("--zmin", type=float, required=True, help="search lower bound in m")
    a.add_argument("--zmax", type=float, required=True, help="search upper bound in m")
    a.add_argument("--surface", help="surface template overrides (same syntax as render)")
    a.set_defaults(func=cmd_autofocus)

    m = sub.add_parser("simulate", help="generate a synthetic dataset (normative manifest)")
    m.add_argument("--motion", default="horizontal",
                   choices=["horizontal", "vertical", "diagonal", "planar-grid", "rotation"],
                   help="peering pattern")
    m.add_argument("--sa", type=float, default=0.15, help="synthetic aperture width in m")
    m.add_argument("--n", type=int, default=20, help="number of captures")
    m.add_argument("--density", type=float, default=0.5, help="occlusion density in [0,1]")
    m.add_argument("--shape", default="disks", choices=["disks", "horizontal-bar", "random-rects"],
                   help="occluder shape")
    m.add_argument("--seed", type=int, default=0, help="scene seed")
    m.add_argument("--width", type=int, default=640, help="image width in px")
    m.add_argument("--height", type=int, default=480, help="image height in px")
    m.add_argument("--band", default="rgb", choices=list(dio.BANDS), help="spectral band tag")
    m.add_argument("--out", required=True, help="output dataset directory")
    m.set_defaults(func=cmd_simulate)

    d = sub.add_parser("adapt", help="convert a poses.txt + images/ layout to a dataset")
    d.add_argument("--src", required=True, help="source directory")
    d.add_argument("--dst", required=True, help="destination dataset directory")
    d.add_argument("--sa-hint", type=float, help="expected aperture span in m "
                                                 "(disambiguates the pose convention)")
    d.set_defaults(func=cmd_adapt)

    v = sub.add_parser("serve", help="start the interactive render service")
    v.add_argument("--dataset", help="dataset directory (default: bundled synthetic scene)")
    v.add_argument("--port", type=int, default=8977, help="listen port")
    v.add_argument("--bind", help="bind address (default 127.0.0.1; env PEERSA_BIND overrides)")
    v.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except errors.PeersaError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
