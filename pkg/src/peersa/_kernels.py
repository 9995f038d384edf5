"""JIT-compiled inner loops for integration and simulator rendering.

The integration kernel accumulates per output pixel in float64, in fixed
capture order, and each pixel's work is self-contained. That makes the
result bit-identical regardless of the parallel worker count. A pure
numpy twin (`integrate_numpy`) implements the exact same arithmetic in
the same per-pixel order and is used as a cross-check and as a fallback
when numba is unavailable (env PEERSA_FORCE_NUMPY=1 forces it).
"""

from __future__ import annotations

import os

import numpy as np

FORCE_NUMPY = os.environ.get("PEERSA_FORCE_NUMPY", "") == "1"

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*a, **k):
        def deco(f):
            return f

        return deco

    prange = range

_MIN_DEPTH = 1e-9
# Tolerance for samples landing epsilon outside the pixel-center domain
# purely from floating-point round trips; anything further out is skipped.
_EDGE_TOL = 1e-6


_TILE = 8192  # pixels per tile; keeps the f64 accumulators cache-resident


@njit(cache=True, parallel=True)
def _integrate_jit(points, valid, buf, img_off, alpha_buf, alp_off,
                   dims, kmat, rwc, twc, nch, i0, i1, acc, cov):
    # Tiles of pixels form the parallel outer loop (disjoint outputs),
    # captures the middle loop; per pixel the accumulation happens in
    # capture order, so the result does not depend on how the tiles are
    # split across workers.
    npix = points.shape[0]
    ntiles = (npix + _TILE - 1) // _TILE
    for t in prange(ntiles):
        p0 = t * _TILE
        p1 = min(npix, p0 + _TILE)
        for i in range(i0, i1):
            h = dims[i, 0]
            w = dims[i, 1]
            if w < 2 or h < 2:
                continue
            fx = kmat[i, 0]
            fy = kmat[i, 1]
            cx = kmat[i, 2]
            cy = kmat[i, 3]
            # Intrinsics folded into the world-to-camera rows.
            a00 = fx * rwc[i, 0, 0]
            a01 = fx * rwc[i, 0, 1]
            a02 = fx * rwc[i, 0, 2]
            b0 = fx * twc[i, 0]
            a10 = fy * rwc[i, 1, 0]
            a11 = fy * rwc[i, 1, 1]
            a12 = fy * rwc[i, 1, 2]
            b1 = fy * twc[i, 1]
            r20 = rwc[i, 2, 0]
            r21 = rwc[i, 2, 1]
            r22 = rwc[i, 2, 2]
            t2 = twc[i, 2]
            ioff = img_off[i]
            aoff = alp_off[i]
            row = w * nch
            for p in range(p0, p1):
                if valid[p] == 0:
                    continue
                x = points[p, 0]
                y = points[p, 1]
                z = points[p, 2]
                zc = r20 * x + r21 * y + r22 * z + t2
                if zc <= _MIN_DEPTH:
                    continue
                inv_z = 1.0 / zc
                u = (a00 * x + a01 * y + a02 * z + b0) * inv_z + cx
                v = (a10 * x + a11 * y + a12 * z + b1) * inv_z + cy
                if u < -_EDGE_TOL or u > w - 1 + _EDGE_TOL \
                        or v < -_EDGE_TOL or v > h - 1 + _EDGE_TOL:
                    continue
                if u < 0.0:
                    u = 0.0
                if u > w - 1:
                    u = float(w - 1)
                if v < 0.0:
                    v = 0.0
                if v > h - 1:
                    v = float(h - 1)
                x0 = int(np.floor(u))
                y0 = int(np.floor(v))
                if x0 > w - 2:
                    x0 = w - 2
                if y0 > h - 2:
                    y0 = h - 2
                fu = u - x0
                fv = v - y0
                w00 = (1.0 - fu) * (1.0 - fv)
                w01 = fu * (1.0 - fv)
                w10 = (1.0 - fu) * fv
                w11 = fu * fv
                if aoff >= 0:
                    # Premultiplied-alpha sampling: fully masked texels
                    # contribute nothing, even as interpolation neighbors.
                    ab = aoff + y0 * w + x0
                    w00 *= alpha_buf[ab]
                    w01 *= alpha_buf[ab + 1]
                    w10 *= alpha_buf[ab + w]
                    w11 *= alpha_buf[ab + w + 1]
                wgt = (w00 + w01) + (w10 + w11)
                if wgt <= 0.0:
                    continue
                base = ioff + (y0 * w + x0) * nch
                for ch in range(nch):
                    val = (w00 * buf[base + ch] + w01 * buf[base + nch + ch]) \
                        + (w10 * buf[base + row + ch] + w11 * buf[base + row + nch + ch])
                    acc[p, ch] += val
                cov[p] += wgt


def integrate_numpy(points, valid, buf, img_off, alpha_buf, alp_off,
                    dims, kmat, rwc, twc, nch, i0, i1, acc, cov):
    """Vectorized reference path; bit-for-bit the same arithmetic as the
    JIT kernel, in the same per-pixel capture order."""
    pts = points[valid != 0]
    idx = np.nonzero(valid != 0)[0]
    acc_v = np.zeros((pts.shape[0], nch), dtype=np.float64)
    cov_v = np.zeros(pts.shape[0], dtype=np.float64)
    for i in range(i0, i1):
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        zc = rwc[i, 2, 0] * x + rwc[i, 2, 1] * y + rwc[i, 2, 2] * z + twc[i, 2]
        ok = zc > _MIN_DEPTH
        fx, fy = kmat[i, 0], kmat[i, 1]
        inv_z = 1.0 / np.where(ok, zc, 1.0)
        u = ((fx * rwc[i, 0, 0]) * x + (fx * rwc[i, 0, 1]) * y + (fx * rwc[i, 0, 2]) * z
             + fx * twc[i, 0]) * inv_z + kmat[i, 2]
        v = ((fy * rwc[i, 1, 0]) * x + (fy * rwc[i, 1, 1]) * y + (fy * rwc[i, 1, 2]) * z
             + fy * twc[i, 1]) * inv_z + kmat[i, 3]
        h, w = int(dims[i, 0]), int(dims[i, 1])
        if h < 2 or w < 2:
            continue
        ok &= (u >= -_EDGE_TOL) & (u <= w - 1 + _EDGE_TOL) & (v >= -_EDGE_TOL) & (v <= h - 1 + _EDGE_TOL)
        if not ok.any():
            continue
        u = np.clip(u, 0.0, float(w - 1))
        v = np.clip(v, 0.0, float(h - 1))
        x0 = np.minimum(np.floor(u).astype(np.int64), w - 2)
        y0 = np.minimum(np.floor(v).astype(np.int64), h - 2)
        fu = u - x0
        fv = v - y0
        w00 = (1.0 - fu) * (1.0 - fv)
        w01 = fu * (1.0 - fv)
        w10 = (1.0 - fu) * fv
        w11 = fu * fv
        if alp_off[i] >= 0:
            ab = alp_off[i] + y0 * w + x0
            ab = np.where(ok, ab, alp_off[i])
            w00 = w00 * alpha_buf[ab].astype(np.float64)
            w01 = w01 * alpha_buf[ab + 1].astype(np.float64)
            w10 = w10 * alpha_buf[ab + w].astype(np.float64)
            w11 = w11 * alpha_buf[ab + w + 1].astype(np.float64)
        wgt = np.where(ok, (w00 + w01) + (w10 + w11), 0.0)
        contrib = wgt > 0.0
        base = img_off[i] + (y0 * w + x0) * nch
        base = np.where(ok, base, img_off[i])
        row = w * nch
        for ch in range(nch):
            val = (w00 * buf[base + ch].astype(np.float64) + w01 * buf[base + nch + ch].astype(np.float64)) \
                + (w10 * buf[base + row + ch].astype(np.float64) + w11 * buf[base + row + nch + ch].astype(np.float64))
            acc_v[:, ch] += np.where(contrib, val, 0.0)
        cov_v += np.where(contrib, wgt, 0.0)
    acc[idx] = acc_v
    cov[idx] = cov_v


def integrate(points, valid, buf, img_off, alpha_buf, alp_off,
              dims, kmat, rwc, twc, nch, i0, i1):
    npix = points.shape[0]
    acc = np.zeros((npix, nch), dtype=np.float64)
    cov = np.zeros(npix, dtype=np.float64)
    fn = _integrate_jit if (HAVE_NUMBA and not FORCE_NUMPY) else integrate_numpy
    fn(points, valid, buf, img_off, alpha_buf, alp_off,
       dims, kmat, rwc, twc, nch, i0, i1, acc, cov)
    return acc, cov


_ROWBLOCK = 32


@njit(cache=True, parallel=True)
def hit_grid_kernel(d_world, a3, o_can, origin, points, valid):
    """Ray/unit-sphere quadratic in canonical space for every pixel ray;
    smallest positive root on the front hemisphere wins."""
    npix = d_world.shape[0]
    ox, oy, oz = o_can[0], o_can[1], o_can[2]
    c = ox * ox + oy * oy + oz * oz - 1.0
    for p in prange(npix):
        dwx = d_world[p, 0]
        dwy = d_world[p, 1]
        dwz = d_world[p, 2]
        dx = a3[0, 0] * dwx + a3[0, 1] * dwy + a3[0, 2] * dwz
        dy = a3[1, 0] * dwx + a3[1, 1] * dwy + a3[1, 2] * dwz
        dz = a3[2, 0] * dwx + a3[2, 1] * dwy + a3[2, 2] * dwz
        a = dx * dx + dy * dy + dz * dz
        b = 2.0 * (dx * ox + dy * oy + dz * oz)
        disc = b * b - 4.0 * a * c
        ok = False
        t = 0.0
        if disc >= 0.0:
            sq = np.sqrt(disc)
            t_lo = (-b - sq) / (2.0 * a)
            t_hi = (-b + sq) / (2.0 * a)
            if t_lo > _MIN_DEPTH and oz + t_lo * dz >= 0.0:
                ok = True
                t = t_lo
            elif t_hi > _MIN_DEPTH and oz + t_hi * dz >= 0.0:
                ok = True
                t = t_hi
        if ok:
            valid[p] = 1
            points[p, 0] = origin[0] + t * dwx
            points[p, 1] = origin[1] + t * dwy
            points[p, 2] = origin[2] + t * dwz
        else:
            valid[p] = 0
            points[p, 0] = 0.0
            points[p, 1] = 0.0
            points[p, 2] = 0.0


@njit(cache=True, parallel=True)
def finalize_kernel(acc, cov, eps, color, cov32):
    """acc/cov -> clipped float32 color + float32 coverage planes."""
    npix, nch = acc.shape
    for p in prange(npix):
        c = cov[p]
        cov32[p] = np.float32(c)
        if c >= eps:
            inv = 1.0 / c
            for ch in range(nch):
                v = acc[p, ch] * inv
                if v < 0.0:
                    v = 0.0
                if v > 1.0:
                    v = 1.0
                color[p, ch] = np.float32(v)
        else:
            for ch in range(nch):
                color[p, ch] = np.float32(0.0)


@njit(cache=True, parallel=True)
def integrate_shift(valid, all_valid, buf, img_off, alpha_buf, alp_off, dims,
                    du, dv, nch, i0, i1, out_h, out_w, acc, cov):
    """Shift-and-add path: per capture the sample position is the output
    pixel plus a constant (du, dv), so the bilinear weights are capture
    constants and sampling degenerates to streaming weighted adds. Only
    used when the caller has verified that constancy; per pixel the
    capture order is unchanged, so results stay worker-count independent.
    """
    nblocks = (out_h + _ROWBLOCK - 1) // _ROWBLOCK
    for blk in prange(nblocks):
        y_lo = blk * _ROWBLOCK
        y_hi = min(out_h, y_lo + _ROWBLOCK)
        # Unmasked captures add a constant weight over a column interval
        # per row; those go in as interval deltas and one cumsum per row
        # instead of per-pixel adds (only sound when every pixel counts).
        use_delta = all_valid != 0
        cov_delta = np.zeros((y_hi - y_lo, out_w + 1)) if use_delta else np.zeros((1, 1))
        for i in range(i0, i1):
            h = dims[i, 0]
            w = dims[i, 1]
            if w < 2 or h < 2:
                continue
            dx = int(np.floor(du[i]))
            dy = int(np.floor(dv[i]))
            # Interpolation runs in float32 (the sample dtype); only the
            # accumulators are double.
            fu = np.float32(du[i] - dx)
            fv = np.float32(dv[i] - dy)
            one = np.float32(1.0)
            w00 = (one - fu) * (one - fv)
            w01 = fu * (one - fv)
            w10 = (one - fu) * fv
            w11 = fu * fv
            wgt_const = np.float64((w00 + w01) + (w10 + w11))
            # Sample column/row ranges inside the capture; when the
            # fractional part is zero the far texel has zero weight and
            # may alias onto the near one at the very edge.
            x1off = 1 if fu > 0.0 else 0
            y1off = 1 if fv > 0.0 else 0
            px_lo = max(0, -dx)
            px_hi = min(out_w - 1, w - 1 - x1off - dx)
            py_lo = max(y_lo, -dy)
            py_hi = min(y_hi - 1, h - 1 - y1off - dy)
            if px_lo > px_hi or py_lo > py_hi:
                continue
            ioff = img_off[i]
            aoff = alp_off[i]
            row = w * nch
            x1n = x1off * nch
            y1r = y1off * row
            y1w = y1off * w
            for py in range(py_lo, py_hi + 1):
                prow = py * out_w
                base_row = ioff + ((py + dy) * w + dx) * nch
                if aoff >= 0:
                    a_row = aoff + (py + dy) * w + dx
                    for px in range(px_lo, px_hi + 1):
                        p = prow + px
                        if all_valid == 0 and valid[p] == 0:
                            continue
                        ab = a_row + px
                        aw00 = w00 * alpha_buf[ab]
                        aw01 = w01 * alpha_buf[ab + x1off]
                        aw10 = w10 * alpha_buf[ab + y1w]
                        aw11 = w11 * alpha_buf[ab + y1w + x1off]
                        wgt = (aw00 + aw01) + (aw10 + aw11)
                        if wgt <= 0.0:
                            continue
                        base = base_row + px * nch
                        for ch in range(nch):
                            val = (aw00 * buf[base + ch] + aw01 * buf[base + x1n + ch]) \
                                + (aw10 * buf[base + y1r + ch] + aw11 * buf[base + y1r + x1n + ch])
                            acc[p, ch] += np.float64(val)
                        cov[p] += np.float64(wgt)
                elif nch == 3 and use_delta:
                    cov_delta[py - y_lo, px_lo] += wgt_const
                    cov_delta[py - y_lo, px_hi + 1] -= wgt_const
                    for px in range(px_lo, px_hi + 1):
                        p = prow + px
                        base = base_row + px * 3
                        acc[p, 0] += np.float64((w00 * buf[base] + w01 * buf[base + x1n])
                                                + (w10 * buf[base + y1r] + w11 * buf[base + y1r + x1n]))
                        acc[p, 1] += np.float64((w00 * buf[base + 1] + w01 * buf[base + x1n + 1])
                                                + (w10 * buf[base + y1r + 1] + w11 * buf[base + y1r + x1n + 1]))
                        acc[p, 2] += np.float64((w00 * buf[base + 2] + w01 * buf[base + x1n + 2])
                                                + (w10 * buf[base + y1r + 2] + w11 * buf[base + y1r + x1n + 2]))
                elif use_delta:
                    cov_delta[py - y_lo, px_lo] += wgt_const
                    cov_delta[py - y_lo, px_hi + 1] -= wgt_const
                    for px in range(px_lo, px_hi + 1):
                        p = prow + px
                        base = base_row + px * nch
                        for ch in range(nch):
                            val = (w00 * buf[base + ch] + w01 * buf[base + x1n + ch]) \
                                + (w10 * buf[base + y1r + ch] + w11 * buf[base + y1r + x1n + ch])
                            acc[p, ch] += np.float64(val)
                else:
                    for px in range(px_lo, px_hi + 1):
                        p = prow + px
                        if valid[p] == 0:
                            continue
                        base = base_row + px * nch
                        for ch in range(nch):
                            val = (w00 * buf[base + ch] + w01 * buf[base + x1n + ch]) \
                                + (w10 * buf[base + y1r + ch] + w11 * buf[base + y1r + x1n + ch])
                            acc[p, ch] += np.float64(val)
                        cov[p] += wgt_const
        if use_delta:
            for ly in range(y_hi - y_lo):
                prow = (y_lo + ly) * out_w
                running = 0.0
                for px in range(out_w):
                    running += cov_delta[ly, px]
                    cov[prow + px] += running


@njit(cache=True)
def place_shapes(occ, cands, half_h, half_w, is_rect,
                 rr0, rr1, cc0, cc1, target_cells, covered0, stalled0):
    """Stamp shapes until `target_cells` of the measure rect are covered.

    Consumes pre-drawn candidate centers in order; returns
    (covered, consumed, stalled) where `stalled` counts consecutive
    zero-gain stamps (10000 of them aborts the caller).
    """
    gh, gw = occ.shape
    covered = covered0
    stalled = stalled0
    used = 0
    for m in range(cands.shape[0]):
        if covered >= target_cells or stalled >= 10000:
            break
        used += 1
        cy = cands[m, 0]
        cx = cands[m, 1]
        hy = half_h[m]
        hx = half_w[m]
        r0 = max(0, int(np.floor(cy - hy)))
        r1 = min(gh, int(np.ceil(cy + hy)) + 1)
        c0 = max(0, int(np.floor(cx - hx)))
        c1 = min(gw, int(np.ceil(cx + hx)) + 1)
        gained = 0
        for r in range(r0, r1):
            dy = r - cy
            for c in range(c0, c1):
                if occ[r, c] != 0:
                    continue
                dx = c - cx
                if is_rect:
                    inside = (-hy <= dy <= hy) and (-hx <= dx <= hx)
                else:
                    inside = dy * dy + dx * dx <= hy * hx
                if inside:
                    occ[r, c] = 1
                    if rr0 <= r < rr1 and cc0 <= c < cc1:
                        gained += 1
        covered += gained
        if gained == 0:
            stalled += 1
        else:
            stalled = 0
    return covered, used, stalled


# ---------------------------------------------------------------------------
# Simulator two-plane scene renderer: occluder occupancy grid at d_occ,
# textured background plane at d_bg, 2x2 supersampling per pixel.
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def _render_views_jit(rcw, centers, fx, fy, cx, cy, width, height, nch,
                      occ, ox0, oy0, ocell, use_occ,
                      tex, tx0, ty0, tcell,
                      occ_color, d_occ, d_bg, out_img, out_frac):
    nviews = rcw.shape[0]
    gh, gw = occ.shape
    th, tw = tex.shape
    total = nviews * height * width
    for flat in prange(total):
        n = flat // (height * width)
        rem = flat - n * (height * width)
        py = rem // width
        px = rem - py * width
        csum = np.zeros(3, dtype=np.float64)
        hits = 0
        for sub in range(4):
            du = -0.25 if sub % 2 == 0 else 0.25
            dv = -0.25 if sub // 2 == 0 else 0.25
            dx_c = (px + du - cx) / fx
            dy_c = (py + dv - cy) / fy
            dx = rcw[n, 0, 0] * dx_c + rcw[n, 0, 1] * dy_c + rcw[n, 0, 2]
            dy = rcw[n, 1, 0] * dx_c + rcw[n, 1, 1] * dy_c + rcw[n, 1, 2]
            dz = rcw[n, 2, 0] * dx_c + rcw[n, 2, 1] * dy_c + rcw[n, 2, 2]
            ox = centers[n, 0]
            oy = centers[n, 1]
            oz = centers[n, 2]
            occluded = False
            if use_occ != 0 and dz > 1e-12:
                t = (d_occ - oz) / dz
                if t > 0.0:
                    hx = ox + t * dx
                    hy = oy + t * dy
                    gc = int(np.floor((hx - ox0) / ocell))
                    gr = int(np.floor((hy - oy0) / ocell))
                    if 0 <= gr < gh and 0 <= gc < gw and occ[gr, gc] != 0:
                        occluded = True
            if occluded:
                hits += 1
                for ch in range(3):
                    csum[ch] += occ_color[ch]
            else:
                val = 0.5
                if dz > 1e-12:
                    t = (d_bg - oz) / dz
                    hx = ox + t * dx
                    hy = oy + t * dy
                    u = (hx - tx0) / tcell
                    v = (hy - ty0) / tcell
                    if u < 0.0:
                        u = 0.0
                    if u > tw - 1.0:
                        u = tw - 1.0
                    if v < 0.0:
                        v = 0.0
                    if v > th - 1.0:
                        v = th - 1.0
                    x0 = int(np.floor(u))
                    y0 = int(np.floor(v))
                    if x0 > tw - 2:
                        x0 = tw - 2
                    if y0 > th - 2:
                        y0 = th - 2
                    fu = u - x0
                    fv = v - y0
                    val = ((tex[y0, x0] * (1.0 - fu) + tex[y0, x0 + 1] * fu) * (1.0 - fv)
                           + (tex[y0 + 1, x0] * (1.0 - fu) + tex[y0 + 1, x0 + 1] * fu) * fv)
                for ch in range(3):
                    csum[ch] += val
        if nch == 1:
            # Luminance of the RGB accumulation (Rec. 709 weights).
            lum = 0.2126 * csum[0] + 0.7152 * csum[1] + 0.0722 * csum[2]
            out_img[n, py, px, 0] = lum / 4.0
        else:
            for ch in range(3):
                out_img[n, py, px, ch] = csum[ch] / 4.0
        out_frac[n, py, px] = hits / 4.0


def _render_views_numpy(rcw, centers, fx, fy, cx, cy, width, height, nch,
                        occ, ox0, oy0, ocell, use_occ,
                        tex, tx0, ty0, tcell,
                        occ_color, d_occ, d_bg, out_img, out_frac):
    gh, gw = occ.shape
    th, tw = tex.shape
    for n in range(rcw.shape[0]):
        csum = np.zeros((height, width, 3), dtype=np.float64)
        hits = np.zeros((height, width), dtype=np.float64)
        for du, dv in ((-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)):
            uu, vv = np.meshgrid(np.arange(width, dtype=np.float64) + du,
                                 np.arange(height, dtype=np.float64) + dv)
            dc = np.stack([(uu - cx) / fx, (vv - cy) / fy, np.ones_like(uu)], axis=-1)
            d = dc @ rcw[n].T
            o = centers[n]
            dz = d[:, :, 2]
            fwd = dz > 1e-12
            dzs = np.where(fwd, dz, 1.0)
            occluded = np.zeros((height, width), dtype=bool)
            if use_occ:
                t = (d_occ - o[2]) / dzs
                hx = o[0] + t * d[:, :, 0]
                hy = o[1] + t * d[:, :, 1]
                gc = np.floor((hx - ox0) / ocell).astype(np.int64)
                gr = np.floor((hy - oy0) / ocell).astype(np.int64)
                inside = fwd & (t > 0) & (gr >= 0) & (gr < gh) & (gc >= 0) & (gc < gw)
                gr_c = np.clip(gr, 0, gh - 1)
                gc_c = np.clip(gc, 0, gw - 1)
                occluded = inside & (occ[gr_c, gc_c] != 0)
            t = (d_bg - o[2]) / dzs
            hx = o[0] + t * d[:, :, 0]
            hy = o[1] + t * d[:, :, 1]
            u = np.clip((hx - tx0) / tcell, 0.0, tw - 1.0)
            v = np.clip((hy - ty0) / tcell, 0.0, th - 1.0)
            x0 = np.minimum(np.floor(u).astype(np.int64), tw - 2)
            y0 = np.minimum(np.floor(v).astype(np.int64), th - 2)
            fu = u - x0
            fv = v - y0
            val = ((tex[y0, x0] * (1.0 - fu) + tex[y0, x0 + 1] * fu) * (1.0 - fv)
                   + (tex[y0 + 1, x0] * (1.0 - fu) + tex[y0 + 1, x0 + 1] * fu) * fv)
            val = np.where(fwd, val, 0.5)
            for ch in range(3):
                csum[:, :, ch] += np.where(occluded, occ_color[ch], val)
            hits += occluded
        if nch == 1:
            out_img[n, :, :, 0] = (0.2126 * csum[:, :, 0] + 0.7152 * csum[:, :, 1]
                                   + 0.0722 * csum[:, :, 2]) / 4.0
        else:
            out_img[n] = csum / 4.0
        out_frac[n] = hits / 4.0


def render_views_raw(rcw, centers, fx, fy, cx, cy, width, height, nch,
                     occ, ox0, oy0, ocell, use_occ,
                     tex, tx0, ty0, tcell, occ_color, d_occ, d_bg):
    nviews = rcw.shape[0]
    out_img = np.zeros((nviews, height, width, nch), dtype=np.float32)
    out_frac = np.zeros((nviews, height, width), dtype=np.float32)
    fn = _render_views_jit if (HAVE_NUMBA and not FORCE_NUMPY) else _render_views_numpy
    fn(rcw, centers, float(fx), float(fy), float(cx), float(cy), int(width), int(height), int(nch),
       occ, float(ox0), float(oy0), float(ocell), int(use_occ),
       tex, float(tx0), float(ty0), float(tcell),
       occ_color, float(d_occ), float(d_bg), out_img, out_frac)
    return out_img, out_frac
