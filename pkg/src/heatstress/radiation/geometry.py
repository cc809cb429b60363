"""Shadow casting and sky view factor on a DSM raster.

Both operations march outward from each cell centre in one-cell steps and
sample the surface bilinearly (cell centres sit at integer row/column
positions). Marching stops at the grid edge, at the distance cutoff, or as
soon as no remaining sample can change the answer given the scene maximum.
Runs of samples whose neighbourhood block maximum cannot change the answer
are skipped; the skip is conservative, so results equal a plain march.
Cells are processed independently, so results do not depend on the number
of worker threads.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from ..raster import Grid
from .params import RadiationParams
from .solar import SolarPosition


class SunBelowHorizon(ValueError):
    pass


@njit(inline="always")
def _bilinear(z, y, x):
    nr, nc = z.shape
    # callers only sample inside the grid, so truncation is floor
    i0 = int(y)
    j0 = int(x)
    fy = y - i0
    fx = x - j0
    i1 = i0 + 1 if i0 + 1 < nr else i0
    j1 = j0 + 1 if j0 + 1 < nc else j0
    top = z[i0, j0] * (1.0 - fx) + z[i0, j1] * fx
    bot = z[i1, j0] * (1.0 - fx) + z[i1, j1] * fx
    return top * (1.0 - fy) + bot * fy


BLOCK_SHIFT = 2
# slack (m) absorbing bilinear rounding above a block maximum
_BLOCK_SLACK = 1e-6


def block_max(z: np.ndarray, shift: int = BLOCK_SHIFT) -> np.ndarray:
    """Max over each 2**shift block and its 8 neighbours, plus slack.

    Any bilinear sample taken within ``2**shift - 1`` one-cell steps of a
    point in block (bi, bj) lies under ``out[bi, bj]``.
    """
    block = 1 << shift
    nr, nc = z.shape
    br, bc = -(-nr // block), -(-nc // block)
    pad = np.full((br * block, bc * block), -np.inf)
    pad[:nr, :nc] = z
    m = pad.reshape(br, block, bc, block).max(axis=(1, 3))
    p = np.pad(m, 1, constant_values=-np.inf)
    out = np.full_like(m, -np.inf)
    for di in range(3):
        for dj in range(3):
            np.maximum(out, p[di:di + br, dj:dj + bc], out=out)
    return out + _BLOCK_SLACK


@njit(inline="always")
def _last_step(i, j, dr, dc, ymax, xmax, steps):
    # largest k <= steps keeping (i + k*dr, j + k*dc) on the grid
    k = steps
    if dr > 0.0:
        k = min(k, int((ymax - i) / dr) + 1)
    elif dr < 0.0:
        k = min(k, int(i / -dr) + 1)
    if dc > 0.0:
        k = min(k, int((xmax - j) / dc) + 1)
    elif dc < 0.0:
        k = min(k, int(j / -dc) + 1)
    while k > 0:
        y = i + k * dr
        x = j + k * dc
        if y < 0.0 or y > ymax or x < 0.0 or x > xmax:
            k -= 1
        else:
            break
    return k


@njit(parallel=True, cache=True)
def _shadow_kernel(z, bm, shift, drow, dcol, tan_el, cellsize, max_steps, zmax, out):
    nr, nc = z.shape
    skip = (1 << shift) - 1
    for i in prange(nr):
        for j in range(nc):
            z0 = z[i, j]
            kend = _last_step(i, j, drow, dcol, nr - 1.0, nc - 1.0, max_steps)
            hit = False
            k = 1
            while k <= kend:
                thresh = z0 + k * cellsize * tan_el
                if thresh >= zmax:
                    break
                y = i + k * drow
                x = j + k * dcol
                if bm[int(y) >> shift, int(x) >> shift] <= thresh:
                    k += skip
                    continue
                if _bilinear(z, y, x) > thresh:
                    hit = True
                    break
                k += 1
            out[i, j] = hit


@njit(parallel=True, cache=True)
def _svf_kernel(z, bm, shift, drow, dcol, cellsize, max_steps, zmax, out):
    nr, nc = z.shape
    ndir = drow.shape[0]
    skip = (1 << shift) - 1
    for i in prange(nr):
        for j in range(nc):
            z0 = z[i, j]
            headroom = zmax - z0
            acc = 0.0
            for d in range(ndir):
                dr = drow[d]
                dc = dcol[d]
                kend = _last_step(i, j, dr, dc, nr - 1.0, nc - 1.0, max_steps)
                best = 0.0
                k = 1
                while k <= kend:
                    r = k * cellsize
                    lim = best * r
                    if headroom <= lim:
                        break
                    y = i + k * dr
                    x = j + k * dc
                    if bm[int(y) >> shift, int(x) >> shift] - z0 <= lim:
                        k += skip
                        continue
                    t = (_bilinear(z, y, x) - z0) / r
                    if t > best:
                        best = t
                    k += 1
                acc += 1.0 / (1.0 + best * best)
            out[i, j] = acc / ndir


def _surface(dsm: Grid) -> np.ndarray:
    """DSM as float64 with nodata cells flattened to ground level."""
    z = dsm.values.astype(np.float64)
    z[~dsm.valid] = 0.0
    return np.ascontiguousarray(z)


def svf_azimuths(n: int) -> np.ndarray:
    """Sector-centre azimuths in degrees: (i + 0.5) * 360 / n."""
    return (np.arange(n) + 0.5) * (360.0 / n)


def shadow_map(dsm: Grid, sun: SolarPosition, params: RadiationParams | None = None) -> np.ndarray:
    """Boolean array, True where the cell centre is shaded from direct sun."""
    params = params or RadiationParams()
    if sun.elevation <= 0.0:
        raise SunBelowHorizon(f"sun below horizon (elevation {sun.elevation:.2f} deg)")
    z = _surface(dsm)
    az = math.radians(sun.azimuth)
    out = np.zeros(z.shape, dtype=np.bool_)
    steps = int(params.shadow_max_radius // dsm.cellsize)
    _shadow_kernel(z, block_max(z), BLOCK_SHIFT, -math.cos(az), math.sin(az), math.tan(math.radians(sun.elevation)),
                   float(dsm.cellsize), steps, float(z.max()), out)
    return out


def sky_view_factor_array(dsm: Grid, params: RadiationParams | None = None) -> np.ndarray:
    """float64 SVF values, kept at full precision for the flux kernels."""
    params = params or RadiationParams()
    z = _surface(dsm)
    az = np.radians(svf_azimuths(int(params.svf_directions)))
    out = np.empty(z.shape, dtype=np.float64)
    steps = int(params.svf_max_radius // dsm.cellsize)
    _svf_kernel(z, block_max(z), BLOCK_SHIFT, -np.cos(az), np.sin(az), float(dsm.cellsize), steps, float(z.max()), out)
    return out


def sky_view_factor(dsm: Grid, params: RadiationParams | None = None) -> Grid:
    """SVF = mean over azimuth sectors of cos^2(horizon elevation), in [0, 1]."""
    return dsm.with_values(sky_view_factor_array(dsm, params), units="1", nodata_mask=~dsm.valid)
