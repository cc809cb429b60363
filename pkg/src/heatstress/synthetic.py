"""Synthetic urban scenes and clear-sky weather days for tests, demos and benchmarks."""
from __future__ import annotations

import math
from dataclasses import replace
from datetime import datetime, timedelta, timezone

import numpy as np

from .meteo import FIRST_HOUR, N_HOURS, MetRecord, MetSeries
from .radiation import solar_position
from .raster import Grid, LandCoverGrid

EDT = timezone(timedelta(hours=-4))


def _dew_point(ta: float, rh: float) -> float:
    g = math.log(rh / 100.0) + 17.625 * ta / (243.04 + ta)
    return 243.04 * g / (17.625 - g)


def synthetic_met_series(date=(2020, 8, 15), latitude: float = 39.95, longitude: float = -75.16,
                         tz=EDT, seed: int | None = None, peak_temp: float = 32.0) -> MetSeries:
    """A plausible clear summer day, 08:00-19:00 local, with optional jitter."""
    rng = np.random.default_rng(seed)
    jitter = (lambda s: 1.0 + s * rng.standard_normal()) if seed is not None else (lambda s: 1.0)
    peak = peak_temp + (1.5 * rng.standard_normal() if seed is not None else 0.0)
    turbidity = 0.14 * jitter(0.15)
    records = []
    start = datetime(*date, FIRST_HOUR, tzinfo=tz)
    for h in range(N_HOURS):
        ts = start + timedelta(hours=h)
        sun = solar_position(latitude, longitude, ts)
        phase = math.cos(math.pi * (ts.hour - 15) / 12.0)
        ta = peak - 6.0 + 6.0 * phase
        rh = float(np.clip(55.0 - 15.0 * phase + 5.0 * (jitter(0.5) - 1.0), 15.0, 95.0))
        sin_el = max(math.sin(math.radians(sun.elevation)), 0.0)
        if sin_el > 0.0:
            dni = 950.0 * math.exp(-turbidity / max(sin_el, 0.05))
            dhi = 40.0 + 80.0 * sin_el
        else:
            dni, dhi = 0.0, 0.0
        ghi = dni * sin_el + dhi
        records.append(MetRecord(
            timestamp=ts, air_temp=ta, rel_humidity=rh,
            wind_speed=max(0.0, 2.5 * jitter(0.3) + 0.5 * phase), wind_dir=225.0,
            pressure=1012.0, dew_point=_dew_point(ta, rh), ghi=ghi, dni=dni, dhi=dhi,
            clearsky_ghi=ghi, clearsky_dni=dni, clearsky_dhi=dhi,
            solar_zenith=90.0 - sun.elevation, surface_albedo=0.18,
            precipitable_water=35.0, ozone=0.3, aerosol_od=0.1, cloud_fraction=0.0))
    return MetSeries(tuple(records))


def synthetic_scene(size: int = 64, seed: int = 0, cellsize: float = 1.0):
    """Random block-and-street city: returns (ndsm Grid, LandCoverGrid).

    Classes: roads on a street lattice, buildings as rectangles, tree crowns as
    discs, and grass, bare-earth and water patches on the remaining ground.
    """
    rng = np.random.default_rng(seed)
    n = size
    lc = np.full((n, n), 6, dtype=np.int16)
    h = np.zeros((n, n), dtype=np.float64)
    yy, xx = np.mgrid[0:n, 0:n]

    spacing = max(16, n // 4) if n <= 256 else 64
    street = max(2, spacing // 8)
    off = rng.integers(0, spacing)
    lc[((yy + off) % spacing < street) | ((xx + off) % spacing < street)] = 5
    del yy, xx

    def disc(cy, cx, r):
        rr = int(math.ceil(r))
        r0, r1 = max(0, cy - rr), min(n, cy + rr + 1)
        c0, c1 = max(0, cx - rr), min(n, cx + rr + 1)
        ly, lx = np.mgrid[r0:r1, c0:c1]
        return (slice(r0, r1), slice(c0, c1)), (ly - cy) ** 2 + (lx - cx) ** 2 <= r * r

    def patches(code, count, rmin, rmax):
        for _ in range(count):
            cy, cx = rng.integers(0, n, 2)
            win, mask = disc(cy, cx, rng.uniform(rmin, rmax))
            sub = lc[win]
            sub[mask & (sub != 5)] = code

    scale = (n / 64.0) ** 2
    big = min(n, 256)
    patches(2, max(1, int(4 * scale)), 3, max(4, big / 10))
    patches(3, max(1, int(2 * scale)), 2, max(3, big / 16))
    if rng.random() < 0.5:
        patches(0, max(1, int(scale)), 2, max(3, big / 20))

    # buildings cover roughly a third of the ground at every size
    lo, hi = max(3, min(n, 128) // 16), max(4, min(n, 128) // 5)
    mean_area = ((lo + hi) / 2.0) ** 2
    for _ in range(max(2, int(0.4 * n * n / mean_area))):
        bh, bw = rng.integers(lo, hi, 2)
        r0, c0 = rng.integers(0, n - 2, 2)
        win = (slice(r0, min(n, r0 + bh)), slice(c0, min(n, c0 + bw)))
        lc[win] = 4
        h[win] = rng.uniform(6.0, 40.0)

    for _ in range(max(2, int(10 * scale))):
        cy, cx = rng.integers(0, n, 2)
        win, mask = disc(cy, cx, rng.uniform(1.5, max(2.0, big / 20)))
        mask &= lc[win] != 4
        lc[win][mask] = 1
        h[win][mask] = rng.uniform(6.0, 16.0)

    dsm = Grid(h.astype(np.float32), cellsize, 0.0, 0.0, units="m")
    return dsm, LandCoverGrid(lc, cellsize, 0.0, 0.0)


def pillar_scene(size: int = 41, height: float = 10.0, landcover: int = 2, cellsize: float = 1.0):
    """Flat plain with one raised cell at the centre."""
    h = np.zeros((size, size), dtype=np.float32)
    h[size // 2, size // 2] = height
    lc = np.full((size, size), landcover, dtype=np.int16)
    return Grid(h, cellsize, units="m"), LandCoverGrid(lc, cellsize)


def canyon_scene(length: int = 201, gap: int = 20, wall_width: int = 10, height: float = 20.0):
    """Two parallel north-south walls ``gap`` cells apart (1 m cells)."""
    ncols = 2 * wall_width + gap + 20
    h = np.zeros((length, ncols), dtype=np.float32)
    west0 = 10
    h[:, west0:west0 + wall_width] = height
    east0 = west0 + wall_width + gap
    h[:, east0:east0 + wall_width] = height
    lc = np.full(h.shape, 5, dtype=np.int16)
    lc[h > 0] = 4
    return Grid(h, 1.0, units="m"), LandCoverGrid(lc, 1.0), (west0 + wall_width, east0)


def night_record(base: MetRecord) -> MetRecord:
    """Copy of ``base`` with every irradiance set to zero."""
    return replace(base, ghi=0.0, dni=0.0, dhi=0.0, clearsky_ghi=0.0, clearsky_dni=0.0,
                   clearsky_dhi=0.0)


__all__ = ["synthetic_met_series", "synthetic_scene", "pillar_scene", "canyon_scene",
           "night_record"]
