"""Grid-wide T_mrt: shadow -> SVF -> directional fluxes -> R_str -> T_mrt."""
from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from ..meteo import MetRecord, vapor_pressure
from ..raster import Grid, LandCoverGrid, assert_aligned
from .fluxes import sky_emissivity
from .geometry import shadow_map, sky_view_factor_array
from .params import KELVIN, LATERAL_NORMALS, PersonViewFactors, RadiationParams
from .solar import SolarPosition, solar_position


@njit(parallel=True, cache=True)
def _tmrt_kernel(shadow, svf, codes, valid, heat, dni_sin, beam_lat, dhi, alb,
                 ta_k, l_sky, black, eps_wall, eps_ground, sigma, F, zeta, eps_p, out):
    nr, nc = svf.shape
    for i in prange(nr):
        for j in range(nc):
            if not valid[i, j]:
                out[i, j] = np.nan
                continue
            s = svf[i, j]
            direct = not shadow[i, j]
            k_up = (dni_sin if direct else 0.0) + dhi * s
            k_down = alb * k_up
            k0 = (beam_lat[0] if direct else 0.0) + 0.5 * dhi * s + 0.5 * alb * k_up
            k1 = (beam_lat[1] if direct else 0.0) + 0.5 * dhi * s + 0.5 * alb * k_up
            k2 = (beam_lat[2] if direct else 0.0) + 0.5 * dhi * s + 0.5 * alb * k_up
            k3 = (beam_lat[3] if direct else 0.0) + 0.5 * dhi * s + 0.5 * alb * k_up
            t_surf = ta_k + heat[codes[i, j]] * (k_up / 1000.0)
            l_up = s * l_sky + (1.0 - s) * eps_wall * black
            l_down = eps_ground * sigma * t_surf ** 4
            l_lat = 0.5 * l_up + 0.5 * l_down
            sk = 0.0
            sk += k0 * F[0]
            sk += k1 * F[1]
            sk += k2 * F[2]
            sk += k3 * F[3]
            sk += k_up * F[4]
            sk += k_down * F[5]
            sl = 0.0
            sl += l_lat * F[0]
            sl += l_lat * F[1]
            sl += l_lat * F[2]
            sl += l_lat * F[3]
            sl += l_up * F[4]
            sl += l_down * F[5]
            r_str = zeta * sk + eps_p * sl
            out[i, j] = (r_str / (eps_p * sigma)) ** 0.25 - KELVIN


def tmrt_array(dsm: Grid, lc: LandCoverGrid, met: MetRecord, sun: SolarPosition,
               params: RadiationParams | None = None, vf: PersonViewFactors | None = None,
               svf: np.ndarray | None = None, shadow: np.ndarray | None = None) -> np.ndarray:
    """float64 T_mrt array (NaN at nodata). ``svf``/``shadow`` may be precomputed."""
    params = params or RadiationParams()
    vf = vf or PersonViewFactors()
    assert_aligned(dsm, lc)
    if svf is None:
        svf = sky_view_factor_array(dsm, params)
    if shadow is None:
        if sun.elevation > 0.0:
            shadow = shadow_map(dsm, sun, params)
        else:
            shadow = np.ones(dsm.shape, dtype=np.bool_)
    valid = dsm.valid & lc.valid
    codes = np.where(lc.valid, lc.codes, 0).astype(np.int64)

    el = math.radians(sun.elevation)
    up = sun.elevation > 0.0
    dni_sin = met.dni * math.sin(el) if up else 0.0
    beam_lat = np.array([
        met.dni * math.cos(el) * max(0.0, math.cos(math.radians(sun.azimuth - n))) if up else 0.0
        for n in LATERAL_NORMALS])
    ta_k = met.air_temp + KELVIN
    sigma = params.stefan_boltzmann
    black = sigma * ta_k ** 4
    l_sky = sky_emissivity(met.air_temp, vapor_pressure(met.air_temp, met.rel_humidity)) * black

    out = np.empty(dsm.shape, dtype=np.float64)
    _tmrt_kernel(np.ascontiguousarray(shadow, dtype=np.bool_), np.ascontiguousarray(svf),
                 codes, valid, params.heating_table(), dni_sin, beam_lat, met.dhi,
                 met.surface_albedo, ta_k, l_sky, black, params.wall_emissivity,
                 params.ground_emissivity, sigma, np.array(vf.F), vf.zeta_k, vf.eps_p, out)
    return out


def tmrt_map(dsm: Grid, lc: LandCoverGrid, met: MetRecord, lat: float, lon: float,
             params: RadiationParams | None = None, vf: PersonViewFactors | None = None,
             svf: np.ndarray | None = None) -> Grid:
    """T_mrt grid in degC for one hourly record. Sun position comes from the timestamp."""
    sun = solar_position(lat, lon, met.timestamp)
    arr = tmrt_array(dsm, lc, met, sun, params, vf, svf)
    nod = np.isnan(arr)
    return dsm.with_values(np.where(nod, 0.0, arr), units="degC", nodata_mask=nod)
