"""Six-directional short/longwave fluxes, mean radiant flux and T_mrt (scalar forms).

These are the per-cell reference formulas; :mod:`.tmrt` evaluates the same
scheme over whole grids in a compiled kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..meteo import MetRecord, vapor_pressure
from ..raster import LANDCOVER_CLASSES
from .params import KELVIN, LATERAL_NORMALS, PersonViewFactors, RadiationParams
from .solar import SolarPosition


@dataclass(frozen=True)
class DirectionalFluxes:
    """Shortwave ``K`` and longwave ``L`` in W/m2, ordered N, S, E, W, up, down."""

    K: tuple
    L: tuple

    def __post_init__(self):
        k = tuple(float(v) for v in self.K)
        l = tuple(float(v) for v in self.L)
        if len(k) != 6 or len(l) != 6:
            raise ValueError("need six shortwave and six longwave fluxes")
        if any(not math.isfinite(v) or v < 0 for v in k + l):
            raise ValueError("fluxes must be finite and non-negative")
        object.__setattr__(self, "K", k)
        object.__setattr__(self, "L", l)


def sky_emissivity(air_temp: float, vapor_hpa: float) -> float:
    """Clear-sky emissivity, Prata (1996) form."""
    w = 46.5 * vapor_hpa / (air_temp + KELVIN)
    return 1.0 - (1.0 + w) * math.exp(-math.sqrt(1.2 + 3.0 * w))


def directional_fluxes(shadowed: bool, svf: float, landcover: int, met: MetRecord,
                       sun: SolarPosition, params: RadiationParams | None = None) -> DirectionalFluxes:
    params = params or RadiationParams()
    sigma = params.stefan_boltzmann
    el = math.radians(sun.elevation)
    sun_up = sun.elevation > 0.0
    direct = not shadowed and sun_up

    k_up = (met.dni * math.sin(el) if direct else 0.0) + met.dhi * svf
    k_down = met.surface_albedo * k_up
    lateral = []
    for normal in LATERAL_NORMALS:
        beam = 0.0
        if direct:
            beam = met.dni * math.cos(el) * max(0.0, math.cos(math.radians(sun.azimuth - normal)))
        lateral.append(beam + 0.5 * met.dhi * svf + 0.5 * met.surface_albedo * k_up)

    ta_k = met.air_temp + KELVIN
    e = vapor_pressure(met.air_temp, met.rel_humidity)
    black = sigma * ta_k ** 4
    l_sky = sky_emissivity(met.air_temp, e) * black
    coeff = params.surface_heating_coeff[LANDCOVER_CLASSES[int(landcover)]]
    t_surf_k = ta_k + coeff * (k_up / 1000.0)
    l_up = svf * l_sky + (1.0 - svf) * params.wall_emissivity * black
    l_down = params.ground_emissivity * sigma * t_surf_k ** 4
    l_lat = 0.5 * l_up + 0.5 * l_down
    return DirectionalFluxes(tuple(lateral) + (k_up, k_down), (l_lat,) * 4 + (l_up, l_down))


def mean_radiant_flux(fluxes: DirectionalFluxes, vf: PersonViewFactors | None = None) -> float:
    """R_str = zeta_k * sum(K_i F_i) + eps_p * sum(L_i F_i), summed in index order."""
    vf = vf or PersonViewFactors()
    sk = 0.0
    sl = 0.0
    for i in range(6):
        sk += fluxes.K[i] * vf.F[i]
    for i in range(6):
        sl += fluxes.L[i] * vf.F[i]
    return vf.zeta_k * sk + vf.eps_p * sl


def tmrt_from_flux(r_str: float, eps_p: float = 0.97, sigma: float = 5.67e-8) -> float:
    """Mean radiant temperature (degC) via the Stefan-Boltzmann law."""
    if r_str < 0:
        raise ValueError(f"mean radiant flux must be non-negative, got {r_str}")
    return (r_str / (eps_p * sigma)) ** 0.25 - KELVIN


def flux_from_tmrt(tmrt: float, eps_p: float = 0.97, sigma: float = 5.67e-8) -> float:
    return eps_p * sigma * (tmrt + KELVIN) ** 4
