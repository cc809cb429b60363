"""Physics core: solar geometry, shading, sky view factor and mean radiant temperature."""
from .fluxes import (DirectionalFluxes, directional_fluxes, flux_from_tmrt, mean_radiant_flux,
                     sky_emissivity, tmrt_from_flux)
from .geometry import SunBelowHorizon, shadow_map, sky_view_factor, sky_view_factor_array
from .params import (DIRECTIONS, KELVIN, STEFAN_BOLTZMANN, PersonViewFactors,
                     RadiationParams)
from .solar import SolarPosition, solar_position
from .tmrt import tmrt_array, tmrt_map

__all__ = [
    "DIRECTIONS", "KELVIN", "STEFAN_BOLTZMANN",
    "DirectionalFluxes", "PersonViewFactors", "RadiationParams", "SolarPosition",
    "SunBelowHorizon", "directional_fluxes", "flux_from_tmrt", "mean_radiant_flux",
    "shadow_map", "sky_emissivity", "sky_view_factor", "sky_view_factor_array",
    "solar_position", "tmrt_array", "tmrt_from_flux", "tmrt_map",
]
