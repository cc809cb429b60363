"""End-to-end physics path: hourly T_mrt and UTCI maps plus the daytime mean."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .meteo import MetSeries
from .radiation import (PersonViewFactors, RadiationParams, shadow_map, sky_view_factor_array,
                        solar_position, tmrt_array)
from .raster import Grid, LandCoverGrid, assert_aligned
from .thermal import daytime_average, hourly_utci_array

PHILADELPHIA = (39.95, -75.16)


@dataclass(frozen=True)
class Scene:
    """One simulation input: surface heights, land cover and a day of weather."""

    dsm: Grid
    landcover: LandCoverGrid
    met: MetSeries

    def __post_init__(self):
        assert_aligned(self.dsm, self.landcover)


@dataclass
class DayResult:
    hourly: list
    mean: Grid
    tmrt: list = field(default_factory=list)
    qa: dict = field(default_factory=dict)


def simulate_day(scene: Scene, latitude: float, longitude: float,
                 params: RadiationParams | None = None, vf: PersonViewFactors | None = None,
                 keep_tmrt: bool = False) -> DayResult:
    params = params or RadiationParams()
    vf = vf or PersonViewFactors()
    dsm, lc = scene.dsm, scene.landcover
    svf = sky_view_factor_array(dsm, params)
    hourly, tmrts = [], []
    clamped = 0
    for rec in scene.met:
        sun = solar_position(latitude, longitude, rec.timestamp)
        shadow = shadow_map(dsm, sun, params) if sun.above_horizon else np.ones(dsm.shape, bool)
        tm = tmrt_array(dsm, lc, rec, sun, params, vf, svf=svf, shadow=shadow)
        utci, n = hourly_utci_array(tm, rec)
        clamped += n
        nod = np.isnan(utci)
        hourly.append(dsm.with_values(np.where(nod, 0.0, utci), units="degC", nodata_mask=nod))
        if keep_tmrt:
            tmrts.append(dsm.with_values(np.where(nod, 0.0, tm), units="degC", nodata_mask=nod))
    mean = daytime_average(hourly)
    qa = {
        "clamped_utci_cells": clamped,
        "nodata_cells": int((~mean.valid).sum()),
        "hours": [rec.timestamp.isoformat() for rec in scene.met],
    }
    return DayResult(hourly, mean, tmrts, qa)


class PhysicsUTCIModel(BaseEstimator):
    """Physics UTCI engine with the estimator interface.

    ``predict`` maps a :class:`Scene` (or list of scenes) to daytime-mean UTCI
    grids. Nothing is learned; ``fit`` only resolves the parameter objects.
    """

    def __init__(self, latitude: float = PHILADELPHIA[0], longitude: float = PHILADELPHIA[1],
                 params: RadiationParams | None = None, view_factors: PersonViewFactors | None = None):
        self.latitude = latitude
        self.longitude = longitude
        self.params = params
        self.view_factors = view_factors

    def fit(self, X=None, y=None):
        self.params_ = self.params or RadiationParams()
        self.view_factors_ = self.view_factors or PersonViewFactors()
        return self

    def _resolved(self):
        if not hasattr(self, "params_"):
            self.fit()
        return self.params_, self.view_factors_

    def simulate(self, scene: Scene, keep_tmrt: bool = False) -> DayResult:
        params, vf = self._resolved()
        return simulate_day(scene, self.latitude, self.longitude, params, vf, keep_tmrt)

    def predict(self, X):
        if isinstance(X, Scene):
            return self.simulate(X).mean
        return [self.simulate(s).mean for s in X]
