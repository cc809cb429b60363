"""Radiation-scheme parameters and standing-person view factors."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..raster import LANDCOVER_CLASSES, N_CLASSES

STEFAN_BOLTZMANN = 5.67e-8
KELVIN = 273.15

# Direction order used for every six-vector: N, S, E, W, up, down.
DIRECTIONS = ("north", "south", "east", "west", "up", "down")
LATERAL_NORMALS = (0.0, 180.0, 90.0, 270.0)

# K per kW/m2 of incident shortwave; non-physical calibration knobs, monotone
# from water (coolest) to sealed surfaces.
DEFAULT_HEATING = {
    "water": 1.0,
    "tree_canopy": 2.0,
    "grass": 6.0,
    "bare_earth": 12.0,
    "buildings": 14.0,
    "roads": 16.0,
    "impervious": 16.0,
}


@dataclass(frozen=True)
class PersonViewFactors:
    F: tuple = (0.22, 0.22, 0.22, 0.22, 0.06, 0.06)
    zeta_k: float = 0.70
    eps_p: float = 0.97

    def __post_init__(self):
        f = tuple(float(v) for v in self.F)
        object.__setattr__(self, "F", f)
        if len(f) != 6 or any(not 0.0 <= v <= 1.0 for v in f):
            raise ValueError("need six view factors in [0, 1]")
        if abs(sum(f) - 1.0) > 1e-9:
            raise ValueError(f"view factors must sum to 1, got {sum(f)!r}")


@dataclass(frozen=True)
class RadiationParams:
    svf_directions: int = 36
    svf_max_radius: float = 100.0
    shadow_max_radius: float = 200.0
    surface_heating_coeff: dict = field(default_factory=lambda: dict(DEFAULT_HEATING))
    ground_emissivity: float = 0.95
    wall_emissivity: float = 0.90
    stefan_boltzmann: float = STEFAN_BOLTZMANN

    def __post_init__(self):
        coeff = dict(self.surface_heating_coeff)
        names = set(LANDCOVER_CLASSES.values())
        if set(coeff) != names:
            missing = sorted(names - set(coeff))
            extra = sorted(set(coeff) - names)
            raise ValueError(f"heating coefficients must cover all 7 classes "
                             f"(missing {missing}, unknown {extra})")
        object.__setattr__(self, "surface_heating_coeff", coeff)
        scalars = (self.svf_directions, self.svf_max_radius, self.shadow_max_radius,
                   self.ground_emissivity, self.wall_emissivity, self.stefan_boltzmann)
        if any(v <= 0 for v in scalars) or any(v <= 0 for v in coeff.values()):
            raise ValueError("radiation parameters must all be positive")
        if int(self.svf_directions) != self.svf_directions:
            raise ValueError("svf_directions must be an integer")

    def heating_table(self) -> np.ndarray:
        """Coefficient per land-cover code, indexable by code."""
        return np.array([self.surface_heating_coeff[LANDCOVER_CLASSES[c]]
                         for c in range(N_CLASSES)], dtype=np.float64)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "RadiationParams":
        known = {k: v for k, v in obj.items() if k in cls.__dataclass_fields__}
        unknown = set(obj) - set(known)
        if unknown:
            raise ValueError(f"unknown radiation parameter(s): {', '.join(sorted(unknown))}")
        if "surface_heating_coeff" in known:
            merged = dict(DEFAULT_HEATING)
            merged.update(known["surface_heating_coeff"])
            known["surface_heating_coeff"] = merged
        return cls(**known)

    @classmethod
    def load(cls, path) -> "RadiationParams":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
