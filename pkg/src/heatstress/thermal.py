"""Operational UTCI polynomial, stress categories, hourly maps and the daytime mean."""
from __future__ import annotations

import warnings
from enum import IntEnum
from typing import Sequence

import numpy as np

from .meteo import N_HOURS, MetRecord, vapor_pressure
from .raster import Grid, assert_aligned

# Operational domain of the regression polynomial.
TA_RANGE = (-50.0, 50.0)
DTMRT_RANGE = (-30.0, 70.0)
WIND_RANGE = (0.5, 17.0)

# (ta, va, dtmrt, pa) exponents and coefficient of each term; UTCI = ta + sum.
# va is 10 m wind (m/s), dtmrt = T_mrt - T_a (K), pa is vapour pressure in kPa.
_TERMS = (
    (0, 0, 0, 0, 0.607562052),
    (1, 0, 0, 0, -0.0227712343),
    (2, 0, 0, 0, 0.000806470249),
    (3, 0, 0, 0, -0.000154271372),
    (4, 0, 0, 0, -3.24651735e-06),
    (5, 0, 0, 0, 7.32602852e-08),
    (6, 0, 0, 0, 1.35959073e-09),
    (0, 1, 0, 0, -2.2583652),
    (1, 1, 0, 0, 0.0880326035),
    (2, 1, 0, 0, 0.00216844454),
    (3, 1, 0, 0, -1.53347087e-05),
    (4, 1, 0, 0, -5.72983704e-07),
    (5, 1, 0, 0, -2.55090145e-09),
    (0, 2, 0, 0, -0.751269505),
    (1, 2, 0, 0, -0.00408350271),
    (2, 2, 0, 0, -5.21670675e-05),
    (3, 2, 0, 0, 1.94544667e-06),
    (4, 2, 0, 0, 1.14099531e-08),
    (0, 3, 0, 0, 0.158137256),
    (1, 3, 0, 0, -6.57263143e-05),
    (2, 3, 0, 0, 2.22697524e-07),
    (3, 3, 0, 0, -4.16117031e-08),
    (0, 4, 0, 0, -0.0127762753),
    (1, 4, 0, 0, 9.66891875e-06),
    (2, 4, 0, 0, 2.52785852e-09),
    (0, 5, 0, 0, 0.000456306672),
    (1, 5, 0, 0, -1.74202546e-07),
    (0, 6, 0, 0, -5.91491269e-06),
    (0, 0, 1, 0, 0.398374029),
    (1, 0, 1, 0, 0.000183945314),
    (2, 0, 1, 0, -0.00017375451),
    (3, 0, 1, 0, -7.60781159e-07),
    (4, 0, 1, 0, 3.77830287e-08),
    (5, 0, 1, 0, 5.43079673e-10),
    (0, 1, 1, 0, -0.0200518269),
    (1, 1, 1, 0, 0.000892859837),
    (2, 1, 1, 0, 3.45433048e-06),
    (3, 1, 1, 0, -3.77925774e-07),
    (4, 1, 1, 0, -1.69699377e-09),
    (0, 2, 1, 0, 0.000169992415),
    (1, 2, 1, 0, -4.99204314e-05),
    (2, 2, 1, 0, 2.47417178e-07),
    (3, 2, 1, 0, 1.07596466e-08),
    (0, 3, 1, 0, 8.49242932e-05),
    (1, 3, 1, 0, 1.35191328e-06),
    (2, 3, 1, 0, -6.21531254e-09),
    (0, 4, 1, 0, -4.99410301e-06),
    (1, 4, 1, 0, -1.89489258e-08),
    (0, 5, 1, 0, 8.15300114e-08),
    (0, 0, 2, 0, 0.00075504309),
    (1, 0, 2, 0, -5.65095215e-05),
    (2, 0, 2, 0, -4.52166564e-07),
    (3, 0, 2, 0, 2.46688878e-08),
    (4, 0, 2, 0, 2.42674348e-10),
    (0, 1, 2, 0, 0.00015454725),
    (1, 1, 2, 0, 5.2411097e-06),
    (2, 1, 2, 0, -8.75874982e-08),
    (3, 1, 2, 0, -1.50743064e-09),
    (0, 2, 2, 0, -1.56236307e-05),
    (1, 2, 2, 0, -1.33895614e-07),
    (2, 2, 2, 0, 2.49709824e-09),
    (0, 3, 2, 0, 6.51711721e-07),
    (1, 3, 2, 0, 1.94960053e-09),
    (0, 4, 2, 0, -1.00361113e-08),
    (0, 0, 3, 0, -1.21206673e-05),
    (1, 0, 3, 0, -2.1820366e-07),
    (2, 0, 3, 0, 7.51269482e-09),
    (3, 0, 3, 0, 9.79063848e-11),
    (0, 1, 3, 0, 1.25006734e-06),
    (1, 1, 3, 0, -1.81584736e-09),
    (2, 1, 3, 0, -3.52197671e-10),
    (0, 2, 3, 0, -3.3651463e-08),
    (1, 2, 3, 0, 1.35908359e-10),
    (0, 3, 3, 0, 4.1703262e-10),
    (0, 0, 4, 0, -1.30369025e-09),
    (1, 0, 4, 0, 4.13908461e-10),
    (2, 0, 4, 0, 9.22652254e-12),
    (0, 1, 4, 0, -5.08220384e-09),
    (1, 1, 4, 0, -2.24730961e-11),
    (0, 2, 4, 0, 1.17139133e-10),
    (0, 0, 5, 0, 6.62154879e-10),
    (1, 0, 5, 0, 4.0386326e-13),
    (0, 1, 5, 0, 1.95087203e-12),
    (0, 0, 6, 0, -4.73602469e-12),
    (0, 0, 0, 1, 5.12733497),
    (1, 0, 0, 1, -0.312788561),
    (2, 0, 0, 1, -0.0196701861),
    (3, 0, 0, 1, 0.00099969087),
    (4, 0, 0, 1, 9.51738512e-06),
    (5, 0, 0, 1, -4.66426341e-07),
    (0, 1, 0, 1, 0.548050612),
    (1, 1, 0, 1, -0.00330552823),
    (2, 1, 0, 1, -0.0016411944),
    (3, 1, 0, 1, -5.16670694e-06),
    (4, 1, 0, 1, 9.52692432e-07),
    (0, 2, 0, 1, -0.0429223622),
    (1, 2, 0, 1, 0.00500845667),
    (2, 2, 0, 1, 1.00601257e-06),
    (3, 2, 0, 1, -1.81748644e-06),
    (0, 3, 0, 1, -0.00125813502),
    (1, 3, 0, 1, -0.000179330391),
    (2, 3, 0, 1, 2.34994441e-06),
    (0, 4, 0, 1, 0.000129735808),
    (1, 4, 0, 1, 1.2906487e-06),
    (0, 5, 0, 1, -2.28558686e-06),
    (0, 0, 1, 1, -0.0369476348),
    (1, 0, 1, 1, 0.00162325322),
    (2, 0, 1, 1, -3.1427968e-05),
    (3, 0, 1, 1, 2.59835559e-06),
    (4, 0, 1, 1, -4.77136523e-08),
    (0, 1, 1, 1, 0.0086420339),
    (1, 1, 1, 1, -0.000687405181),
    (2, 1, 1, 1, -9.13863872e-06),
    (3, 1, 1, 1, 5.15916806e-07),
    (0, 2, 1, 1, -3.59217476e-05),
    (1, 2, 1, 1, 3.28696511e-05),
    (2, 2, 1, 1, -7.10542454e-07),
    (0, 3, 1, 1, -1.243823e-05),
    (1, 3, 1, 1, -7.385844e-09),
    (0, 4, 1, 1, 2.20609296e-07),
    (0, 0, 2, 1, -0.00073246918),
    (1, 0, 2, 1, -1.87381964e-05),
    (2, 0, 2, 1, 4.80925239e-06),
    (3, 0, 2, 1, -8.7549204e-08),
    (0, 1, 2, 1, 2.7786293e-05),
    (1, 1, 2, 1, -5.06004592e-06),
    (2, 1, 2, 1, 1.14325367e-07),
    (0, 2, 2, 1, 2.53016723e-06),
    (1, 2, 2, 1, -1.72857035e-08),
    (0, 3, 2, 1, -3.95079398e-08),
    (0, 0, 3, 1, -3.59413173e-07),
    (1, 0, 3, 1, 7.04388046e-07),
    (2, 0, 3, 1, -1.89309167e-08),
    (0, 1, 3, 1, -4.79768731e-07),
    (1, 1, 3, 1, 7.96079978e-09),
    (0, 2, 3, 1, 1.62897058e-09),
    (0, 0, 4, 1, 3.94367674e-08),
    (1, 0, 4, 1, -1.18566247e-09),
    (0, 1, 4, 1, 3.34678041e-10),
    (0, 0, 5, 1, -1.15606447e-10),
    (0, 0, 0, 2, -2.80626406),
    (1, 0, 0, 2, 0.548712484),
    (2, 0, 0, 2, -0.0039942841),
    (3, 0, 0, 2, -0.000954009191),
    (4, 0, 0, 2, 1.93090978e-05),
    (0, 1, 0, 2, -0.308806365),
    (1, 1, 0, 2, 0.0116952364),
    (2, 1, 0, 2, 0.000495271903),
    (3, 1, 0, 2, -1.90710882e-05),
    (0, 2, 0, 2, 0.00210787756),
    (1, 2, 0, 2, -0.000698445738),
    (2, 2, 0, 2, 2.30109073e-05),
    (0, 3, 0, 2, 0.00041785659),
    (1, 3, 0, 2, -1.27043871e-05),
    (0, 4, 0, 2, -3.04620472e-06),
    (0, 0, 1, 2, 0.0514507424),
    (1, 0, 1, 2, -0.00432510997),
    (2, 0, 1, 2, 8.99281156e-05),
    (3, 0, 1, 2, -7.14663943e-07),
    (0, 1, 1, 2, -0.000266016305),
    (1, 1, 1, 2, 0.000263789586),
    (2, 1, 1, 2, -7.01199003e-06),
    (0, 2, 1, 2, -0.000106823306),
    (1, 2, 1, 2, 3.61341136e-06),
    (0, 3, 1, 2, 2.29748967e-07),
    (0, 0, 2, 2, 0.000304788893),
    (1, 0, 2, 2, -6.42070836e-05),
    (2, 0, 2, 2, 1.16257971e-06),
    (0, 1, 2, 2, 7.68023384e-06),
    (1, 1, 2, 2, -5.47446896e-07),
    (0, 2, 2, 2, -3.5993791e-08),
    (0, 0, 3, 2, -4.36497725e-06),
    (1, 0, 3, 2, 1.68737969e-07),
    (0, 1, 3, 2, 2.67489271e-08),
    (0, 0, 4, 2, 3.23926897e-09),
    (0, 0, 0, 3, -0.0353874123),
    (1, 0, 0, 3, -0.22120119),
    (2, 0, 0, 3, 0.0155126038),
    (3, 0, 0, 3, -0.000263917279),
    (0, 1, 0, 3, 0.0453433455),
    (1, 1, 0, 3, -0.00432943862),
    (2, 1, 0, 3, 0.000145389826),
    (0, 2, 0, 3, 0.00021750861),
    (1, 2, 0, 3, -6.66724702e-05),
    (0, 3, 0, 3, 3.3321714e-05),
    (0, 0, 1, 3, -0.00226921615),
    (1, 0, 1, 3, 0.000380261982),
    (2, 0, 1, 3, -5.45314314e-09),
    (0, 1, 1, 3, -0.000796355448),
    (1, 1, 1, 3, 2.53458034e-05),
    (0, 2, 1, 3, -6.31223658e-06),
    (0, 0, 2, 3, 0.000302122035),
    (1, 0, 2, 3, -4.77403547e-06),
    (0, 1, 2, 3, 1.73825715e-06),
    (0, 0, 3, 3, -4.09087898e-07),
    (0, 0, 0, 4, 0.614155345),
    (1, 0, 0, 4, -0.0616755931),
    (2, 0, 0, 4, 0.00133374846),
    (0, 1, 0, 4, 0.00355375387),
    (1, 1, 0, 4, -0.000513027851),
    (0, 2, 0, 4, 0.000102449757),
    (0, 0, 1, 4, -0.00148526421),
    (1, 0, 1, 4, -4.11469183e-05),
    (0, 1, 1, 4, -6.80434415e-06),
    (0, 0, 2, 4, -9.77675906e-06),
    (0, 0, 0, 5, 0.0882773108),
    (1, 0, 0, 5, -0.00301859306),
    (0, 1, 0, 5, 0.00104452989),
    (0, 0, 1, 5, 0.000247090539),
    (0, 0, 0, 6, 0.00148348065),
)
UTCI_EXPONENTS = np.array([t[:4] for t in _TERMS], dtype=np.int64)
UTCI_COEFFS = np.array([t[4] for t in _TERMS], dtype=np.float64)


class StressCategory(IntEnum):
    EXTREME_COLD = 0
    VERY_STRONG_COLD = 1
    STRONG_COLD = 2
    MODERATE_COLD = 3
    SLIGHT_COLD = 4
    NO_THERMAL_STRESS = 5
    MODERATE_HEAT = 6
    STRONG_HEAT = 7
    VERY_STRONG_HEAT = 8
    EXTREME_HEAT = 9

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", " ") + ("" if self is StressCategory.NO_THERMAL_STRESS
                                                      else " stress")


CATEGORY_EDGES = np.array([-40.0, -27.0, -13.0, 0.0, 9.0, 26.0, 32.0, 38.0, 46.0])
STRONG_HEAT_THRESHOLD = 32.0


def stress_category(utci):
    """Lower-inclusive band lookup; returns a StressCategory (scalar) or int array."""
    arr = np.asarray(utci, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("UTCI must be finite")
    idx = np.searchsorted(CATEGORY_EDGES, arr, side="right")
    return StressCategory(int(idx)) if idx.ndim == 0 else idx.astype(np.int8)


def category_legend() -> dict:
    lo = [None] + CATEGORY_EDGES.tolist()
    hi = CATEGORY_EDGES.tolist() + [None]
    return {str(int(c)): {"name": c.label, "lower": lo[c], "upper": hi[c]} for c in StressCategory}


def clamp_inputs(air_temp, t_mrt, wind10):
    """Clamp to the operational box. Returns (ta, dtmrt, va, clamped_mask)."""
    ta = np.asarray(air_temp, dtype=np.float64)
    dt = np.asarray(t_mrt, dtype=np.float64) - ta
    va = np.asarray(wind10, dtype=np.float64)
    ta_c = np.clip(ta, *TA_RANGE)
    dt_c = np.clip(dt, *DTMRT_RANGE)
    va_c = np.clip(va, *WIND_RANGE)
    clamped = (ta_c != ta) | (dt_c != dt) | (va_c != va)
    return ta_c, dt_c, va_c, clamped


def _poly(ta, va, dt, pa):
    ta_p = [np.ones_like(ta)]
    va_p = [np.ones_like(va)]
    dt_p = [np.ones_like(dt)]
    pa_p = [np.ones_like(pa)]
    for _ in range(6):
        ta_p.append(ta_p[-1] * ta)
        va_p.append(va_p[-1] * va)
        dt_p.append(dt_p[-1] * dt)
        pa_p.append(pa_p[-1] * pa)
    total = np.zeros(np.broadcast(ta, va, dt, pa).shape)
    for (a, b, c, d), coef in zip(UTCI_EXPONENTS, UTCI_COEFFS):
        total = total + coef * ta_p[a] * va_p[b] * dt_p[c] * pa_p[d]
    return ta + total


def utci_approx(air_temp, t_mrt, wind10, vapor_hpa, return_clamped: bool = False):
    """UTCI (degC) from air temperature, T_mrt, 10 m wind and vapour pressure (hPa).

    Inputs outside the operational box are clamped; a warning is issued unless
    ``return_clamped`` is set, in which case the mask is returned alongside.
    """
    arrays = [np.asarray(v, dtype=np.float64) for v in (air_temp, t_mrt, wind10, vapor_hpa)]
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise ValueError("UTCI inputs must be finite")
    ta, dt, va, clamped = clamp_inputs(*arrays[:3])
    out = _poly(ta, va, dt, arrays[3] / 10.0)
    if return_clamped:
        return (float(out) if out.ndim == 0 else out), clamped
    if np.any(clamped):
        warnings.warn(f"{int(np.sum(clamped))} UTCI input(s) clamped to the operational domain",
                      stacklevel=2)
    return float(out) if out.ndim == 0 else out


def dtmrt_polynomial(air_temp: float, wind10: float, vapor_hpa: float) -> np.ndarray:
    """Collapse the polynomial for fixed (ta, va, e) into 7 coefficients in dtmrt.

    ``UTCI = ta + sum_k c[k] * dtmrt**k``; used for grid evaluation where only
    T_mrt varies from cell to cell. Inputs must already be in the domain.
    """
    ta, va, pa = float(air_temp), float(wind10), float(vapor_hpa) / 10.0
    c = np.zeros(7)
    for (a, b, k, d), coef in zip(UTCI_EXPONENTS, UTCI_COEFFS):
        c[k] += coef * ta**a * va**b * pa**d
    return c


def hourly_utci_array(tmrt: np.ndarray, met: MetRecord) -> tuple[np.ndarray, int]:
    """UTCI for a float64 T_mrt array (NaN = nodata). Returns (utci, n_clamped)."""
    ta_c, _, va_c, met_clamped = clamp_inputs(met.air_temp, met.air_temp, met.wind_speed)
    ta_c, va_c = float(ta_c), float(va_c)
    e = vapor_pressure(met.air_temp, met.rel_humidity)
    c = dtmrt_polynomial(ta_c, va_c, e)
    valid = ~np.isnan(tmrt)
    dt = np.where(valid, tmrt, met.air_temp) - met.air_temp
    dt_c = np.clip(dt, *DTMRT_RANGE)
    clamped = valid & ((dt_c != dt) | bool(met_clamped) | (ta_c != met.air_temp))
    acc = np.full_like(dt_c, c[6])
    for k in range(5, -1, -1):
        acc = acc * dt_c + c[k]
    out = ta_c + acc
    out[~valid] = np.nan
    return out, int(clamped.sum())


def hourly_utci_map(tmrt: Grid, met: MetRecord) -> Grid:
    """Per-cell UTCI with spatially uniform air temperature, wind and humidity."""
    arr, n_clamped = hourly_utci_array(tmrt.masked(), met)
    if n_clamped:
        warnings.warn(f"{n_clamped} cell(s) clamped to the UTCI operational domain", stacklevel=2)
    nod = np.isnan(arr)
    return tmrt.with_values(np.where(nod, 0.0, arr), units="degC", nodata_mask=nod)


def daytime_average(maps: Sequence[Grid]) -> Grid:
    """Per-cell mean over the 12 hourly maps, skipping nodata hours."""
    if len(maps) != N_HOURS:
        raise ValueError(f"daytime average needs exactly {N_HOURS} hourly maps, got {len(maps)}")
    first = maps[0]
    for m in maps[1:]:
        assert_aligned(first, m)
    # Sorting each cell's hours fixes the summation order, so any permutation
    # of the inputs yields bit-identical output.
    stack = np.stack([np.where(m.valid, m.values, np.float32(np.nan)) for m in maps])
    stack.sort(axis=0)
    count = np.sum(~np.isnan(stack), axis=0)
    total = np.zeros(first.shape, dtype=np.float64)
    for layer in stack:
        total += np.where(np.isnan(layer), 0.0, layer)
    mean = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    return first.with_values(mean, units=first.units, nodata_mask=count == 0)


def category_map(utci: Grid) -> Grid:
    """Integer-coded stress-category grid (codes per :func:`category_legend`)."""
    vals = utci.values.astype(np.float64)
    ok = utci.valid
    cats = np.zeros(utci.shape, dtype=np.float64)
    cats[ok] = stress_category(vals[ok])
    return utci.with_values(cats, units="category", nodata_mask=~ok)
