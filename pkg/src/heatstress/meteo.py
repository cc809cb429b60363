"""Hourly meteorology: CSV ingest, validation, humidity, z-score scaling."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

N_HOURS = 12
FIRST_HOUR = 8

# Fixed 18-variable contract (NSRDB-style superset), in matrix column order.
MET_VARIABLES = (
    "air_temp",
    "rel_humidity",
    "wind_speed",
    "wind_dir",
    "pressure",
    "dew_point",
    "ghi",
    "dni",
    "dhi",
    "clearsky_ghi",
    "clearsky_dni",
    "clearsky_dhi",
    "solar_zenith",
    "surface_albedo",
    "precipitable_water",
    "ozone",
    "aerosol_od",
    "cloud_fraction",
)
N_VARIABLES = len(MET_VARIABLES)

_IRRADIANCE = ("ghi", "dni", "dhi", "clearsky_ghi", "clearsky_dni", "clearsky_dhi")


class MetValidationError(ValueError):
    """Invalid meteorological input. ``code`` is one of: missing_column,
    timestamp_format, timestamp_order, series_length, window, value_range."""

    def __init__(self, code: str, message: str, row: int | None = None):
        super().__init__(message)
        self.code = code
        self.row = row


@dataclass(frozen=True)
class MetRecord:
    timestamp: datetime
    air_temp: float
    rel_humidity: float
    wind_speed: float
    wind_dir: float
    pressure: float
    dew_point: float
    ghi: float
    dni: float
    dhi: float
    clearsky_ghi: float
    clearsky_dni: float
    clearsky_dhi: float
    solar_zenith: float
    surface_albedo: float
    precipitable_water: float
    ozone: float
    aerosol_od: float
    cloud_fraction: float

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in MET_VARIABLES], dtype=np.float64)

    def check(self, row: int | None = None) -> None:
        """Raise ``MetValidationError('value_range')`` on the first physical violation."""
        where = f" in row {row}" if row is not None else ""
        for name in MET_VARIABLES:
            v = getattr(self, name)
            if not math.isfinite(v):
                raise MetValidationError("value_range", f"{name} is not finite{where}", row)
        limits = {
            "rel_humidity": (0.0, 100.0),
            "surface_albedo": (0.0, 1.0),
            "cloud_fraction": (0.0, 1.0),
            "solar_zenith": (0.0, 180.0),
        }
        for name, (lo, hi) in limits.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise MetValidationError(
                    "value_range", f"{name}={v} outside [{lo}, {hi}]{where}", row)
        if self.wind_speed < 0:
            raise MetValidationError("value_range", f"wind_speed={self.wind_speed} < 0{where}", row)
        if not 0.0 <= self.wind_dir < 360.0:
            raise MetValidationError("value_range", f"wind_dir={self.wind_dir} outside [0, 360){where}", row)
        if self.pressure <= 0:
            raise MetValidationError("value_range", f"pressure={self.pressure} must be > 0{where}", row)
        for name in _IRRADIANCE:
            if getattr(self, name) < 0:
                raise MetValidationError("value_range", f"{name} is negative{where}", row)
        if self.dhi > self.ghi:
            raise MetValidationError(
                "value_range", f"dhi={self.dhi} exceeds ghi={self.ghi}{where}", row)


@dataclass(frozen=True)
class MetSeries:
    """Twelve hourly records, 08:00 through 19:00 local time."""

    records: tuple[MetRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        validate_series(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __iter__(self):
        return iter(self.records)

    def to_matrix(self) -> np.ndarray:
        """T x N float64 matrix in ``MET_VARIABLES`` column order."""
        return np.stack([r.as_vector() for r in self.records])

    @property
    def hours(self) -> list[int]:
        return [r.timestamp.hour for r in self.records]


def validate_series(records: Sequence[MetRecord]) -> None:
    if len(records) != N_HOURS:
        raise MetValidationError(
            "series_length", f"expected T = {N_HOURS} hourly records, got {len(records)}")
    for i, rec in enumerate(records):
        rec.check(i)
    for i in range(1, len(records)):
        step = records[i].timestamp - records[i - 1].timestamp
        if step != timedelta(hours=1):
            raise MetValidationError(
                "timestamp_order",
                f"timestamps must increase by exactly one hour (row {i})", i)
    first = records[0].timestamp
    if first.hour != FIRST_HOUR or first.minute or first.second:
        raise MetValidationError(
            "window", f"series must start at 08:00 local time, starts at {first.time()}", 0)


def _parse_timestamp(text: str, row: int) -> datetime:
    try:
        ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError:
        raise MetValidationError("timestamp_format", f"unparseable timestamp {text!r} in row {row}", row)
    if ts.tzinfo is None:
        raise MetValidationError(
            "timestamp_format", f"timestamp {text!r} in row {row} has no UTC offset", row)
    return ts


def parse_met_csv(path) -> MetSeries:
    """Parse a 12-row hourly CSV with a ``timestamp`` column and the 18 variables."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        required = ("timestamp",) + MET_VARIABLES
        missing = [c for c in required if c not in header]
        if missing:
            raise MetValidationError("missing_column", f"missing column(s): {', '.join(missing)}")
        extra = [c for c in header if c not in required]
        if extra:
            warnings.warn(f"ignoring unknown met columns: {', '.join(extra)}", stacklevel=2)
        rows = [{k.strip(): v for k, v in row.items() if k is not None} for row in reader]

    if len(rows) != N_HOURS:
        raise MetValidationError(
            "series_length", f"expected T = {N_HOURS} hourly rows, got {len(rows)}")
    records = []
    for i, row in enumerate(rows):
        ts = _parse_timestamp(row["timestamp"], i)
        if records and ts <= records[-1].timestamp:
            raise MetValidationError("timestamp_order", f"timestamp in row {i} is not increasing", i)
        try:
            vals = {k: float(row[k]) for k in MET_VARIABLES}
        except (TypeError, ValueError):
            raise MetValidationError("value_range", f"non-numeric value in row {i}", i)
        records.append(MetRecord(timestamp=ts, **vals))
    return MetSeries(tuple(records))


def write_met_csv(series: MetSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("timestamp",) + MET_VARIABLES)
        for rec in series:
            w.writerow([rec.timestamp.isoformat()] + [repr(float(getattr(rec, k))) for k in MET_VARIABLES])


def vapor_pressure(air_temp, rel_humidity):
    """Water-vapour pressure in hPa from air temperature (degC) and RH (%), Magnus form."""
    rh = np.asarray(rel_humidity, dtype=np.float64)
    if np.any((rh < 0) | (rh > 100)):
        raise ValueError("relative humidity must lie in [0, 100]")
    ta = np.asarray(air_temp, dtype=np.float64)
    e = (rh / 100.0) * 6.1094 * np.exp(17.625 * ta / (ta + 243.04))
    return float(e) if e.ndim == 0 else e


# ---------------------------------------------------------------------------
# Normalization


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    sd: np.ndarray
    variables: tuple[str, ...] = MET_VARIABLES

    def to_json(self) -> dict:
        return {v: {"mean": float(m), "sd": float(s)}
                for v, m, s in zip(self.variables, self.mean, self.sd)}

    @classmethod
    def from_json(cls, obj: dict) -> "NormStats":
        missing = [v for v in MET_VARIABLES if v not in obj]
        if missing:
            raise ValueError(f"normalization stats missing: {', '.join(missing)}")
        mean = np.array([obj[v]["mean"] for v in MET_VARIABLES], dtype=np.float64)
        sd = np.array([obj[v]["sd"] for v in MET_VARIABLES], dtype=np.float64)
        return cls(mean, sd)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NormStats":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _as_matrix(series) -> np.ndarray:
    if isinstance(series, MetSeries):
        return series.to_matrix()
    return np.asarray(series, dtype=np.float64)


def zscore_normalize(series, stats: NormStats) -> np.ndarray:
    """(x - mean) / sd per variable; accepts a MetSeries or a (..., N) array."""
    x = _as_matrix(series)
    if x.shape[-1] != len(stats.mean):
        raise ValueError(f"expected {len(stats.mean)} variables, got {x.shape[-1]}")
    if np.any(stats.sd <= 0):
        bad = [v for v, s in zip(stats.variables, stats.sd) if s <= 0]
        raise ValueError(f"zero standard deviation for: {', '.join(bad)}")
    return (x - stats.mean) / stats.sd


def zscore_denormalize(z, stats: NormStats) -> np.ndarray:
    return np.asarray(z, dtype=np.float64) * stats.sd + stats.mean


class MetStandardizer(BaseEstimator, TransformerMixin):
    """Per-variable z-scoring fitted on a corpus of met matrices.

    ``X`` is a MetSeries, a list of them, or an array whose last axis holds
    the 18 variables. Variables with zero spread in the corpus get ``sd = 1``
    when ``constant_policy='unit'``; the default ``'raise'`` refuses them.
    """

    def __init__(self, constant_policy: str = "raise"):
        self.constant_policy = constant_policy

    def _stack(self, X) -> np.ndarray:
        if isinstance(X, MetSeries):
            return X.to_matrix()
        if isinstance(X, (list, tuple)) and X and isinstance(X[0], MetSeries):
            return np.stack([s.to_matrix() for s in X])
        return np.asarray(X, dtype=np.float64)

    def fit(self, X, y=None):
        x = self._stack(X).reshape(-1, N_VARIABLES)
        mean = x.mean(axis=0)
        sd = x.std(axis=0)
        zero = sd <= 0
        if zero.any():
            if self.constant_policy != "unit":
                bad = [v for v, z in zip(MET_VARIABLES, zero) if z]
                raise ValueError(f"zero standard deviation for: {', '.join(bad)}")
            sd = np.where(zero, 1.0, sd)
        self.stats_ = NormStats(mean, sd)
        return self

    def transform(self, X):
        check_is_fitted(self, "stats_")
        return zscore_normalize(self._stack(X), self.stats_)

    def inverse_transform(self, Z):
        check_is_fitted(self, "stats_")
        return zscore_denormalize(Z, self.stats_)
