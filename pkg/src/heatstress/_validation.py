"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np

from .raster import N_CLASSES


def as_2d_float(x, name: str) -> np.ndarray:
    """float64 2-D array; NaN allowed (nodata), infinities are not."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if np.isinf(a).any():
        raise ValueError(f"{name} contains infinite values")
    return a


def as_codes(x, name: str = "landcover") -> np.ndarray:
    """int64 2-D land-cover codes in 0..6, or -1 for nodata."""
    a = np.asarray(x)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if a.dtype.kind == "f":
        if not np.all(np.isfinite(a)) or np.any(a != np.round(a)):
            raise ValueError(f"{name} codes must be integers")
    a = a.astype(np.int64)
    if a.size and (a.min() < -1 or a.max() >= N_CLASSES):
        raise ValueError(f"{name} codes must lie in 0..{N_CLASSES - 1} (or -1 for nodata)")
    return a


def check_met_matrix(x, n_hours: int, n_vars: int) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.shape != (n_hours, n_vars):
        raise ValueError(f"met matrix must be {n_hours}x{n_vars}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("met matrix contains non-finite values")
    return a


def check_same_shape(**arrays) -> None:
    shapes = {k: np.shape(v) for k, v in arrays.items() if v is not None}
    if len(set(shapes.values())) > 1:
        desc = ", ".join(f"{k} {s}" for k, s in shapes.items())
        raise ValueError(f"shape mismatch: {desc}")
