"""Training tiles, input scaling and dataset construction for the surrogate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import as_2d_float, as_codes, check_met_matrix, check_same_shape
from ..meteo import MET_VARIABLES, N_HOURS, MetSeries, MetStandardizer, NormStats
from ..raster import Grid, LandCoverGrid, assert_aligned, iter_tiles

LC_SCALE = 6.0


@dataclass(frozen=True)
class TileSample:
    """One training or inference tile in physical units.

    ``ndsm`` is heights (m) with NaN at nodata, ``landcover`` integer codes
    with -1 at nodata, ``met`` the raw T x N hourly matrix and ``utci`` the
    daytime-mean target (degC, NaN at nodata) or None.
    """

    ndsm: np.ndarray
    landcover: np.ndarray
    met: np.ndarray
    utci: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "ndsm", as_2d_float(self.ndsm, "ndsm"))
        object.__setattr__(self, "landcover", as_codes(self.landcover))
        object.__setattr__(self, "met", check_met_matrix(self.met, N_HOURS, len(MET_VARIABLES)))
        if self.utci is not None:
            object.__setattr__(self, "utci", as_2d_float(self.utci, "utci"))
        check_same_shape(ndsm=self.ndsm, landcover=self.landcover, utci=self.utci)


def tiles_from_grids(ndsm: Grid, lc: LandCoverGrid, met: MetSeries | np.ndarray,
                     utci: Grid | None = None, tile: int = 64) -> list[TileSample]:
    """Cut aligned rasters into full ``tile`` x ``tile`` samples anchored at (0, 0)."""
    assert_aligned(ndsm, lc)
    if utci is not None:
        assert_aligned(ndsm, utci)
    m = met.to_matrix() if isinstance(met, MetSeries) else np.asarray(met, dtype=np.float64)
    h = ndsm.masked(np.nan).astype(np.float64)
    codes = np.where(lc.valid, lc.codes, -1)
    y = utci.masked(np.nan).astype(np.float64) if utci is not None else None
    out = []
    for rows, cols in iter_tiles(ndsm.nrows, ndsm.ncols, tile):
        if rows.stop - rows.start < tile or cols.stop - cols.start < tile:
            continue
        out.append(TileSample(h[rows, cols], codes[rows, cols], m,
                              None if y is None else y[rows, cols]))
    return out


class TileNormalizer(BaseEstimator, TransformerMixin):
    """Scales inputs as the network expects and standardizes the target.

    nDSM is z-scored with corpus statistics, land cover is divided by 6,
    met matrices are z-scored per variable (constant variables get sd 1) and
    the UTCI target is z-scored. Statistics come from the samples passed to
    ``fit``, which should be the training split only.
    """

    def fit(self, X: list[TileSample], y=None):
        if not X:
            raise ValueError("cannot fit normalizer on an empty dataset")
        h = np.concatenate([s.ndsm[np.isfinite(s.ndsm)] for s in X])
        self.ndsm_mean_ = float(h.mean()) if h.size else 0.0
        sd = float(h.std()) if h.size else 0.0
        self.ndsm_sd_ = sd if sd > 0 else 1.0
        self.met_ = MetStandardizer(constant_policy="unit").fit(np.stack([s.met for s in X]))
        targets = [s.utci[np.isfinite(s.utci)] for s in X if s.utci is not None]
        if targets:
            t = np.concatenate(targets)
            self.target_mean_ = float(t.mean())
            tsd = float(t.std())
            self.target_sd_ = tsd if tsd > 0 else 1.0
        else:
            self.target_mean_, self.target_sd_ = 0.0, 1.0
        return self

    def transform(self, X: list[TileSample], dtype=torch.float32) -> dict:
        check_is_fitted(self, "met_")
        ndsm = np.stack([np.nan_to_num((s.ndsm - self.ndsm_mean_) / self.ndsm_sd_, nan=0.0)
                         for s in X])
        lc = np.stack([np.where(s.landcover >= 0, s.landcover, 0) / LC_SCALE for s in X])
        met = self.met_.transform(np.stack([s.met for s in X]))
        out = {
            "ndsm": torch.as_tensor(ndsm[:, None], dtype=dtype),
            "landcover": torch.as_tensor(lc[:, None], dtype=dtype),
            "met": torch.as_tensor(met, dtype=dtype),
        }
        if all(s.utci is not None for s in X):
            y = np.stack([s.utci for s in X])
            mask = np.isfinite(y) & np.stack([s.landcover >= 0 for s in X])
            z = np.where(mask, (np.nan_to_num(y) - self.target_mean_) / self.target_sd_, 0.0)
            out["target"] = torch.as_tensor(z[:, None], dtype=dtype)
            out["mask"] = torch.as_tensor(mask[:, None], dtype=dtype)
        return out

    def inverse_target(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.target_sd_ + self.target_mean_

    def to_json(self) -> dict:
        check_is_fitted(self, "met_")
        return {"ndsm_mean": self.ndsm_mean_, "ndsm_sd": self.ndsm_sd_,
                "target_mean": self.target_mean_, "target_sd": self.target_sd_,
                "met": self.met_.stats_.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "TileNormalizer":
        n = cls()
        n.ndsm_mean_, n.ndsm_sd_ = float(d["ndsm_mean"]), float(d["ndsm_sd"])
        n.target_mean_, n.target_sd_ = float(d["target_mean"]), float(d["target_sd"])
        n.met_ = MetStandardizer(constant_policy="unit")
        n.met_.stats_ = NormStats.from_json(d["met"])
        return n


def split_indices(n: int, train_fraction: float = 0.7, seed: int = 0):
    """Random train/test partition of ``range(n)``; train gets round(0.7 n)."""
    if n < 2:
        raise ValueError("need at least two samples to split")
    order = np.random.default_rng(seed).permutation(n)
    k = min(max(1, int(round(train_fraction * n))), n - 1)
    return np.sort(order[:k]), np.sort(order[k:])


def physics_tiles(n_scenes: int = 1, size: int = 128, tile: int = 64, seed: int = 0,
                  latitude: float = 39.95, longitude: float = -75.16) -> list[TileSample]:
    """Simulate synthetic scenes with the physics engine and cut them into tiles."""
    from ..pipeline import Scene, simulate_day
    from ..synthetic import synthetic_met_series, synthetic_scene

    out = []
    for k in range(n_scenes):
        dsm, lc = synthetic_scene(size, seed=seed + k)
        met = synthetic_met_series(seed=seed + k)
        res = simulate_day(Scene(dsm, lc, met), latitude, longitude)
        out.extend(tiles_from_grids(dsm, lc, met, res.mean, tile))
    return out
