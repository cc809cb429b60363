"""Land-cover substitution scenarios and delta-UTCI accounting."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .raster import (LANDCOVER_CLASSES, TREE_CANOPY, Grid, LandCoverGrid, ZoneGrid,
                     assert_aligned, resolve_class, tile_index)

CITYWIDE_MEAN = "citywide-mean"


class NoTreeCanopyError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    source_class: int
    target_class: int = TREE_CANOPY
    tile_size: int = 512
    fallback_height: Union[float, str] = CITYWIDE_MEAN

    def __post_init__(self):
        object.__setattr__(self, "source_class", resolve_class(self.source_class))
        if self.target_class != TREE_CANOPY:
            raise ValueError("the substitution target is fixed to tree canopy")
        if self.source_class == self.target_class:
            raise ValueError("source class must differ from the target class (tree canopy)")
        if int(self.tile_size) <= 0:
            raise ValueError("tile_size must be positive")
        fb = self.fallback_height
        if isinstance(fb, str) and fb != CITYWIDE_MEAN:
            fb = float(fb)
        if not isinstance(fb, str) and not (math.isfinite(fb) and fb >= 0):
            raise ValueError("fallback_height must be a non-negative number or 'citywide-mean'")
        object.__setattr__(self, "fallback_height", fb)

    @property
    def name(self) -> str:
        return f"{LANDCOVER_CLASSES[self.source_class]}->tree_canopy"

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


class LandCoverSubstitution(BaseEstimator, TransformerMixin):
    """Turn every ``source_class`` cell into tree canopy and re-assign its height.

    ``X`` is a ``(LandCoverGrid, ndsm Grid)`` pair. ``fit`` learns the citywide
    mean canopy height; ``transform`` gives each substituted cell the mean
    canopy height of its tile (tiles anchored at cell (0, 0)), falling back to
    the citywide mean, or to ``fallback_height`` when that is a number.
    """

    def __init__(self, source_class=3, tile_size: int = 512, fallback_height=CITYWIDE_MEAN):
        self.source_class = source_class
        self.tile_size = tile_size
        self.fallback_height = fallback_height

    @classmethod
    def from_spec(cls, spec: ScenarioSpec) -> "LandCoverSubstitution":
        return cls(spec.source_class, spec.tile_size, spec.fallback_height)

    def _spec(self) -> ScenarioSpec:
        return ScenarioSpec(self.source_class, TREE_CANOPY, self.tile_size, self.fallback_height)

    @staticmethod
    def _unpack(X):
        lc, ndsm = X
        assert_aligned(lc, ndsm)
        return lc, ndsm

    def fit(self, X, y=None):
        spec = self._spec()
        lc, ndsm = self._unpack(X)
        trees = (lc.codes == TREE_CANOPY) & lc.valid & ndsm.valid
        self.n_tree_cells_ = int(trees.sum())
        if self.n_tree_cells_:
            self.citywide_tree_height_ = float(np.mean(ndsm.values[trees], dtype=np.float64))
        else:
            self.citywide_tree_height_ = None
        if isinstance(spec.fallback_height, str):
            if self.citywide_tree_height_ is None:
                raise NoTreeCanopyError(
                    "no tree-canopy cells anywhere and fallback_height is 'citywide-mean'")
            self.fallback_height_ = self.citywide_tree_height_
        else:
            self.fallback_height_ = float(spec.fallback_height)
        self.spec_ = spec
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        lc, ndsm = self._unpack(X)
        spec = self.spec_
        codes = lc.codes
        mask = (codes == spec.source_class) & lc.valid
        if not mask.any():
            return lc, ndsm
        tiles = tile_index(lc.nrows, lc.ncols, int(spec.tile_size))
        trees = (codes == TREE_CANOPY) & lc.valid & ndsm.valid
        ntiles = int(tiles.max()) + 1
        sums = np.bincount(tiles[trees], weights=ndsm.values[trees].astype(np.float64),
                           minlength=ntiles)
        counts = np.bincount(tiles[trees], minlength=ntiles)
        tile_mean = np.divide(sums, counts, out=np.full(ntiles, self.fallback_height_),
                              where=counts > 0)
        new_codes = codes.copy()
        new_codes[mask] = TREE_CANOPY
        heights = ndsm.values.copy()
        heights[mask] = tile_mean[tiles[mask]]
        return lc.with_codes(new_codes), ndsm.with_values(heights)


def substitution_mask(lc: LandCoverGrid, source_class) -> np.ndarray:
    code = resolve_class(source_class)
    return (lc.codes == code) & lc.valid


def apply_substitution(lc: LandCoverGrid, ndsm: Grid, spec: ScenarioSpec):
    """Counterfactual (land cover, nDSM) pair for ``spec``."""
    return LandCoverSubstitution.from_spec(spec).fit_transform((lc, ndsm))


def scenario_delta(base_utci: Grid, scenario_utci: Grid) -> Grid:
    """scenario - base per cell; nodata in either input gives nodata."""
    assert_aligned(base_utci, scenario_utci)
    ok = base_utci.valid & scenario_utci.valid
    diff = scenario_utci.values.astype(np.float64) - base_utci.values.astype(np.float64)
    return base_utci.with_values(np.where(ok, diff, 0.0), units="K", nodata_mask=~ok)


@dataclass(frozen=True)
class ScenarioSummary:
    area_km2: float
    avg_delta_utci: float
    sd_delta_utci: float
    post_mean_utci: float
    total_delta: float
    n_cells: int = 0

    def consistency_error(self) -> float:
        return total_delta_consistency(self.area_km2, self.avg_delta_utci, self.total_delta)


def total_delta_consistency(area_km2: float, avg_delta: float, total_delta: float) -> float:
    """Relative gap between |total| and area * |avg| (area in km2, total in K*m2)."""
    implied = area_km2 * 1e6 * abs(avg_delta)
    return abs(abs(total_delta) - implied) / max(abs(total_delta), implied, 1e-300)


def summarize_scenario(delta: Grid, post: Grid, mask: np.ndarray,
                       cellsize: float | None = None) -> ScenarioSummary:
    """Table-style statistics over the substituted cells only."""
    assert_aligned(delta, post)
    cellsize = delta.cellsize if cellsize is None else cellsize
    sel = np.asarray(mask, dtype=bool) & delta.valid & post.valid
    n = int(sel.sum())
    if n == 0:
        raise ValueError("scenario mask selects no valid cells")
    d = delta.values[sel].astype(np.float64)
    cell_area = float(cellsize) ** 2
    total = float(np.sum(d))
    avg = total / n
    return ScenarioSummary(
        area_km2=n * cell_area / 1e6,
        avg_delta_utci=avg,
        sd_delta_utci=float(np.sqrt(np.sum((d - avg) ** 2) / n)),
        post_mean_utci=float(np.sum(post.values[sel].astype(np.float64)) / n),
        total_delta=total * cell_area,
        n_cells=n,
    )


def zonal_summary(delta: Grid, post: Grid, zones: ZoneGrid, lc: LandCoverGrid,
                  source_class) -> list[dict]:
    """One row per zone id present in ``zones`` (0 excluded), sorted by id."""
    for g in (post, zones, lc):
        assert_aligned(delta, g)
    code = resolve_class(source_class)
    zid = zones.zone_id
    ids = np.unique(zid[zid > 0])
    if ids.size == 0:
        return []
    nz = int(ids.max()) + 1
    in_lc = lc.valid
    is_src = (lc.codes == code) & in_lc
    sub = is_src & delta.valid & post.valid
    zone_cells = np.bincount(zid[in_lc], minlength=nz)
    src_cells = np.bincount(zid[is_src], minlength=nz)
    counts = np.bincount(zid[sub], minlength=nz)
    dsum = np.bincount(zid[sub], weights=delta.values[sub].astype(np.float64), minlength=nz)
    psum = np.bincount(zid[sub], weights=post.values[sub].astype(np.float64), minlength=nz)
    rows = []
    for z in ids:
        c = int(counts[z])
        rows.append({
            "zone_id": int(z),
            "source_class_fraction": float(src_cells[z] / zone_cells[z]) if zone_cells[z] else 0.0,
            "mean_delta": float(dsum[z] / c) if c else 0.0,
            "cell_count": c,
            "mean_post_utci": float(psum[z] / c) if c else 0.0,
        })
    return rows


SUMMARY_COLUMNS = ("scenario", "source_class", "area_km2", "avg_delta_utci", "sd_delta_utci",
                   "post_mean_utci", "total_delta_kxm2", "n_cells")
ZONAL_COLUMNS = ("zone_id", "source_class_fraction", "mean_delta", "cell_count", "mean_post_utci")


def write_summary_csv(rows: list[tuple[ScenarioSpec, ScenarioSummary]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for spec, s in rows:
            w.writerow([spec.name, spec.source_class, repr(s.area_km2), repr(s.avg_delta_utci),
                        repr(s.sd_delta_utci), repr(s.post_mean_utci), repr(s.total_delta),
                        s.n_cells])


def write_zonal_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=ZONAL_COLUMNS)
        w.writeheader()
        w.writerows(rows)
