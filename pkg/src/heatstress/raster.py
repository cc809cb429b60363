"""Georeferenced raster containers, ASCII/raw-f32 I/O and tiling.

Two on-disk formats are supported:

* ESRI-style ASCII grid (``.asc``): a six-key header followed by ``nrows``
  whitespace-separated rows, north row first.
* Raw little-endian float32 (``.f32``): row-major, no header, with a JSON
  sidecar at ``<path>.json`` holding the georeference.

Cell ``(r, c)`` always maps to flat offset ``r * ncols + c``.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Union

import numpy as np

DEFAULT_NODATA = -9999.0

# Land-cover codes used throughout the engine. Overridable via a JSON class map.
LANDCOVER_CLASSES = {
    0: "water",
    1: "tree_canopy",
    2: "grass",
    3: "bare_earth",
    4: "buildings",
    5: "roads",
    6: "impervious",
}
TREE_CANOPY = 1
N_CLASSES = 7

_ALIGN_FIELDS = ("nrows", "ncols", "cellsize", "origin_x", "origin_y")
_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


class GridFormatError(ValueError):
    """Malformed raster file. ``code`` identifies the failure class."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class GridAlignmentError(ValueError):
    """Two rasters do not share a georeference. ``field`` names the first mismatch."""

    def __init__(self, field_name: str, a, b):
        super().__init__(f"grids are not aligned: {field_name} differs ({a!r} vs {b!r})")
        self.field = field_name


@dataclass(frozen=True)
class _Georef:
    values: np.ndarray
    cellsize: float = 1.0
    origin_x: float = 0.0
    origin_y: float = 0.0
    nodata: float = DEFAULT_NODATA

    @property
    def nrows(self) -> int:
        return int(self.values.shape[0])

    @property
    def ncols(self) -> int:
        return int(self.values.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.nrows, self.ncols

    def georef(self) -> dict:
        return {
            "nrows": self.nrows,
            "ncols": self.ncols,
            "cellsize": self.cellsize,
            "origin_x": self.origin_x,
            "origin_y": self.origin_y,
            "nodata": self.nodata,
        }

    def _check_common(self):
        if self.values.ndim != 2 or self.values.size == 0:
            raise ValueError("raster values must be a non-empty 2-D array")
        if not (self.cellsize > 0 and math.isfinite(self.cellsize)):
            raise ValueError(f"cellsize must be positive, got {self.cellsize}")


@dataclass(frozen=True)
class Grid(_Georef):
    """Continuous float32 raster (nDSM, T_mrt, UTCI, delta maps)."""

    units: str = ""

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float32)
        if vals is self.values:
            vals = vals.view()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        self._check_common()
        bad = ~np.isfinite(vals) & (vals != np.float32(self.nodata))
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise GridFormatError("non_finite", f"non-finite value at row {r}, col {c}")

    @property
    def valid(self) -> np.ndarray:
        """Boolean mask of cells that are not nodata."""
        return self.values != np.float32(self.nodata)

    def masked(self, fill=np.nan) -> np.ndarray:
        """float64 copy of the values with nodata replaced by ``fill``."""
        out = self.values.astype(np.float64)
        out[~self.valid] = fill
        return out

    def with_values(self, values, units: str | None = None, nodata_mask=None) -> "Grid":
        """New grid sharing this georeference. ``nodata_mask`` cells get the sentinel."""
        vals = np.array(values, dtype=np.float32)
        if vals.shape != self.shape:
            raise ValueError(f"shape {vals.shape} does not match grid {self.shape}")
        if nodata_mask is not None:
            vals[nodata_mask] = self.nodata
        return Grid(vals, self.cellsize, self.origin_x, self.origin_y, self.nodata,
                    self.units if units is None else units)


@dataclass(frozen=True)
class LandCoverGrid(_Georef):
    """Categorical raster with class codes 0..6 (see ``LANDCOVER_CLASSES``)."""

    def __post_init__(self):
        raw = np.asarray(self.values)
        if raw.dtype.kind == "f":
            nod = raw == self.nodata
            finite = np.isfinite(raw) | nod
            if not finite.all() or not np.all((raw[~nod] == np.round(raw[~nod]))):
                raise GridFormatError("non_integer", "land-cover codes must be integers")
        codes = np.asarray(raw, dtype=np.int16).copy()
        codes.flags.writeable = False
        object.__setattr__(self, "values", codes)
        self._check_common()
        sentinel = int(self.nodata)
        data = codes[codes != sentinel]
        if data.size and (data.min() < 0 or data.max() >= N_CLASSES):
            raise GridFormatError("class_range", "land-cover codes must lie in 0..6")

    @property
    def codes(self) -> np.ndarray:
        return self.values

    @property
    def valid(self) -> np.ndarray:
        return self.values != int(self.nodata)

    def with_codes(self, codes) -> "LandCoverGrid":
        return LandCoverGrid(np.asarray(codes), self.cellsize, self.origin_x, self.origin_y,
                             self.nodata)

    @classmethod
    def from_grid(cls, grid: Grid) -> "LandCoverGrid":
        return cls(grid.values, grid.cellsize, grid.origin_x, grid.origin_y, grid.nodata)


@dataclass(frozen=True)
class ZoneGrid(_Georef):
    """Integer zone ids; 0 means outside every zone."""

    nodata: float = 0.0

    def __post_init__(self):
        ids = np.asarray(self.values)
        if ids.dtype.kind == "f":
            ids = np.where(ids == self.nodata, 0, ids)
        ids = np.asarray(ids, dtype=np.int64).copy()
        ids.flags.writeable = False
        object.__setattr__(self, "values", ids)
        self._check_common()
        if (ids < 0).any():
            raise GridFormatError("class_range", "zone ids must be non-negative")

    @property
    def zone_id(self) -> np.ndarray:
        return self.values

    @classmethod
    def from_grid(cls, grid: Grid) -> "ZoneGrid":
        vals = np.where(grid.valid, grid.values, 0)
        return cls(vals, grid.cellsize, grid.origin_x, grid.origin_y)


AnyGrid = Union[Grid, LandCoverGrid, ZoneGrid]


def assert_aligned(a: AnyGrid, b: AnyGrid) -> None:
    """Raise :class:`GridAlignmentError` naming the first differing georeference field."""
    for name in _ALIGN_FIELDS:
        va, vb = getattr(a, name), getattr(b, name)
        if va != vb:
            raise GridAlignmentError(name, va, vb)


def is_aligned(a: AnyGrid, b: AnyGrid) -> bool:
    try:
        assert_aligned(a, b)
    except GridAlignmentError:
        return False
    return True


# ---------------------------------------------------------------------------
# I/O


def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in ("ascii-grid", "raw-f32"):
            raise ValueError(f"unknown raster format {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix in (".asc", ".txt"):
        return "ascii-grid"
    if suffix in (".f32", ".bin", ".raw"):
        return "raw-f32"
    raise ValueError(f"cannot infer raster format from {path!s}; pass format=")


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def read_grid(path, format: str | None = None, units: str = "") -> Grid:
    """Read an ASCII or raw-f32 raster into a :class:`Grid`."""
    fmt = _infer_format(path, format)
    if fmt == "ascii-grid":
        return _read_ascii(Path(path), units)
    return _read_raw(Path(path), units)


def _read_ascii(path: Path, units: str) -> Grid:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header: dict[str, float] = {}
    i = 0
    while i < len(lines) and len(header) < 6:
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        parts = line.split()
        key = parts[0].lower()
        if key[0].isdigit() or key[0] in "+-.":
            break
        if len(parts) != 2:
            raise GridFormatError("header", f"{path}: malformed header line {i + 1}: {line!r}")
        try:
            header[key] = float(parts[1])
        except ValueError:
            raise GridFormatError("header", f"{path}: non-numeric header value for {key!r}")
        i += 1
    if "xllcenter" in header and "cellsize" in header:
        header.setdefault("xllcorner", header.pop("xllcenter") - header["cellsize"] / 2)
    if "yllcenter" in header and "cellsize" in header:
        header.setdefault("yllcorner", header.pop("yllcenter") - header["cellsize"] / 2)
    header.setdefault("nodata_value", DEFAULT_NODATA)
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise GridFormatError("header", f"{path}: header is missing {', '.join(missing)}")
    ncols, nrows = header["ncols"], header["nrows"]
    if ncols != int(ncols) or nrows != int(nrows) or ncols < 1 or nrows < 1:
        raise GridFormatError("header", f"{path}: nrows/ncols must be positive integers")
    ncols, nrows = int(ncols), int(nrows)
    if header["cellsize"] <= 0:
        raise GridFormatError("header", f"{path}: cellsize must be positive")

    rows = [ln for ln in lines[i:] if ln.strip()]
    if len(rows) != nrows:
        raise GridFormatError("row_count", f"{path}: expected {nrows} rows, found {len(rows)}")
    values = np.empty((nrows, ncols), dtype=np.float32)
    for r, ln in enumerate(rows):
        tokens = ln.split()
        if len(tokens) != ncols:
            raise GridFormatError(
                "row_length", f"{path}: row {r} has {len(tokens)} values, expected {ncols}")
        try:
            values[r] = np.array(tokens, dtype=np.float64)
        except ValueError:
            raise GridFormatError("header", f"{path}: non-numeric value in row {r}")
    return Grid(values, header["cellsize"], header["xllcorner"], header["yllcorner"],
                header["nodata_value"], units)


def _read_raw(path: Path, units: str) -> Grid:
    side = sidecar_path(path)
    if not side.exists():
        raise GridFormatError("missing_sidecar", f"{path}: sidecar {side.name} not found")
    try:
        meta = json.loads(side.read_text(encoding="utf-8"))
        nrows, ncols = int(meta["nrows"]), int(meta["ncols"])
        cellsize = float(meta["cellsize"])
        ox, oy = float(meta["origin_x"]), float(meta["origin_y"])
    except (KeyError, ValueError, TypeError) as exc:
        raise GridFormatError("header", f"{side}: malformed sidecar ({exc})")
    data = np.fromfile(path, dtype="<f4")
    if data.size != nrows * ncols:
        raise GridFormatError(
            "row_length", f"{path}: {data.size} values, sidecar says {nrows}x{ncols}")
    return Grid(data.reshape(nrows, ncols), cellsize, ox, oy,
                float(meta.get("nodata", DEFAULT_NODATA)), meta.get("units", units))


def write_grid(grid: AnyGrid, path, format: str | None = None) -> None:
    """Write ``grid``. raw-f32 round-trips bit-exactly; ASCII keeps float32 precision."""
    fmt = _infer_format(path, format)
    path = Path(path)
    values = np.asarray(grid.values)
    if fmt == "raw-f32":
        values.astype("<f4").tofile(path)
        meta = grid.georef()
        meta["units"] = getattr(grid, "units", "")
        sidecar_path(path).write_text(json.dumps(meta, indent=2), encoding="utf-8")
        return
    integer = values.dtype.kind in "iu"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"ncols {grid.ncols}\nnrows {grid.nrows}\n")
        fh.write(f"xllcorner {grid.origin_x!r}\nyllcorner {grid.origin_y!r}\n")
        fh.write(f"cellsize {grid.cellsize!r}\nnodata_value {grid.nodata!r}\n")
        fmt_row = "%d" if integer else "%.9g"
        np.savetxt(fh, values, fmt=fmt_row, delimiter=" ")


def read_landcover(path, format: str | None = None) -> LandCoverGrid:
    return LandCoverGrid.from_grid(read_grid(path, format))


def read_zones(path, format: str | None = None) -> ZoneGrid:
    return ZoneGrid.from_grid(read_grid(path, format))


def load_class_map(path) -> dict[int, str]:
    """Read a JSON ``{code: name}`` class map; codes must cover 0..6."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    mapping = {int(k): str(v) for k, v in raw.items()}
    if sorted(mapping) != list(range(N_CLASSES)):
        raise ValueError("class map must define exactly the codes 0..6")
    return mapping


def resolve_class(name_or_code, class_map: dict[int, str] | None = None) -> int:
    """Accept a class code (int or digit string) or a class name."""
    class_map = class_map or LANDCOVER_CLASSES
    if isinstance(name_or_code, (int, np.integer)):
        code = int(name_or_code)
    elif str(name_or_code).strip().isdigit():
        code = int(name_or_code)
    else:
        key = str(name_or_code).strip().lower().replace("-", "_").replace(" ", "_")
        lookup = {v: k for k, v in class_map.items()}
        if key not in lookup:
            raise ValueError(f"unknown land-cover class {name_or_code!r}")
        code = lookup[key]
    if code not in class_map:
        raise ValueError(f"land-cover code {code} outside 0..6")
    return code


# ---------------------------------------------------------------------------
# Tiling


def iter_tiles(nrows: int, ncols: int, tile: int) -> Iterator[tuple[slice, slice]]:
    """Row-major tile windows anchored at cell (0, 0); edge tiles may be short."""
    if tile <= 0:
        raise ValueError("tile size must be positive")
    for r0 in range(0, nrows, tile):
        for c0 in range(0, ncols, tile):
            yield slice(r0, min(r0 + tile, nrows)), slice(c0, min(c0 + tile, ncols))


def tile_index(nrows: int, ncols: int, tile: int) -> np.ndarray:
    """Integer id of the tile each cell falls in (row-major tile numbering)."""
    rr = np.arange(nrows)[:, None] // tile
    cc = np.arange(ncols)[None, :] // tile
    return rr * (-(-ncols // tile)) + cc


def subgrid(grid: AnyGrid, rows: slice, cols: slice) -> AnyGrid:
    """Window of ``grid`` with the georeference shifted to match."""
    r0, r1 = rows.start or 0, rows.stop if rows.stop is not None else grid.nrows
    c0 = cols.start or 0
    ox = grid.origin_x + c0 * grid.cellsize
    oy = grid.origin_y + (grid.nrows - r1) * grid.cellsize
    return replace(grid, values=np.asarray(grid.values)[rows, cols], origin_x=ox, origin_y=oy)
