"""MAE / MSE / MAPE / R^2 for predicted versus reference UTCI maps."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

MAPE_EPS = 1e-6
MODES = ("tilemean", "pooled")


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    mse: float
    mape: float
    r2: float
    n: int
    mape_skipped: int = 0
    mode: str = "single"
    n_tiles: int = 1

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def csv_header(self) -> str:
        return "mode,n_tiles,n,mae,mse,mape,r2,mape_skipped"

    def csv_line(self) -> str:
        return (f"{self.mode},{self.n_tiles},{self.n},{self.mae!r},{self.mse!r},{self.mape!r},"
                f"{self.r2!r},{self.mape_skipped}")


def _select(y, yhat, mask):
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.size} reference vs {yhat.size} predicted values")
    keep = np.isfinite(y) & np.isfinite(yhat)
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool).ravel()
    return y[keep], yhat[keep]


def evaluate(y, yhat, mask=None) -> MetricsReport:
    """The four regression metrics over (optionally masked) finite pairs.

    MAPE skips references with |y| < 1e-6 and reports how many were skipped;
    it is NaN if every reference was skipped.
    """
    y, yhat = _select(y, yhat, mask)
    n = y.size
    if n < 2:
        raise ValueError(f"need at least 2 samples after masking, got {n}")
    err = y - yhat
    mae = float(np.sum(np.abs(err)) / n)
    mse = float(np.sum(err * err) / n)
    ok = np.abs(y) >= MAPE_EPS
    skipped = int(n - ok.sum())
    mape = float(100.0 * np.sum(np.abs(err[ok] / y[ok])) / ok.sum()) if ok.any() else float("nan")
    centered = y - np.sum(y) / n
    ss_tot = float(np.sum(centered * centered))
    if ss_tot == 0.0:
        raise ValueError("reference values have zero variance; R^2 is undefined")
    r2 = 1.0 - float(np.sum(err * err)) / ss_tot
    return MetricsReport(mae, mse, mape, r2, n, skipped)


def evaluate_tiles(pairs, mode: str = "tilemean", masks=None) -> MetricsReport:
    """Aggregate over tiles: ``tilemean`` averages per-tile metrics; ``pooled``
    concatenates every tile before computing them once."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no tiles to evaluate")
    masks = list(masks) if masks is not None else [None] * len(pairs)
    if mode == "pooled":
        ys, yhs = [], []
        for (y, yh), m in zip(pairs, masks):
            a, b = _select(y, yh, m)
            ys.append(a)
            yhs.append(b)
        rep = evaluate(np.concatenate(ys), np.concatenate(yhs))
        return MetricsReport(rep.mae, rep.mse, rep.mape, rep.r2, rep.n, rep.mape_skipped,
                             "pooled", len(pairs))
    reps = []
    for i, ((y, yh), m) in enumerate(zip(pairs, masks)):
        try:
            reps.append(evaluate(y, yh, m))
        except ValueError as exc:
            raise ValueError(f"tile {i}: {exc}") from None
    mapes = [r.mape for r in reps if np.isfinite(r.mape)]
    return MetricsReport(
        mae=float(np.mean([r.mae for r in reps])),
        mse=float(np.mean([r.mse for r in reps])),
        mape=float(np.mean(mapes)) if mapes else float("nan"),
        r2=float(np.mean([r.r2 for r in reps])),
        n=sum(r.n for r in reps),
        mape_skipped=sum(r.mape_skipped for r in reps),
        mode="tilemean",
        n_tiles=len(reps),
    )
