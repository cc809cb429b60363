"""scikit-learn style wrapper around the surrogate network."""
from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ..meteo import MetSeries
from ..metrics import evaluate
from ..raster import Grid, LandCoverGrid, assert_aligned
from .config import SurrogateConfig
from .data import TileNormalizer, TileSample
from .io import load_params, save_params
from .network import UTCINet, count_parameters
from .training import TrainHyper, dataset_loss, train


def _as_samples(X, y=None) -> list[TileSample]:
    if isinstance(X, TileSample):
        X = [X]
    samples = []
    for i, s in enumerate(X):
        if not isinstance(s, TileSample):
            ndsm, lc, met = s
            s = TileSample(ndsm, lc, met)
        if y is not None:
            s = TileSample(s.ndsm, s.landcover, s.met, y[i])
        samples.append(s)
    if not samples:
        raise ValueError("no samples")
    return samples


class UTCISurrogate(BaseEstimator, RegressorMixin):
    """Daytime-mean UTCI regressor on (nDSM, land cover, met) tiles.

    ``X`` is a list of :class:`TileSample` (or ``(ndsm, landcover, met)``
    triples with ``y`` holding the target tiles). ``predict`` returns an
    ``(n, H, W)`` array in degC.
    """

    def __init__(self, config: SurrogateConfig | None = None, lr: float = 1e-3,
                 weight_decay: float = 1e-4, batch_size: int = 8, epochs: int = 100,
                 seed: int = 0):
        self.config = config
        self.lr = lr
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    def _hyper(self) -> TrainHyper:
        return TrainHyper(self.lr, self.weight_decay, self.batch_size, self.epochs, self.seed)

    def fit(self, X, y=None):
        samples = _as_samples(X, y)
        if any(s.utci is None for s in samples):
            raise ValueError("every training sample needs a UTCI target")
        tile = samples[0].ndsm.shape[0]
        cfg = self.config or SurrogateConfig(tile=tile)
        self.config_ = cfg.with_(seed=self.seed) if cfg.seed != self.seed else cfg
        self.normalizer_ = TileNormalizer().fit(samples)
        data = self.normalizer_.transform(samples)
        self.model_ = UTCINet(self.config_)
        self.initial_loss_ = dataset_loss(self.model_, data)
        self.history_ = train(self.model_, data, self._hyper())
        self.final_loss_ = dataset_loss(self.model_, data)
        return self

    def predict(self, X, batch_size: int = 16) -> np.ndarray:
        check_is_fitted(self, "model_")
        samples = _as_samples(X)
        out = []
        self.model_.eval()
        with torch.no_grad():
            for start in range(0, len(samples), batch_size):
                d = self.normalizer_.transform(samples[start:start + batch_size])
                z = self.model_(d["ndsm"], d["landcover"], d["met"])[:, 0].double().numpy()
                out.append(self.normalizer_.inverse_target(z))
        return np.concatenate(out)

    def score(self, X, y=None, sample_weight=None) -> float:
        samples = _as_samples(X, y)
        ref = np.stack([s.utci for s in samples])
        return evaluate(ref, self.predict(samples)).r2

    @property
    def n_parameters_(self) -> int:
        check_is_fitted(self, "model_")
        return count_parameters(self.model_)

    def predict_grid(self, ndsm: Grid, lc: LandCoverGrid, met: MetSeries | np.ndarray,
                     margin: int | None = None) -> Grid:
        """Predict a raster of any size with overlapping tiles.

        The grid is edge-padded, tiled at the config tile size with ``margin``
        cells of overlap on every side, and only each tile's interior is kept.
        """
        check_is_fitted(self, "model_")
        assert_aligned(ndsm, lc)
        t = self.config_.tile
        margin = t // 8 if margin is None else margin
        core = t - 2 * margin
        if core <= 0:
            raise ValueError("margin too large for the tile size")
        m = met.to_matrix() if isinstance(met, MetSeries) else np.asarray(met, dtype=np.float64)
        nr, nc = ndsm.shape
        pr, pc = -(-nr // core) * core, -(-nc // core) * core
        pad = ((margin, pr - nr + margin), (margin, pc - nc + margin))
        h = np.pad(ndsm.masked(np.nan).astype(np.float64), pad, mode="edge")
        codes = np.pad(np.where(lc.valid, lc.codes, -1), pad, mode="edge")
        origins = [(r, c) for r in range(0, pr, core) for c in range(0, pc, core)]
        samples = [TileSample(h[r:r + t, c:c + t], codes[r:r + t, c:c + t], m) for r, c in origins]
        pred = self.predict(samples)
        out = np.empty((pr, pc))
        for (r, c), p in zip(origins, pred):
            out[r:r + core, c:c + core] = p[margin:margin + core, margin:margin + core]
        out = out[:nr, :nc]
        nod = ~(ndsm.valid & lc.valid)
        return ndsm.with_values(np.where(nod, 0.0, out), units="degC", nodata_mask=nod)

    def save(self, path) -> dict:
        check_is_fitted(self, "model_")
        extra = {
            "normalizer": self.normalizer_.to_json(),
            "hyper": {"lr": self.lr, "weight_decay": self.weight_decay,
                      "batch_size": self.batch_size, "epochs": self.epochs, "seed": self.seed},
            "epochs_trained": len(self.history_),
        }
        return save_params(path, self.model_, extra)

    @classmethod
    def load(cls, path) -> "UTCISurrogate":
        model, manifest = load_params(path)
        est = cls(config=model.cfg, **manifest["hyper"])
        est.config_ = model.cfg
        est.model_ = model
        est.normalizer_ = TileNormalizer.from_json(manifest["normalizer"])
        est.history_ = []
        est.manifest_ = manifest
        return est
