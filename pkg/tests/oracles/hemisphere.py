"""Sky view factor of a point among solid boxes by dense hemispheric ray casting.

Continuous geometry, no raster: rays leave the point on an (azimuth, zenith)
grid, each is tested against every box with the slab method, and visible
directions are weighted by cos(zenith) sin(zenith) (horizontal-surface view
factor of the sky).

A DSM raster is treated as the bilinear surface through its cell centres.
Seen from open ground, a run of equal-height wall cells then occludes exactly
like a box whose faces pass through the outermost wall-cell centres, which is
how the canyon fixture is described to this oracle.
"""
import numpy as np


def svf(point, boxes, n_azimuth=720, n_zenith=360):
    """``boxes`` is a list of ((x0, x1), (y0, y1), (z0, z1)); x east, y north."""
    th = (np.arange(n_zenith) + 0.5) * (np.pi / 2) / n_zenith
    ph = (np.arange(n_azimuth) + 0.5) * 2 * np.pi / n_azimuth
    T, P = np.meshgrid(th, ph, indexing="ij")
    d = np.stack([np.sin(T) * np.sin(P), np.sin(T) * np.cos(P), np.cos(T)], axis=-1)
    blocked = np.zeros(T.shape, bool)
    p = np.asarray(point, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        for box in boxes:
            lo = np.array([b[0] for b in box]) - p
            hi = np.array([b[1] for b in box]) - p
            t0, t1 = lo * inv, hi * inv
            tmin = np.nanmax(np.minimum(t0, t1), axis=-1)
            tmax = np.nanmin(np.maximum(t0, t1), axis=-1)
            blocked |= (tmax >= np.maximum(tmin, 0.0))
    w = np.cos(T) * np.sin(T)
    return float((w * ~blocked).sum() / w.sum())
