"""Calibration diagnostics: residuals normalized by predicted uncertainty."""

from __future__ import annotations

import numpy as np

__all__ = ["normalized_residual", "knn_baseline"]


def normalized_residual(true_map: np.ndarray, mean_map: np.ndarray,
                        uncertainty_map: np.ndarray, excluded) -> np.ndarray:
    """(truth - estimate) / predicted uncertainty at non-excluded cells.

    ``excluded`` holds the flat indices to drop (buildings plus measured
    cells).  A well-calibrated estimator centres the absolute ratios
    near 1.  Raises when any evaluated denominator is zero.
    """
    truth = np.asarray(true_map, dtype=float).ravel()
    mean = np.asarray(mean_map, dtype=float).ravel()
    unc = np.asarray(uncertainty_map, dtype=float).ravel()
    keep = np.ones(truth.size, dtype=bool)
    excl = list(excluded)
    if excl:
        keep[excl] = False
    if np.any(unc[keep] == 0.0):
        raise ValueError("zero predicted uncertainty at an evaluated cell")
    return (truth[keep] - mean[keep]) / unc[keep]


def knn_baseline(values: dict, rows: int, cols: int, k: int = 5) -> np.ndarray:
    """Plain K-nearest-neighbour fill from per-node measured means.

    Used to benchmark the learned mean map against the classical
    baseline on identical inputs.
    """
    if not values:
        raise ValueError("at least one measured node required")
    nodes = np.array(sorted(values))
    locs = np.column_stack([nodes % cols, nodes // cols]).astype(float)
    vals = np.array([float(np.mean(values[int(n)])) for n in nodes])
    jj, ii = np.meshgrid(np.arange(cols), np.arange(rows))
    pts = np.column_stack([jj.ravel(), ii.ravel()]).astype(float)
    kk = min(k, len(nodes))
    d2 = ((pts[:, None, :] - locs[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argsort(d2, axis=1)[:, :kk]
    return vals[nearest].mean(axis=1)
