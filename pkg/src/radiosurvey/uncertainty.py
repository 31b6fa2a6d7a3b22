"""Uncertainty metrics, temporal smoothing, and map-error evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from radiosurvey.grid import GridGeometry
from radiosurvey.kriging import Posterior
from radiosurvey.mapgen import Measurement, RadioMap

__all__ = [
    "UncertaintyMap",
    "bayes_uncertainty",
    "total_uncertainty",
    "smooth",
    "rmse",
    "per_tx_rmse",
    "knn_estimate",
]


@dataclass(frozen=True)
class UncertaintyMap:
    """Per-grid-point uncertainty, raw and temporally smoothed.

    Bayesian sources emit posterior variances (dB^2); network sources emit
    a standard-deviation-like value (dB).  The planner consumes either
    without rescaling.
    """

    values: np.ndarray  # (N,)
    smoothed: np.ndarray  # (N,)
    source: str = "bayesian"

    def __post_init__(self):
        if self.values.shape != self.smoothed.shape or self.values.ndim != 1:
            raise ValueError("uncertainty vectors must be equal-length 1D")
        if np.any(self.values < 0) or np.any(self.smoothed < 0):
            raise ValueError("uncertainty values must be nonnegative")
        self.values.setflags(write=False)
        self.smoothed.setflags(write=False)

    @classmethod
    def fresh(cls, values: np.ndarray, source: str = "bayesian") -> "UncertaintyMap":
        """Initial map: the smoothed series starts equal to the raw values."""
        v = np.asarray(values, dtype=float).copy()
        return cls(values=v, smoothed=v.copy(), source=source)


def bayes_uncertainty(posteriors: list[Posterior]) -> UncertaintyMap:
    """Average the per-transmitter posterior variances point-wise."""
    if not posteriors:
        raise ValueError("at least one posterior required")
    n = posteriors[0].n
    if any(p.n != n for p in posteriors):
        raise ValueError("posteriors cover different grids")
    values = np.mean([np.diag(p.cov) for p in posteriors], axis=0)
    return UncertaintyMap.fresh(np.maximum(values, 0.0), source="bayesian")


def total_uncertainty(umap: UncertaintyMap, buildings) -> float:
    """Spatial average of the point uncertainties outside buildings."""
    mask = np.ones(umap.values.size, dtype=bool)
    b = list(buildings)
    if b:
        mask[b] = False
    if not mask.any():
        raise ValueError("every grid point lies inside a building")
    return float(np.mean(umap.values[mask]))


def smooth(prev: UncertaintyMap, fresh_values: np.ndarray, alpha: float) -> UncertaintyMap:
    """Exponential running average: alpha * fresh + (1 - alpha) * previous."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("smoothing factor must lie in (0, 1]")
    fresh = np.asarray(fresh_values, dtype=float)
    smoothed = fresh * alpha + prev.smoothed * (1.0 - alpha)
    return UncertaintyMap(values=fresh.copy(), smoothed=smoothed, source=prev.source)


def rmse(true_map: RadioMap, estimate: np.ndarray, buildings=None) -> float:
    """Root mean square error of a combined-map estimate outside buildings."""
    truth = true_map.combined_vector()
    est = np.asarray(estimate, dtype=float).ravel()
    if est.shape != truth.shape:
        raise ValueError("estimate length does not match the grid")
    mask = np.ones(truth.size, dtype=bool)
    b = list(buildings if buildings is not None else true_map.grid.buildings)
    if b:
        mask[b] = False
    if not mask.any():
        raise ValueError("every grid point lies inside a building")
    diff = truth[mask] - est[mask]
    return float(np.sqrt(np.mean(diff * diff)))


def per_tx_rmse(true_map: RadioMap, per_tx_estimates, buildings=None) -> float:
    """RMSE pooled over the per-transmitter map errors outside buildings.

    With the map prior exact, the error of each transmitter's prior
    estimate is exactly its shadowing field, so this starts at the
    shadowing standard deviation.
    """
    estimates = [np.asarray(e, dtype=float).ravel() for e in per_tx_estimates]
    if len(estimates) != true_map.n_transmitters:
        raise ValueError("one estimate per transmitter required")
    mask = np.ones(true_map.grid.n_points, dtype=bool)
    b = list(buildings if buildings is not None else true_map.grid.buildings)
    if b:
        mask[b] = False
    if not mask.any():
        raise ValueError("every grid point lies inside a building")
    sq = 0.0
    for s, est in enumerate(estimates):
        diff = true_map.per_tx_power_db[s].ravel()[mask] - est[mask]
        sq += float(np.mean(diff * diff))
    return float(np.sqrt(sq / len(estimates)))


def knn_estimate(measurements: list[Measurement], grid: GridGeometry, k: int = 5,
                 tx_index: int | None = None) -> np.ndarray:
    """Plain K-nearest-neighbour map estimate.

    Every grid point receives the unweighted mean of the k nearest
    measurements' values: the combined power by default, one
    transmitter's component when ``tx_index`` is given.  Produces no
    uncertainty map.
    """
    if not measurements:
        raise ValueError("at least one measurement required")
    locs = np.array([m.location for m in measurements], dtype=float)
    if tx_index is None:
        vals = np.array([m.combined_db() for m in measurements], dtype=float)
    else:
        vals = np.array([m.per_tx_power_db[tx_index] for m in measurements], dtype=float)
    kk = min(k, len(measurements))
    _, idx = cKDTree(locs).query(grid.points(), k=kk)
    if kk == 1:
        idx = idx[:, None]
    return vals[idx].mean(axis=1)
