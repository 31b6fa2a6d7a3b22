"""Batch Bayesian (kriging) estimation of the gridded power vector.

Conditions the joint Gaussian of the grid shadowing values and all
measurements at once, yielding the posterior mean (the MMSE map estimate)
and covariance (the uncertainty) over the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from radiosurvey.grid import GridGeometry
from radiosurvey.mapgen import (
    COV_JITTER_REL,
    GaussianModelParams,
    Measurement,
    Transmitter,
    base_power_vector,
    covariance_matrix,
)

__all__ = ["Posterior", "batch_posterior"]


@dataclass(frozen=True)
class Posterior:
    """Gaussian posterior over the grid power vector (dB / dB^2)."""

    mean: np.ndarray  # (N,)
    cov: np.ndarray  # (N, N)
    num_measurements: int = 0

    def __post_init__(self):
        if self.mean.ndim != 1 or self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("posterior mean/covariance shape mismatch")
        self.mean.setflags(write=False)
        self.cov.setflags(write=False)

    @property
    def n(self) -> int:
        return self.mean.size

    def variances(self) -> np.ndarray:
        return np.diag(self.cov).copy()


def _prior(grid: GridGeometry, tx: Transmitter, params: GaussianModelParams,
           known_mean: bool, altitude_m: float) -> tuple[np.ndarray, np.ndarray]:
    pts = grid.points()
    if known_mean:
        mean = base_power_vector(tx, pts, params, altitude_m)
    else:
        mean = np.zeros(grid.n_points)
    cov = covariance_matrix(pts, None, params)
    if params.fading_var > 0:
        cov[np.diag_indices_from(cov)] += params.fading_var
    return mean, cov


def batch_posterior(measurements: list[Measurement], grid: GridGeometry,
                    tx: Transmitter, params: GaussianModelParams,
                    tx_index: int = 0, known_mean: bool = True,
                    altitude_m: float = 0.0) -> Posterior:
    """Posterior over the grid powers of one transmitter given all measurements.

    ``measurements`` supply that transmitter's readings via
    ``per_tx_power_db[tx_index]``.  An empty list returns the prior.  With
    zero fading and noise variance, duplicated measurement locations make
    the observation covariance singular and raise.
    """
    prior_mean, prior_cov = _prior(grid, tx, params, known_mean, altitude_m)
    if not measurements:
        return Posterior(prior_mean, prior_cov, 0)

    locs = np.array([m.location for m in measurements], dtype=float)
    y = np.array([m.per_tx_power_db[tx_index] for m in measurements], dtype=float)
    sigma_fz = params.fading_var + params.noise_var

    if sigma_fz == 0.0:
        rounded = {tuple(np.round(loc, 9)) for loc in locs}
        if len(rounded) < len(locs):
            raise ValueError("duplicate noiseless measurements")

    pts = grid.points()
    cross = covariance_matrix(pts, locs, params)  # Cov(s_grid, s_meas), (N, t+1)
    c_meas = covariance_matrix(locs, None, params)
    c_meas[np.diag_indices_from(c_meas)] += sigma_fz + COV_JITTER_REL * params.shadow_var
    factor = cho_factor(c_meas, lower=True)

    if known_mean:
        base_at_locs = base_power_vector(tx, locs, params, altitude_m)
    else:
        base_at_locs = np.zeros(len(locs))
    resid = y - base_at_locs

    # shadowing posterior: mean_s = -cross K^-1 resid, cov_s = C - cross K^-1 cross^T
    k_inv_resid = cho_solve(factor, resid)
    k_inv_crossT = cho_solve(factor, cross.T)
    mean = prior_mean + cross @ k_inv_resid  # grid mean minus the (negated) shadowing mean
    cov_s = covariance_matrix(pts, None, params) - cross @ k_inv_crossT
    if params.fading_var > 0:
        cov_s[np.diag_indices_from(cov_s)] += params.fading_var
    cov_s = (cov_s + cov_s.T) / 2.0
    return Posterior(mean, cov_s, len(measurements))
