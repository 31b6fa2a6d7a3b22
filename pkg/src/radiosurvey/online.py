"""Online Bayesian map estimation with constant cost per measurement.

Each new measurement is folded into the running grid posterior through a
rank-one covariance downdate and a mean correction, assuming the grid
values summarize all past measurements.  On-grid measurements make that
assumption exact, so the online posterior then coincides with batch
kriging; off-grid the approximation error stays negligible for grids
denser than the shadowing correlation distance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.linalg.blas import dger

from radiosurvey.grid import GridGeometry
from radiosurvey.kriging import Posterior
from radiosurvey.mapgen import (
    COV_JITTER_REL,
    GaussianModelParams,
    Measurement,
    Transmitter,
    base_power,
    base_power_vector,
    combine_db,
    covariance_matrix,
)

__all__ = [
    "UpdateTerms",
    "ShadowingPrior",
    "OnlineEstimator",
    "init_posterior",
    "compute_update_terms",
    "update_posterior",
]

# Snap a query position to a grid node when within this fraction of the
# grid spacing; the fading term contributes to the read-out only there.
_ONGRID_TOL = 1e-6


@dataclass(frozen=True)
class UpdateTerms:
    """Linear read-out of one measurement against the grid power vector.

    The measurement is distributed as a @ grid_powers + b plus zero-mean
    noise of variance lik_var.
    """

    a: np.ndarray  # (N,)
    b: float
    lik_var: float

    def __post_init__(self):
        if self.lik_var < 0:
            raise ValueError("likelihood variance must be nonnegative")
        self.a.setflags(write=False)


class _GridPrior:
    """Transmitter-independent prior machinery for one grid + model."""

    def __init__(self, grid: GridGeometry, params: GaussianModelParams):
        self.grid = grid
        self.params = params
        self.points = grid.points()
        self.cov_shadow = covariance_matrix(self.points, None, params)
        m = self.cov_shadow.copy()
        if params.fading_var > 0:
            m[np.diag_indices_from(m)] += params.fading_var
        self.prior_cov = m
        m_jit = m.copy()
        m_jit[np.diag_indices_from(m_jit)] += COV_JITTER_REL * max(params.shadow_var, 1.0)
        factor = cho_factor(m_jit, lower=True, check_finite=False)
        # read-outs are matvecs against the explicit inverse; computed once
        # per (grid, params) and reused across every run of a campaign
        self._minv = cho_solve(factor, np.eye(grid.n_points), check_finite=False)
        self._terms_memo: dict[int, tuple[np.ndarray, float]] = {}

    def snap_index(self, x) -> int | None:
        """Flat index of the coincident grid node, or None when off-grid."""
        k = self.grid.nearest_index(x)
        if np.linalg.norm(self.points[k] - np.asarray(x, dtype=float)) \
                <= _ONGRID_TOL * self.grid.spacing_m:
            return k
        return None

    def cross_covariance(self, x) -> np.ndarray:
        """Shadowing covariance of location x against every grid node."""
        p = self.params
        d = np.hypot(self.points[:, 0] - float(x[0]), self.points[:, 1] - float(x[1]))
        return p.shadow_var * np.exp2(-d / p.shadow_corr_dist_m)

    def readout(self, x) -> tuple[np.ndarray, float]:
        """(a, lik_var) for a measurement at x; memoized on grid nodes."""
        k = self.snap_index(x)
        if k is not None and k in self._terms_memo:
            return self._terms_memo[k]
        p = self.params
        if k is not None:
            c = self.cov_shadow[:, k].copy()
            c[k] += p.fading_var
        else:
            c = self.cross_covariance(x)
        a = self._minv @ c
        lik_var = max(p.shadow_var + p.fading_var + p.noise_var - float(c @ a), 0.0)
        a.setflags(write=False)
        if k is not None:
            self._terms_memo[k] = (a, lik_var)
        return a, lik_var


@lru_cache(maxsize=8)
def _grid_prior(grid: GridGeometry, params: GaussianModelParams) -> _GridPrior:
    return _GridPrior(grid, params)


@lru_cache(maxsize=32)
def _base_vector(grid: GridGeometry, tx: Transmitter, params: GaussianModelParams,
                 known_mean: bool, altitude_m: float) -> np.ndarray:
    if known_mean:
        vec = base_power_vector(tx, grid.points(), params, altitude_m)
    else:
        vec = np.zeros(grid.n_points)
    vec.setflags(write=False)
    return vec


class ShadowingPrior:
    """Prior over one transmitter's grid powers, with cached linear algebra."""

    def __init__(self, grid: GridGeometry, tx: Transmitter, params: GaussianModelParams,
                 known_mean: bool = True, altitude_m: float = 0.0):
        self.grid = grid
        self.tx = tx
        self.params = params
        self.known_mean = known_mean
        self.altitude_m = altitude_m
        self._gp = _grid_prior(grid, params)
        self.base = _base_vector(grid, tx, params, known_mean, altitude_m)

    def prior_posterior(self) -> Posterior:
        return Posterior(self.base.copy(), self._gp.prior_cov.copy(), 0)

    def base_at(self, x) -> float:
        if not self.known_mean:
            return 0.0
        return base_power(self.tx, x, self.params, self.altitude_m)

    def update_terms(self, x) -> UpdateTerms:
        a, lik_var = self._gp.readout(x)
        b = self.base_at(x) - float(a @ self.base)
        return UpdateTerms(a=a, b=b, lik_var=lik_var)


def init_posterior(grid: GridGeometry, tx: Transmitter, params: GaussianModelParams,
                   known_mean: bool = True, altitude_m: float = 0.0) -> Posterior:
    """The measurement-free posterior: base-power mean, prior covariance."""
    return ShadowingPrior(grid, tx, params, known_mean, altitude_m).prior_posterior()


def compute_update_terms(x_t, grid: GridGeometry, tx: Transmitter,
                         params: GaussianModelParams, known_mean: bool = True,
                         altitude_m: float = 0.0) -> UpdateTerms:
    """Read-out vector, offset and likelihood variance for location x_t."""
    return ShadowingPrior(grid, tx, params, known_mean, altitude_m).update_terms(x_t)


def update_posterior(prev: Posterior, terms: UpdateTerms, y_t: float,
                     robust: bool = False) -> Posterior:
    """Fold one measurement into the posterior.

    Covariance takes a rank-one downdate; the mean takes the equivalent
    Kalman correction, which avoids inverting the previous covariance.
    With robust=True a fully degenerate repeated noiseless measurement is
    absorbed with likelihood variance clamped at 1e-12 instead of raised.
    """
    a = terms.a
    ca = prev.cov @ a
    s = terms.lik_var + float(a @ ca)
    if s <= 0.0:
        if not robust:
            raise ValueError("degenerate repeated noiseless measurement")
        s = max(terms.lik_var, 1e-12)
    gain = (y_t - terms.b - float(a @ prev.mean)) / s
    mean = prev.mean + ca * gain
    cov = prev.cov - np.outer(ca, ca) / s
    cov = (cov + cov.T) / 2.0
    return Posterior(mean, cov, prev.num_measurements + 1)


class OnlineEstimator:
    """Sequential multi-transmitter posterior session for surveying.

    All transmitters share one measurement geometry, hence identical
    read-out vectors and covariance trajectories; the covariance is
    therefore maintained once and only the means are kept per
    transmitter.  Snapshots taken via ``posterior`` equal running
    ``update_posterior`` per transmitter independently.
    """

    def __init__(self, grid: GridGeometry, txs, params: GaussianModelParams,
                 known_mean: bool = True, altitude_m: float = 0.0, robust: bool = True):
        self.grid = grid
        self.txs = tuple(txs)
        self.params = params
        self.robust = robust
        self.priors = [ShadowingPrior(grid, tx, params, known_mean, altitude_m)
                       for tx in self.txs]
        self._gp = self.priors[0]._gp
        self.cov = self._gp.prior_cov.copy()
        self.means = [p.base.copy() for p in self.priors]
        self.t = 0

    def update(self, m: Measurement) -> None:
        a, lik_var = self._gp.readout(m.location)
        ca = self.cov @ a
        s = lik_var + float(a @ ca)
        if s <= 0.0:
            if not self.robust:
                raise ValueError("degenerate repeated noiseless measurement")
            s = max(lik_var, 1e-12)
        for i, prior in enumerate(self.priors):
            b = prior.base_at(m.location) - float(a @ prior.base)
            gain = (m.per_tx_power_db[i] - b - float(a @ self.means[i])) / s
            self.means[i] += ca * gain
        # in-place rank-one downdate on the transposed (Fortran-order) view;
        # with alpha = -1 the BLAS-internal scaling is an exact negation and
        # v_i * v_j commutes bitwise, so symmetry is preserved exactly and no
        # symmetrization pass is needed
        v = ca * np.sqrt(1.0 / s)
        dger(-1.0, v, v, a=self.cov.T, overwrite_x=0, overwrite_y=0, overwrite_a=1)
        self.t += 1

    def variances(self) -> np.ndarray:
        """Per-point posterior variance (identical for every transmitter)."""
        return np.diag(self.cov).copy()

    def combined_estimate(self) -> np.ndarray:
        """Linear-domain sum of the per-transmitter mean maps, in dB."""
        return combine_db(np.stack(self.means), axis=0)

    def posterior(self, tx_index: int) -> Posterior:
        return Posterior(self.means[tx_index].copy(), self.cov.copy(), self.t)
