"""Ground-truth radio map generation under correlated log-normal shadowing.

Received power decomposes into a known free-space component, a spatially
correlated shadowing loss whose covariance halves every ``shadow_corr_dist_m``
metres, and i.i.d. small-scale fading.  Maps are sampled on a rectangular
grid; measurements anywhere in the area are obtained by bicubic
(Catmull-Rom) interpolation of the gridded truth plus sensor noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial.distance import cdist

from radiosurvey.grid import GridGeometry
from radiosurvey.seeding import derive_rng

__all__ = [
    "SPEED_OF_LIGHT",
    "GaussianModelParams",
    "Transmitter",
    "RadioMap",
    "Measurement",
    "shadowing_covariance",
    "covariance_matrix",
    "base_power",
    "base_power_vector",
    "sample_shadowing_field",
    "generate_map",
    "measure",
    "interpolate_plane",
    "combine_db",
]

SPEED_OF_LIGHT = 299_792_458.0  # m/s

# Relative diagonal jitter applied before factorizing near-singular
# shadowing covariance matrices.
COV_JITTER_REL = 1e-9


@dataclass(frozen=True)
class Transmitter:
    """A fixed transmitter; position is 3D (x, y, height) in metres."""

    position: tuple[float, float, float]
    power_dbm: float = 10.0
    carrier_hz: float = 2.4e9

    def __post_init__(self):
        if not self.carrier_hz > 0:
            raise ValueError("carrier frequency must be positive")
        if self.position[2] < 0:
            raise ValueError("transmitter height must be nonnegative")


@dataclass(frozen=True)
class GaussianModelParams:
    """Constants of the correlated-shadowing channel model (dB scale).

    shadow_var         variance of the shadowing loss (dB^2)
    shadow_corr_dist_m distance at which shadowing correlation decays to 1/2
    shadow_mean        mean shadowing loss (dB), absorbed into the base power
    fading_var         small-scale fading variance (dB^2)
    noise_var          measurement noise variance (dB^2)
    pathloss_exponent  2 = free space
    """

    shadow_var: float = 10.0
    shadow_corr_dist_m: float = 50.0
    shadow_mean: float = 0.0
    fading_var: float = 0.0
    noise_var: float = 0.0
    pathloss_exponent: float = 2.0

    def __post_init__(self):
        if self.shadow_var < 0 or self.fading_var < 0 or self.noise_var < 0:
            raise ValueError("variances must be nonnegative")
        if not self.shadow_corr_dist_m > 0:
            raise ValueError("shadowing correlation distance must be positive")


@dataclass(frozen=True)
class RadioMap:
    """True received power over a grid, per transmitter and combined."""

    grid: GridGeometry
    transmitters: tuple[Transmitter, ...]
    per_tx_power_db: np.ndarray  # (S, rows, cols)
    combined_power_db: np.ndarray  # (rows, cols)
    shadowing_fields: np.ndarray | None = None  # (S, rows, cols), None if imported
    altitude_m: float = 0.0

    def __post_init__(self):
        shape = (self.grid.rows, self.grid.cols)
        if self.per_tx_power_db.shape != (len(self.transmitters),) + shape:
            raise ValueError("per-transmitter power planes must be one per transmitter")
        if self.combined_power_db.shape != shape:
            raise ValueError("combined power plane shape mismatch")
        for arr in (self.per_tx_power_db, self.combined_power_db, self.shadowing_fields):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_transmitters(self) -> int:
        return len(self.transmitters)

    def combined_vector(self) -> np.ndarray:
        return self.combined_power_db.ravel()


@dataclass(frozen=True)
class Measurement:
    """One power reading per transmitter at a 2D location."""

    location: tuple[float, float]
    per_tx_power_db: tuple[float, ...]
    index: int = 0

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("measurement index must be nonnegative")

    def combined_db(self) -> float:
        return combine_db(np.asarray(self.per_tx_power_db))


def combine_db(per_tx_db: np.ndarray, axis: int = 0) -> np.ndarray | float:
    """Sum powers given in dB in the linear domain; returns dB."""
    lin = np.power(10.0, np.asarray(per_tx_db, dtype=float) / 10.0)
    out = 10.0 * np.log10(np.sum(lin, axis=axis))
    return float(out) if np.ndim(out) == 0 else out


def shadowing_covariance(x1, x2, params: GaussianModelParams) -> float:
    """Covariance of the shadowing loss between two 2D locations.

    Equals shadow_var * 2**(-d / shadow_corr_dist_m) with d the Euclidean
    distance, so correlation decays to 1/2 at the correlation distance.
    """
    d = float(np.linalg.norm(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)))
    return params.shadow_var * 2.0 ** (-d / params.shadow_corr_dist_m)


def covariance_matrix(points_a: np.ndarray, points_b: np.ndarray | None,
                      params: GaussianModelParams) -> np.ndarray:
    """Shadowing covariance between two point sets ((Ma, 2) x (Mb, 2))."""
    a = np.atleast_2d(np.asarray(points_a, dtype=float))
    b = a if points_b is None else np.atleast_2d(np.asarray(points_b, dtype=float))
    d = cdist(a, b)
    return params.shadow_var * np.exp2(-d / params.shadow_corr_dist_m)


def base_power(tx: Transmitter, x, params: GaussianModelParams,
               altitude_m: float = 0.0) -> float:
    """Known deterministic received-power component at 2D location x (dB).

    Free-space form: transmit power minus
    (10 * pathloss_exponent) * log10(d) + 20 * log10(4 pi f / c)
    minus the mean shadowing loss; isotropic antennas.  d is the 3D
    distance from the transmitter to x at the surveying altitude.
    """
    dx = float(x[0]) - tx.position[0]
    dy = float(x[1]) - tx.position[1]
    dz = altitude_m - tx.position[2]
    d = float(np.sqrt(dx * dx + dy * dy + dz * dz))
    if d == 0.0:
        raise ValueError("singular transmitter colocation")
    loss = 10.0 * params.pathloss_exponent * np.log10(d) + 20.0 * np.log10(
        4.0 * np.pi * tx.carrier_hz / SPEED_OF_LIGHT
    )
    return tx.power_dbm - loss - params.shadow_mean


def base_power_vector(tx: Transmitter, points: np.ndarray, params: GaussianModelParams,
                      altitude_m: float = 0.0) -> np.ndarray:
    """Vectorized base power at (M, 2) locations."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dx = pts[:, 0] - tx.position[0]
    dy = pts[:, 1] - tx.position[1]
    dz = altitude_m - tx.position[2]
    d = np.sqrt(dx * dx + dy * dy + dz * dz)
    if np.any(d == 0.0):
        raise ValueError("singular transmitter colocation")
    loss = 10.0 * params.pathloss_exponent * np.log10(d) + 20.0 * np.log10(
        4.0 * np.pi * tx.carrier_hz / SPEED_OF_LIGHT
    )
    return tx.power_dbm - loss - params.shadow_mean


@lru_cache(maxsize=8)
def _cached_chol(rows: int, cols: int, spacing: float, origin: tuple,
                 shadow_var: float, corr_dist: float) -> np.ndarray:
    """Lower Cholesky factor of the jittered grid shadowing covariance.

    Cached because every map of a Monte Carlo campaign shares one grid
    and one parameter set; the factorization dominates map generation.
    """
    grid = GridGeometry(rows, cols, spacing, origin)
    params = GaussianModelParams(shadow_var=shadow_var, shadow_corr_dist_m=corr_dist)
    cov = covariance_matrix(grid.points(), None, params)
    cov[np.diag_indices_from(cov)] += COV_JITTER_REL * shadow_var
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as e:
        raise np.linalg.LinAlgError("covariance not PSD") from e
    chol.setflags(write=False)
    return chol


def sample_shadowing_field(grid: GridGeometry, params: GaussianModelParams,
                           seed) -> np.ndarray:
    """One zero-mean draw of the correlated shadowing field on the grid.

    Returns a (rows, cols) dB matrix; deterministic given the seed (an int
    or an already-derived Generator).
    """
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(int(seed), "shadowing")
    if params.shadow_var == 0.0:
        return np.zeros((grid.rows, grid.cols))
    chol = _cached_chol(grid.rows, grid.cols, grid.spacing_m, tuple(grid.origin),
                        params.shadow_var, params.shadow_corr_dist_m)
    z = rng.standard_normal(grid.n_points)
    return (chol @ z).reshape(grid.rows, grid.cols)


def _tx_stream_label(tx: Transmitter) -> str:
    return (f"tx|{tx.position[0]!r}|{tx.position[1]!r}|{tx.position[2]!r}"
            f"|{tx.power_dbm!r}|{tx.carrier_hz!r}")


def generate_map(grid: GridGeometry, txs, params: GaussianModelParams, seed: int,
                 altitude_m: float = 0.0) -> RadioMap:
    """Sample a ground-truth radio map for one or more transmitters.

    Each transmitter gets an independent shadowing field and independent
    per-point fading; the combined map is the linear-domain power sum.
    Random substreams are keyed by the transmitter itself (not its list
    position), so the combined map is invariant under transmitter
    reordering and identical co-located transmitters see one propagation
    environment.
    """
    txs = tuple(txs)
    if not txs:
        raise ValueError("at least one transmitter required")
    pts = grid.points()
    planes = []
    fields = []
    for tx in txs:
        label = _tx_stream_label(tx)
        shadow = sample_shadowing_field(grid, params, derive_rng(seed, "shadowing", label))
        fading = derive_rng(seed, "fading", label).normal(
            0.0, np.sqrt(params.fading_var), size=(grid.rows, grid.cols)
        ) if params.fading_var > 0 else np.zeros((grid.rows, grid.cols))
        base = base_power_vector(tx, pts, params, altitude_m).reshape(grid.rows, grid.cols)
        planes.append(base - shadow + fading)
        fields.append(shadow)
    per_tx = np.stack(planes)
    combined = combine_db(per_tx, axis=0)
    return RadioMap(grid, txs, per_tx, np.asarray(combined), np.stack(fields), altitude_m)


def _catmull_rom_weights(t: np.ndarray) -> np.ndarray:
    """(M, 4) interpolation weights for fractional offsets t in [0, 1)."""
    t2 = t * t
    t3 = t2 * t
    return np.stack(
        [
            -0.5 * t + t2 - 0.5 * t3,
            1.0 - 2.5 * t2 + 1.5 * t3,
            0.5 * t + 2.0 * t2 - 1.5 * t3,
            -0.5 * t2 + 0.5 * t3,
        ],
        axis=1,
    )


def interpolate_plane(plane: np.ndarray, grid: GridGeometry, pts,
                      method: str = "cubic") -> np.ndarray:
    """Interpolate a (rows, cols) plane at (M, 2) in-area positions.

    "cubic" is Catmull-Rom bicubic (exact at grid nodes, exact for affine
    fields); "linear" is bilinear.  Out-of-grid queries are clamped to the
    boundary, matching the in-area precondition of callers.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    fx = (pts[:, 0] - grid.origin[0]) / grid.spacing_m  # column coordinate
    fy = (pts[:, 1] - grid.origin[1]) / grid.spacing_m  # row coordinate
    fx = np.clip(fx, 0.0, grid.cols - 1)
    fy = np.clip(fy, 0.0, grid.rows - 1)
    if method == "linear":
        j0 = np.minimum(np.floor(fx).astype(int), grid.cols - 2)
        i0 = np.minimum(np.floor(fy).astype(int), grid.rows - 2)
        tx = fx - j0
        ty = fy - i0
        v00 = plane[i0, j0]
        v01 = plane[i0, j0 + 1]
        v10 = plane[i0 + 1, j0]
        v11 = plane[i0 + 1, j0 + 1]
        return (v00 * (1 - tx) * (1 - ty) + v01 * tx * (1 - ty)
                + v10 * (1 - tx) * ty + v11 * tx * ty)
    if method != "cubic":
        raise ValueError(f"unknown interpolation method: {method!r}")
    # pad with odd reflection, i.e. linear extrapolation of boundary nodes,
    # which keeps affine fields exact in the outermost cells
    padded = np.pad(plane, 2, mode="reflect", reflect_type="odd")
    j0 = np.minimum(np.floor(fx).astype(int), grid.cols - 2)
    i0 = np.minimum(np.floor(fy).astype(int), grid.rows - 2)
    wx = _catmull_rom_weights(fx - j0)
    wy = _catmull_rom_weights(fy - i0)
    out = np.zeros(len(pts))
    for a in range(4):
        row = i0 + 1 + a  # +2 padding -1 stencil offset
        acc = np.zeros(len(pts))
        for b in range(4):
            acc += wx[:, b] * padded[row, j0 + 1 + b]
        out += wy[:, a] * acc
    return out


def measure(radio_map: RadioMap, x, params: GaussianModelParams, seed,
            index: int = 0, method: str = "cubic") -> Measurement:
    """Take one noisy power measurement at 2D location x.

    Per transmitter: the true gridded power interpolated at x plus
    independent Gaussian sensor noise.  Raises if x lies inside a
    building footprint or outside the grid bounding box.
    """
    if not radio_map.grid.contains(x):
        raise ValueError(f"measurement location {tuple(x)} outside the surveyed area")
    if radio_map.grid.in_building_footprint(x):
        raise ValueError("indoor measurement forbidden")
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(int(seed), "measurement")
    q = np.atleast_2d(np.asarray(x, dtype=float))
    vals = []
    for s in range(radio_map.n_transmitters):
        true_val = float(interpolate_plane(radio_map.per_tx_power_db[s], radio_map.grid,
                                           q, method)[0])
        noise = float(rng.normal(0.0, np.sqrt(params.noise_var))) if params.noise_var > 0 else 0.0
        vals.append(true_val + noise)
    return Measurement(location=(float(x[0]), float(x[1])),
                       per_tx_power_db=tuple(vals), index=index)
