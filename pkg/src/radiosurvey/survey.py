"""Surveying episodes and Monte Carlo campaigns.

A survey flies a UAV along planned waypoints over a true radio map,
samples a noisy power measurement every fixed arc length, feeds an
estimator after every measurement, and records the map error and the
remaining total uncertainty as functions of the measurement count.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from radiosurvey.bridge import BridgeClient, EstimateRequest, build_observation_planes
from radiosurvey.grid import GridGeometry
from radiosurvey.mapgen import (
    GaussianModelParams,
    Measurement,
    RadioMap,
    Transmitter,
    generate_map,
    measure,
)
from radiosurvey.online import OnlineEstimator
from radiosurvey.planner import (
    PlannerConfig,
    grid_planner,
    plan_receding,
    spiral_planner,
    uniform_planner,
)
from radiosurvey.seeding import derive_rng
from radiosurvey.uncertainty import (
    UncertaintyMap,
    knn_estimate,
    per_tx_rmse,
    rmse,
    smooth,
)

__all__ = [
    "SurveyError",
    "MapSpec",
    "SurveyConfig",
    "SurveyRecord",
    "AggregateCurves",
    "sample_along_path",
    "run_survey",
    "monte_carlo",
    "write_runs_csv",
    "write_aggregate_csv",
]

ESTIMATORS = ("online_bayes", "bridge", "knn")
PLANNERS = ("min_cost", "grid", "spiral", "uniform", "random")


class SurveyError(RuntimeError):
    """Estimator or bridge failure, annotated with the measurement index."""


@dataclass(frozen=True)
class MapSpec:
    """How Monte Carlo runs draw their ground-truth maps."""

    rows: int = 32
    cols: int = 32
    spacing_m: float = 3.0
    origin: tuple[float, float] = (0.0, 0.0)
    buildings: frozenset[int] = field(default_factory=frozenset)
    n_transmitters: int = 2
    tx_power_dbm: float = 10.0
    tx_height_m: float = 20.0
    carrier_hz: float = 2.4e9
    altitude_m: float = 0.0

    def grid(self) -> GridGeometry:
        return GridGeometry(self.rows, self.cols, self.spacing_m, self.origin,
                            self.buildings)

    def draw_map(self, params: GaussianModelParams, seed: int) -> RadioMap:
        """Fresh map with transmitters placed uniformly at random in the area."""
        grid = self.grid()
        xmin, ymin, xmax, ymax = grid.bounds()
        rng = derive_rng(seed, "tx-placement")
        txs = []
        for _ in range(self.n_transmitters):
            txs.append(Transmitter(
                position=(float(rng.uniform(xmin, xmax)), float(rng.uniform(ymin, ymax)),
                          self.tx_height_m),
                power_dbm=self.tx_power_dbm, carrier_hz=self.carrier_hz))
        return generate_map(grid, txs, params, seed, self.altitude_m)


@dataclass(frozen=True)
class SurveyConfig:
    """Everything one surveying episode depends on."""

    estimator: str = "online_bayes"
    planner: str = "min_cost"
    planner_config: PlannerConfig = field(default_factory=PlannerConfig)
    model_params: GaussianModelParams = field(default_factory=GaussianModelParams)
    map_spec: MapSpec = field(default_factory=MapSpec)
    max_measurements: int = 100
    seed: int = 0
    known_mean: bool = True
    on_grid_measurements: bool = False
    start: int | None = None
    bridge_endpoint: str | None = None
    interp_method: str = "cubic"

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.planner not in PLANNERS:
            raise ValueError(f"unknown planner {self.planner!r}")
        if self.max_measurements < 1:
            raise ValueError("at least one measurement required")
        if self.estimator == "knn" and self.planner == "min_cost":
            raise ValueError("the min-cost planner needs an uncertainty-producing estimator")
        if self.estimator == "bridge" and not self.bridge_endpoint:
            raise ValueError("bridge estimator requires a bridge endpoint")


@dataclass(frozen=True)
class SurveyRecord:
    """Per-measurement series for one episode (row t = after measurement t).

    The prior state (before any measurement) is kept separately so curves
    can be anchored at t = 0.  Wall times come from a monotonic clock and
    are excluded from determinism guarantees.
    """

    rmse_db: np.ndarray
    total_uncertainty: np.ndarray
    x_m: np.ndarray
    y_m: np.ndarray
    cum_dist_m: np.ndarray
    wall_time_s: np.ndarray
    prior_rmse_db: float
    prior_total_uncertainty: float
    start_position: tuple[float, float]
    seed: int = 0

    def __post_init__(self):
        n = self.rmse_db.size
        for arr in (self.total_uncertainty, self.x_m, self.y_m, self.cum_dist_m,
                    self.wall_time_s):
            if arr.size != n:
                raise ValueError("survey series lengths differ")
        if np.any(np.diff(self.cum_dist_m) < -1e-9):
            raise ValueError("cumulative distance must be non-decreasing")

    @property
    def n_measurements(self) -> int:
        return self.rmse_db.size


@dataclass(frozen=True)
class AggregateCurves:
    """Point-wise statistics of RMSE and total uncertainty across runs.

    ``rms_rmse`` pools the squared errors of all runs before the root
    (the expectation sits inside the square root), which anchors the
    no-measurement value at the prior standard deviation; ``mean_rmse``
    averages the per-run RMSE values.
    """

    t: np.ndarray  # 0..max_measurements
    mean_rmse: np.ndarray
    std_rmse: np.ndarray
    rms_rmse: np.ndarray
    mean_uncertainty: np.ndarray
    std_uncertainty: np.ndarray


def sample_along_path(waypoints, spacing_m: float, first_at: float = 0.0):
    """Positions every ``spacing_m`` of arc length along a polyline.

    Samples sit at arc lengths first_at, first_at + spacing, ... ; the
    leftover distance past the final point is returned as the carry for
    the next path segment.  ``first_at`` = 0 includes the start point.
    """
    if not spacing_m > 0:
        raise ValueError("sample spacing must be positive")
    pts = np.atleast_2d(np.asarray(waypoints, dtype=float))
    if pts.shape[0] < 1:
        raise ValueError("at least one waypoint required")
    samples = []
    offsets = []
    next_at = float(first_at)
    walked = 0.0
    if pts.shape[0] == 1:
        if next_at <= 1e-9:
            samples.append(pts[0])
            offsets.append(0.0)
            next_at += spacing_m
        return np.array(samples).reshape(-1, 2), next_at - walked, np.array(offsets)
    for a, b in zip(pts[:-1], pts[1:]):
        seg = float(np.linalg.norm(b - a))
        if seg == 0.0:
            continue
        while next_at <= walked + seg + 1e-9:
            u = max(next_at - walked, 0.0) / seg
            samples.append(a + min(u, 1.0) * (b - a))
            offsets.append(min(max(next_at, 0.0), walked + seg))
            next_at += spacing_m
        walked += seg
    return (np.array(samples).reshape(-1, 2), next_at - walked,
            np.array(offsets, dtype=float))


# ---------------------------------------------------------------------------
# Estimator sessions
# ---------------------------------------------------------------------------


class _OnlineSession:
    def __init__(self, radio_map: RadioMap, config: SurveyConfig):
        self._est = OnlineEstimator(radio_map.grid, radio_map.transmitters,
                                    config.model_params, config.known_mean,
                                    radio_map.altitude_m)

    def update(self, m: Measurement) -> None:
        self._est.update(m)

    def per_tx_estimates(self) -> list[np.ndarray]:
        return [mean.copy() for mean in self._est.means]

    def combined_estimate(self) -> np.ndarray:
        return self._est.combined_estimate()

    def uncertainty_values(self) -> np.ndarray:
        return np.maximum(self._est.variances(), 0.0)


class _KnnSession:
    def __init__(self, radio_map: RadioMap, config: SurveyConfig):
        self._grid = radio_map.grid
        self._n_tx = radio_map.n_transmitters
        self._measurements: list[Measurement] = []

    def update(self, m: Measurement) -> None:
        self._measurements.append(m)

    def per_tx_estimates(self) -> list[np.ndarray] | None:
        if not self._measurements:
            return None
        return [knn_estimate(self._measurements, self._grid, tx_index=s)
                for s in range(self._n_tx)]

    def combined_estimate(self) -> np.ndarray | None:
        if not self._measurements:
            return None
        return knn_estimate(self._measurements, self._grid)

    def uncertainty_values(self) -> None:
        return None


class _BridgeSession:
    def __init__(self, radio_map: RadioMap, config: SurveyConfig):
        self._grid = radio_map.grid
        host, _, port = (config.bridge_endpoint or "").rpartition(":")
        self._client = BridgeClient(host or "127.0.0.1", int(port))
        self._client.connect()
        self._measurements: list[Measurement] = []
        self._mean: np.ndarray | None = None
        self._uncertainty: np.ndarray | None = None
        self._refresh()

    def _refresh(self) -> None:
        y, mask = build_observation_planes(self._measurements, self._grid)
        req = EstimateRequest(rows=self._grid.rows, cols=self._grid.cols,
                              y_matrix=tuple(float(v) for v in y),
                              mask=tuple(int(v) for v in mask))
        resp = self._client.request_estimate(req)
        self._mean = np.asarray(resp.mean_map, dtype=float)
        self._uncertainty = np.asarray(resp.uncertainty_map, dtype=float)

    def update(self, m: Measurement) -> None:
        self._measurements.append(m)
        self._refresh()

    def per_tx_estimates(self) -> None:
        return None  # the external estimator only models the aggregate map

    def combined_estimate(self) -> np.ndarray:
        return self._mean

    def uncertainty_values(self) -> np.ndarray:
        return self._uncertainty

    def close(self) -> None:
        self._client.close()


def _make_session(radio_map: RadioMap, config: SurveyConfig):
    if config.estimator == "online_bayes":
        return _OnlineSession(radio_map, config)
    if config.estimator == "knn":
        return _KnnSession(radio_map, config)
    return _BridgeSession(radio_map, config)


# ---------------------------------------------------------------------------
# The survey loop
# ---------------------------------------------------------------------------


def _default_start(grid: GridGeometry) -> int:
    for k in range(grid.n_points):
        if k not in grid.buildings:
            return k
    raise ValueError("every grid point lies inside a building")


class _Recorder:
    def __init__(self, radio_map: RadioMap, session, t0: float):
        self.map = radio_map
        self.session = session
        self.free_mask = ~radio_map.grid.building_mask()
        self.t0 = t0
        self.rmse, self.unc, self.xs, self.ys, self.cum, self.wall = [], [], [], [], [], []

    def metrics(self) -> tuple[float, float]:
        # component-aware estimators are scored per transmitter (the prior
        # error is then exactly the shadowing); aggregate-only estimators
        # are scored on the combined map
        per_tx = self.session.per_tx_estimates()
        if per_tx is not None:
            r = per_tx_rmse(self.map, per_tx)
        else:
            est = self.session.combined_estimate()
            r = rmse(self.map, est) if est is not None else float("nan")
        vals = self.session.uncertainty_values()
        u = float(np.mean(vals[self.free_mask])) if vals is not None else float("nan")
        return r, u

    def record(self, pos, cum_dist: float) -> None:
        r, u = self.metrics()
        self.rmse.append(r)
        self.unc.append(u)
        self.xs.append(float(pos[0]))
        self.ys.append(float(pos[1]))
        self.cum.append(float(cum_dist))
        self.wall.append(time.monotonic() - self.t0)


def run_survey(radio_map: RadioMap, config: SurveyConfig) -> SurveyRecord:
    """Run one surveying episode on a fixed ground-truth map."""
    grid = radio_map.grid
    buildings = grid.buildings
    pcfg = config.planner_config
    session = _make_session(radio_map, config)
    rng_meas = derive_rng(config.seed, "measurement-noise")
    start = config.start if config.start is not None else _default_start(grid)
    if start in buildings:
        raise ValueError("start position lies inside a building")
    rec = _Recorder(radio_map, session, time.monotonic())
    prior_rmse, prior_unc = rec.metrics()
    start_pos = grid.point(start)

    t = 0
    cum_dist = 0.0

    def take(x) -> None:
        nonlocal t
        pos = np.asarray(x, dtype=float)
        if config.on_grid_measurements:
            pos = grid.point(grid.nearest_index(pos, exclude_buildings=True))
        m = measure(radio_map, pos, config.model_params, rng_meas, index=t,
                    method=config.interp_method)
        try:
            session.update(m)
        except Exception as e:
            raise SurveyError(f"estimator failed at measurement {t}: {e}") from e
        t += 1

    if config.planner == "random":
        rng_pos = derive_rng(config.seed, "random-locations")
        xmin, ymin, xmax, ymax = grid.bounds()
        prev = start_pos
        while t < config.max_measurements:
            while True:
                x = np.array([rng_pos.uniform(xmin, xmax), rng_pos.uniform(ymin, ymax)])
                if not grid.in_building_footprint(x):
                    break
            cum_dist += float(np.linalg.norm(x - prev))
            take(x)
            rec.record(x, cum_dist)
            prev = x
    elif config.planner == "min_cost":
        fresh = session.uncertainty_values()
        if fresh is None:
            raise SurveyError("planner needs an uncertainty map before the first plan")
        smoothed = UncertaintyMap.fresh(fresh,
                                        source="bayesian" if config.estimator == "online_bayes"
                                        else "network")
        # the start measurement is position-independent of any plan, so it
        # is taken before the first plan; planning then works with a
        # non-degenerate uncertainty field
        take(start_pos)
        rec.record(start_pos, 0.0)
        current = start
        residual = pcfg.measurement_spacing_m
        while t < config.max_measurements:
            smoothed = smooth(smoothed, session.uncertainty_values(), pcfg.alpha)
            plan = plan_receding(grid, current, smoothed, buildings, pcfg, residual)
            pts = np.array([grid.point(k) for k in plan.waypoints])
            samples, carry, offsets = sample_along_path(pts, pcfg.measurement_spacing_m,
                                                        residual)
            taken = 0
            for x, off in zip(samples, offsets):
                if t >= config.max_measurements or taken >= pcfg.n_update:
                    break
                take(x)
                rec.record(x, cum_dist + float(off))
                taken += 1
            seg_len = float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
            cum_dist += seg_len
            residual = max(float(carry), 0.0)
            current = plan.waypoints[-1]
    else:
        if config.planner == "grid":
            stream = grid_planner(grid, buildings, start)
        elif config.planner == "spiral":
            stream = spiral_planner(grid, buildings, start)
        else:
            stream = uniform_planner(grid, buildings,
                                     derive_rng(config.seed, "uniform-planner"), start)
        prev_idx = next(stream)
        prev_pos = grid.point(prev_idx)
        residual = 0.0
        while t < config.max_measurements:
            wp = next(stream)
            wp_pos = grid.point(wp)
            samples, residual, offsets = sample_along_path(
                np.array([prev_pos, wp_pos]), pcfg.measurement_spacing_m, residual)
            for x, off in zip(samples, offsets):
                if t >= config.max_measurements:
                    break
                take(x)
                rec.record(x, cum_dist + float(off))
            cum_dist += float(np.linalg.norm(wp_pos - prev_pos))
            prev_idx, prev_pos = wp, wp_pos

    if hasattr(session, "close"):
        session.close()
    return SurveyRecord(
        rmse_db=np.array(rec.rmse),
        total_uncertainty=np.array(rec.unc),
        x_m=np.array(rec.xs),
        y_m=np.array(rec.ys),
        cum_dist_m=np.array(rec.cum),
        wall_time_s=np.array(rec.wall),
        prior_rmse_db=prior_rmse,
        prior_total_uncertainty=prior_unc,
        start_position=(float(start_pos[0]), float(start_pos[1])),
        seed=config.seed,
    )


# ---------------------------------------------------------------------------
# Monte Carlo campaigns
# ---------------------------------------------------------------------------


def _run_index(config: SurveyConfig, r: int) -> SurveyRecord:
    run_seed = int(derive_rng(config.seed, "run", r).integers(2 ** 62))
    radio_map = config.map_spec.draw_map(config.model_params, run_seed)
    return run_survey(radio_map, replace(config, seed=run_seed))


def monte_carlo(config: SurveyConfig, n_runs: int,
                n_jobs: int = 1) -> tuple[list[SurveyRecord], AggregateCurves]:
    """Fresh map and transmitter placement per run; aggregate the curves.

    Runs are sub-seeded independently, so distributing them across worker
    processes (n_jobs > 1) changes nothing about the results.
    """
    if n_runs < 1:
        raise ValueError("at least one run required")
    if n_jobs > 1:
        import multiprocessing

        with multiprocessing.Pool(n_jobs) as pool:
            records = pool.starmap(_run_index, [(config, r) for r in range(n_runs)])
    else:
        records = [_run_index(config, r) for r in range(n_runs)]
    return records, aggregate(records)


def aggregate(records: list[SurveyRecord]) -> AggregateCurves:
    """Point-wise mean/std across runs, with the prior state as t = 0."""
    n = records[0].n_measurements
    if any(r.n_measurements != n for r in records):
        raise ValueError("records of different lengths cannot be aggregated")
    rmse_mat = np.stack([np.concatenate([[r.prior_rmse_db], r.rmse_db]) for r in records])
    unc_mat = np.stack(
        [np.concatenate([[r.prior_total_uncertainty], r.total_uncertainty]) for r in records])
    return AggregateCurves(
        t=np.arange(n + 1),
        mean_rmse=rmse_mat.mean(axis=0),
        std_rmse=rmse_mat.std(axis=0),
        rms_rmse=np.sqrt(np.mean(rmse_mat ** 2, axis=0)),
        mean_uncertainty=unc_mat.mean(axis=0),
        std_uncertainty=unc_mat.std(axis=0),
    )


def write_runs_csv(records: list[SurveyRecord], path) -> None:
    """Per-run series; row t = 0 is the prior state at the start position."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "t", "rmse_db", "total_uncertainty", "x_m", "y_m",
                         "cum_dist_m"])
        for run, r in enumerate(records):
            writer.writerow([run, 0, repr(r.prior_rmse_db), repr(r.prior_total_uncertainty),
                             repr(r.start_position[0]), repr(r.start_position[1]), repr(0.0)])
            for t in range(r.n_measurements):
                writer.writerow([run, t + 1, repr(float(r.rmse_db[t])),
                                 repr(float(r.total_uncertainty[t])),
                                 repr(float(r.x_m[t])), repr(float(r.y_m[t])),
                                 repr(float(r.cum_dist_m[t]))])


def write_aggregate_csv(agg: AggregateCurves, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mean_rmse", "std_rmse", "mean_U", "std_U"])
        for i, t in enumerate(agg.t):
            writer.writerow([int(t), repr(float(agg.mean_rmse[i])),
                             repr(float(agg.std_rmse[i])),
                             repr(float(agg.mean_uncertainty[i])),
                             repr(float(agg.std_uncertainty[i]))])
