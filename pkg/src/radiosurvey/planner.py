"""Uncertainty-aware trajectory planning on the measurement grid.

The UAV moves between 8-adjacent grid points.  Each edge costs a blend of
travel time and an uncertainty-derived node cost (trapezoidal rule along
the edge); minimum-cost waypoint lists are found with Bellman-Ford (the
reference solver) or Dijkstra (an optimization, identical costs).  The
receding-horizon wrapper re-targets the highest-uncertainty grid point
and truncates plans to a fixed measurement budget.  Grid-sweep, spiral
and independent-uniform baseline planners are also provided.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from radiosurvey.grid import GridGeometry
from radiosurvey.seeding import derive_rng
from radiosurvey.uncertainty import UncertaintyMap

__all__ = [
    "CostField",
    "TrajectoryPlan",
    "PlannerConfig",
    "select_destination",
    "cost_field",
    "edge_cost",
    "shortest_path",
    "plan_receding",
    "boustrophedon_order",
    "spiral_order",
    "grid_planner",
    "spiral_planner",
    "uniform_planner",
]


@dataclass(frozen=True)
class CostField:
    """Nonnegative per-grid-point traversal cost; high uncertainty is cheap."""

    node_cost: np.ndarray  # (N,)
    h_kind: str = "reciprocal"
    epsilon: float = 1e-2

    def __post_init__(self):
        if np.any(self.node_cost < 0):
            raise ValueError("node costs must be nonnegative")
        if self.h_kind == "constant" and not np.all(self.node_cost == 1.0):
            raise ValueError("constant cost fields must be all ones")
        self.node_cost.setflags(write=False)


@dataclass(frozen=True)
class PlannerConfig:
    """Trajectory-planner knobs.

    beta trades travel time against traversed uncertainty; time and beta
    enter edge costs only through (1 - beta) / speed, so the speed is
    effectively a rescaling of beta.
    """

    beta: float = 0.75
    speed_mps: float = 1.0
    n_update: int = 7
    alpha: float = 0.25
    measurement_spacing_m: float = 7.0
    h_kind: str = "reciprocal"
    epsilon: float = 1e-2
    solver: str = "bellman_ford"

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if not self.speed_mps > 0:
            raise ValueError("speed must be positive")
        if self.n_update < 1:
            raise ValueError("measurement budget must be at least 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("smoothing factor must lie in (0, 1]")
        if not self.measurement_spacing_m > 0:
            raise ValueError("measurement spacing must be positive")


@dataclass(frozen=True)
class TrajectoryPlan:
    """Ordered waypoint list with its accumulated cost and flight time."""

    waypoints: tuple[int, ...]
    total_cost: float
    total_time_s: float

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("a plan needs at least one waypoint")


def select_destination(umap: UncertaintyMap, buildings) -> int:
    """Grid point of highest smoothed uncertainty outside buildings.

    Ties break toward the lowest flat index.
    """
    vals = umap.smoothed.astype(float).copy()
    b = list(buildings)
    if b:
        vals[b] = -np.inf
    if not np.isfinite(vals).any():
        raise ValueError("every grid point lies inside a building")
    return int(np.argmax(vals))


def cost_field(umap: UncertaintyMap, h_kind: str = "reciprocal",
               epsilon: float = 1e-2) -> CostField:
    """Map smoothed uncertainty through a nonnegative decreasing function."""
    phi = umap.smoothed
    if h_kind == "reciprocal":
        if not epsilon > 0:
            raise ValueError("reciprocal cost needs a positive epsilon")
        c = 1.0 / (phi + epsilon)
    elif h_kind == "exponential":
        c = np.exp(-phi)
    elif h_kind == "constant":
        c = np.ones_like(phi)
    else:
        raise ValueError(f"unknown cost function kind: {h_kind!r}")
    return CostField(node_cost=np.asarray(c, dtype=float), h_kind=h_kind, epsilon=epsilon)


def _assert_adjacent(grid: GridGeometry, a: int, b: int) -> None:
    ia, ja = grid.row_col(a)
    ib, jb = grid.row_col(b)
    if max(abs(ia - ib), abs(ja - jb)) != 1:
        raise ValueError(f"grid points {a} and {b} are not 8-adjacent")


def edge_cost(grid: GridGeometry, x_a: int, x_b: int, cf: CostField,
              config: PlannerConfig) -> float:
    """Trapezoidal traversal cost of one 8-adjacency edge."""
    _assert_adjacent(grid, x_a, x_b)
    if x_a in grid.buildings or x_b in grid.buildings:
        raise ValueError("edge endpoints must lie outside buildings")
    length = float(np.linalg.norm(grid.point(x_a) - grid.point(x_b)))
    c = cf.node_cost
    return length * ((1.0 - config.beta) / config.speed_mps
                     + (config.beta / 2.0) * (float(c[x_a]) + float(c[x_b])))


@lru_cache(maxsize=8)
def _edge_arrays(grid: GridGeometry):
    """(src, dst, length, order-by-dst metadata) over all admissible edges.

    A diagonal move is admissible only when both orthogonally adjacent
    cells it passes between are free, so paths cannot clip building
    corners.
    """
    rows, cols = grid.rows, grid.cols
    blocked = grid.building_mask().reshape(rows, cols)
    srcs, dsts, lens = [], [], []
    offsets = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    for di, dj in offsets:
        ni, nj = ii + di, jj + dj
        ok = (ni >= 0) & (ni < rows) & (nj >= 0) & (nj < cols)
        ok &= ~blocked
        oki, okj = np.clip(ni, 0, rows - 1), np.clip(nj, 0, cols - 1)
        ok &= ~blocked[oki, okj]
        if di != 0 and dj != 0:
            ok &= ~blocked[np.clip(ii + di, 0, rows - 1), jj]
            ok &= ~blocked[ii, np.clip(jj + dj, 0, cols - 1)]
        sel = np.flatnonzero(ok.ravel())
        srcs.append(sel)
        dsts.append((oki.ravel() * cols + okj.ravel())[sel])
        step = grid.spacing_m * (np.sqrt(2.0) if di != 0 and dj != 0 else 1.0)
        lens.append(np.full(sel.size, step))
    src = np.concatenate(srcs)
    dst = np.concatenate(dsts)
    length = np.concatenate(lens)
    order = np.lexsort((src, dst))  # by destination, then source: lowest-index ties win
    src, dst, length = src[order], dst[order], length[order]
    group_dst, group_starts = np.unique(dst, return_index=True)
    for arr in (src, dst, length, group_dst, group_starts):
        arr.setflags(write=False)
    return src, dst, length, group_dst, group_starts


def _edge_weights(grid: GridGeometry, cf: CostField, config: PlannerConfig):
    src, dst, length, group_dst, group_starts = _edge_arrays(grid)
    c = cf.node_cost
    w = length * ((1.0 - config.beta) / config.speed_mps
                  + (config.beta / 2.0) * (c[src] + c[dst]))
    return src, dst, length, w, group_dst, group_starts


def _bellman_ford(n, src, dst, w, group_dst, group_starts, start):
    dist = np.full(n, np.inf)
    dist[start] = 0.0
    parent = np.full(n, -1, dtype=np.int64)
    edge_pos = np.arange(src.size)
    group_sizes = np.diff(np.append(group_starts, src.size))
    for _ in range(n):
        cand = dist[src] + w
        gmin = np.minimum.reduceat(cand, group_starts)
        improved = gmin < dist[group_dst]
        if not improved.any():
            break
        is_min = cand == np.repeat(gmin, group_sizes)
        first_min = np.minimum.reduceat(np.where(is_min, edge_pos, src.size), group_starts)
        upd = group_dst[improved]
        dist[upd] = gmin[improved]
        parent[upd] = src[first_min[improved]]
    return dist, parent


def _dijkstra(n, src, dst, w, group_dst, group_starts, start):
    # adjacency in CSR-like form keyed by source
    order = np.lexsort((dst, src))
    s2, d2, w2 = src[order], dst[order], w[order]
    out_starts = np.searchsorted(s2, np.arange(n + 1))
    dist = np.full(n, np.inf)
    dist[start] = 0.0
    parent = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    heap = [(0.0, start)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u] or d > dist[u]:
            continue
        done[u] = True
        for e in range(out_starts[u], out_starts[u + 1]):
            v = d2[e]
            nd = d + w2[e]
            if nd < dist[v]:
                dist[v] = nd
                parent[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, parent


def shortest_path(grid: GridGeometry, buildings, cf: CostField, config: PlannerConfig,
                  start: int, dest: int, solver: str | None = None) -> TrajectoryPlan:
    """Minimum-total-edge-cost 8-connected path from start to dest.

    ``buildings`` must match the grid's own building set (kept as an
    explicit argument so call sites state what they avoid).  Raises when
    the destination is unreachable through free cells.
    """
    buildings = frozenset(int(b) for b in buildings)
    if buildings != grid.buildings:
        grid = GridGeometry(grid.rows, grid.cols, grid.spacing_m, grid.origin, buildings)
    if start in buildings or dest in buildings:
        raise ValueError("start and destination must lie outside buildings")
    if start == dest:
        return TrajectoryPlan(waypoints=(start,), total_cost=0.0, total_time_s=0.0)
    solver = solver or config.solver
    src, dst, length, w, group_dst, group_starts = _edge_weights(grid, cf, config)
    if solver == "bellman_ford":
        dist, parent = _bellman_ford(grid.n_points, src, dst, w, group_dst,
                                     group_starts, start)
    elif solver == "dijkstra":
        dist, parent = _dijkstra(grid.n_points, src, dst, w, group_dst,
                                 group_starts, start)
    else:
        raise ValueError(f"unknown solver: {solver!r}")
    if not np.isfinite(dist[dest]):
        raise ValueError("destination disconnected")
    waypoints = [dest]
    while waypoints[-1] != start:
        waypoints.append(int(parent[waypoints[-1]]))
        if len(waypoints) > grid.n_points:
            raise RuntimeError("parent chain does not reach the start")
    waypoints.reverse()
    total_cost = 0.0
    total_time = 0.0
    for a, b in zip(waypoints, waypoints[1:]):
        total_cost += edge_cost(grid, a, b, cf, config)
        total_time += float(np.linalg.norm(grid.point(a) - grid.point(b))) / config.speed_mps
    return TrajectoryPlan(tuple(waypoints), total_cost, total_time)


def _count_measurements(arc_len: float, residual_m: float, spacing_m: float) -> int:
    """Measurements taken in an arc of given length, first one residual_m in."""
    if arc_len < residual_m - 1e-9:
        return 0
    return int(np.floor((arc_len - residual_m) / spacing_m + 1e-9)) + 1


def truncate_plan(grid: GridGeometry, plan: TrajectoryPlan, cf: CostField,
                  config: PlannerConfig, residual_m: float = 0.0) -> TrajectoryPlan:
    """Shortest waypoint prefix along which the measurement budget completes.

    Measurements fall every ``measurement_spacing_m`` of arc length, the
    first one ``residual_m`` past the plan start.  If the full plan yields
    fewer than ``n_update`` measurements it is returned whole (the next
    replan then happens on arrival).  At least one edge is kept so the
    survey always progresses.
    """
    pts = [grid.point(k) for k in plan.waypoints]
    arc = 0.0
    for m in range(1, len(plan.waypoints)):
        arc += float(np.linalg.norm(pts[m] - pts[m - 1]))
        if _count_measurements(arc, residual_m, config.measurement_spacing_m) >= config.n_update:
            waypoints = plan.waypoints[: m + 1]
            total_cost = 0.0
            total_time = 0.0
            for a, b in zip(waypoints, waypoints[1:]):
                total_cost += edge_cost(grid, a, b, cf, config)
                total_time += float(np.linalg.norm(grid.point(a) - grid.point(b))) \
                    / config.speed_mps
            return TrajectoryPlan(waypoints, total_cost, total_time)
    return plan


def plan_receding(grid: GridGeometry, current: int, umap: UncertaintyMap, buildings,
                  config: PlannerConfig, residual_m: float = 0.0) -> TrajectoryPlan:
    """One receding-horizon planning step.

    Targets the highest-uncertainty free grid point (the runner-up when
    that is the current position), solves the minimum-cost path, and
    truncates it to the measurement budget.
    """
    dest = select_destination(umap, buildings)
    if dest == current:
        vals = umap.smoothed.astype(float).copy()
        b = list(buildings)
        if b:
            vals[b] = -np.inf
        vals[current] = -np.inf
        if not np.isfinite(vals).any():
            raise ValueError("no reachable destination besides the current position")
        dest = int(np.argmax(vals))
    cf = cost_field(umap, config.h_kind, config.epsilon)
    plan = shortest_path(grid, buildings, cf, config, current, dest)
    return truncate_plan(grid, plan, cf, config, residual_m)


# ---------------------------------------------------------------------------
# Baseline planners
# ---------------------------------------------------------------------------


def boustrophedon_order(grid: GridGeometry, buildings=None) -> list[int]:
    """Column-by-column sweep order, alternating direction, skipping buildings."""
    buildings = set(grid.buildings if buildings is None else buildings)
    order = []
    for j in range(grid.cols):
        rows = range(grid.rows) if j % 2 == 0 else range(grid.rows - 1, -1, -1)
        for i in rows:
            k = grid.flat_index(i, j)
            if k not in buildings:
                order.append(k)
    return order


def spiral_order(grid: GridGeometry, buildings=None) -> list[int]:
    """Inward rectangular spiral from the top-left corner, skipping buildings."""
    buildings = set(grid.buildings if buildings is None else buildings)
    order = []
    top, bottom, left, right = 0, grid.rows - 1, 0, grid.cols - 1
    while top <= bottom and left <= right:
        for j in range(left, right + 1):
            order.append(grid.flat_index(top, j))
        for i in range(top + 1, bottom + 1):
            order.append(grid.flat_index(i, right))
        if bottom > top:
            for j in range(right - 1, left - 1, -1):
                order.append(grid.flat_index(bottom, j))
        if right > left:
            for i in range(bottom - 1, top, -1):
                order.append(grid.flat_index(i, left))
        top, bottom, left, right = top + 1, bottom - 1, left + 1, right - 1
    return [k for k in order if k not in buildings]


_CONSTANT_CONFIG = PlannerConfig(beta=0.0, h_kind="constant")


def _bridge(grid: GridGeometry, current: int, target: int) -> list[int]:
    """Waypoints from current to target (exclusive of current), routed
    around buildings with a constant cost field."""
    ia, ja = grid.row_col(current)
    ib, jb = grid.row_col(target)
    if max(abs(ia - ib), abs(ja - jb)) == 1 and _diag_free(grid, current, target):
        return [target]
    cf = CostField(node_cost=np.ones(grid.n_points), h_kind="constant")
    plan = shortest_path(grid, grid.buildings, cf, _CONSTANT_CONFIG, current, target)
    return list(plan.waypoints[1:])


def _diag_free(grid: GridGeometry, a: int, b: int) -> bool:
    ia, ja = grid.row_col(a)
    ib, jb = grid.row_col(b)
    if abs(ia - ib) == 1 and abs(ja - jb) == 1:
        return (grid.flat_index(ia, jb) not in grid.buildings
                and grid.flat_index(ib, ja) not in grid.buildings)
    return True


def _coverage_stream(grid: GridGeometry, order: list[int], current: int | None):
    if not order:
        raise ValueError("coverage order is empty")
    cur = order[0] if current is None else current
    yield cur
    while True:
        for target in order:
            if target == cur:
                continue
            for wp in _bridge(grid, cur, target):
                yield wp
            cur = target


def grid_planner(grid: GridGeometry, buildings=None, current: int | None = None):
    """Endless boustrophedon waypoint stream (buildings routed around)."""
    return _coverage_stream(grid, boustrophedon_order(grid, buildings), current)


def spiral_planner(grid: GridGeometry, buildings=None, current: int | None = None):
    """Endless inward-spiral waypoint stream (buildings routed around)."""
    return _coverage_stream(grid, spiral_order(grid, buildings), current)


def _straight_line(grid: GridGeometry, current: int, target: int) -> list[int]:
    """8-connected approximation of the straight segment current -> target.

    Greedily steps to the admissible neighbour closest to the target;
    falls back to a constant-cost shortest path when blocked.
    """
    path = []
    cur = current
    tpos = grid.point(target)
    while cur != target:
        ii, jj = grid.row_col(cur)
        cur_d = float(np.linalg.norm(grid.point(cur) - tpos))
        best = None
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                ni, nj = ii + di, jj + dj
                if not (0 <= ni < grid.rows and 0 <= nj < grid.cols):
                    continue
                k = grid.flat_index(ni, nj)
                if k in grid.buildings or not _diag_free(grid, cur, k):
                    continue
                d = float(np.linalg.norm(grid.point(k) - tpos))
                if d < cur_d - 1e-12 and (best is None or (d, k) < best):
                    best = (d, k)
        if best is None:
            path.extend(_bridge(grid, cur, target))
            return path
        cur = best[1]
        path.append(cur)
    return path


def uniform_planner(grid: GridGeometry, buildings=None, seed: int = 0,
                    current: int | None = None):
    """Waypoint stream of straight lines to i.i.d. uniform free targets."""
    buildings = set(grid.buildings if buildings is None else buildings)
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(seed, "uniform-planner")
    free = [k for k in range(grid.n_points) if k not in buildings]
    if not free:
        raise ValueError("every grid point lies inside a building")
    cur = free[0] if current is None else current
    yield cur
    while True:
        target = free[int(rng.integers(len(free)))]
        if target == cur:
            continue
        for wp in _straight_line(grid, cur, target):
            yield wp
        cur = target
