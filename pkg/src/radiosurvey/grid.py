"""Rectangular measurement grid with building / no-fly cells."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["GridGeometry"]


@dataclass(frozen=True)
class GridGeometry:
    """Rectangular grid of candidate measurement locations.

    Grid point (i, j) sits at ``origin + (j*spacing, i*spacing)`` and has
    flat index ``k = i*cols + j``.  ``buildings`` holds the flat indices
    of grid points inside buildings or no-fly zones; each such point owns
    a square footprint of side ``spacing_m`` centred on it.
    """

    rows: int
    cols: int
    spacing_m: float
    origin: tuple[float, float] = (0.0, 0.0)
    buildings: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError("grid needs at least 2 rows and 2 columns")
        if not self.spacing_m > 0:
            raise ValueError("grid spacing must be positive")
        object.__setattr__(self, "buildings", frozenset(int(b) for b in self.buildings))
        for b in self.buildings:
            if not 0 <= b < self.n_points:
                raise ValueError(f"building index {b} outside grid of {self.n_points} points")

    @property
    def n_points(self) -> int:
        return self.rows * self.cols

    def flat_index(self, i: int, j: int) -> int:
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise ValueError(f"grid coordinate ({i}, {j}) out of range")
        return i * self.cols + j

    def row_col(self, k: int) -> tuple[int, int]:
        if not 0 <= k < self.n_points:
            raise ValueError(f"flat index {k} out of range")
        return divmod(k, self.cols)

    def point(self, k: int) -> np.ndarray:
        """2D position (m) of grid point k."""
        i, j = self.row_col(k)
        return np.array(
            [self.origin[0] + j * self.spacing_m, self.origin[1] + i * self.spacing_m]
        )

    def points(self) -> np.ndarray:
        """(N, 2) positions of all grid points in flat-index order."""
        jj, ii = np.meshgrid(np.arange(self.cols), np.arange(self.rows))
        x = self.origin[0] + jj.ravel() * self.spacing_m
        y = self.origin[1] + ii.ravel() * self.spacing_m
        return np.column_stack([x, y]).astype(float)

    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the grid bounding box."""
        return (
            self.origin[0],
            self.origin[1],
            self.origin[0] + (self.cols - 1) * self.spacing_m,
            self.origin[1] + (self.rows - 1) * self.spacing_m,
        )

    def contains(self, xy) -> bool:
        x, y = float(xy[0]), float(xy[1])
        xmin, ymin, xmax, ymax = self.bounds()
        return xmin <= x <= xmax and ymin <= y <= ymax

    def in_building_footprint(self, xy) -> bool:
        """True when xy lies strictly inside the square cell of a building point."""
        x, y = float(xy[0]), float(xy[1])
        half = self.spacing_m / 2.0
        for b in self.buildings:
            px, py = self.point(b)
            if abs(x - px) < half and abs(y - py) < half:
                return True
        return False

    def nearest_index(self, xy, exclude_buildings: bool = False) -> int:
        """Flat index of the nearest grid point (ties -> lowest index)."""
        pts = self.points()
        d2 = np.sum((pts - np.asarray(xy, dtype=float)) ** 2, axis=1)
        if exclude_buildings and self.buildings:
            d2[list(self.buildings)] = np.inf
        # argmin returns the first (lowest flat index) among exact ties;
        # round-off is broken the same way by quantizing distances
        return int(np.argmin(np.round(d2, decimals=9)))

    def building_mask(self) -> np.ndarray:
        """Boolean (N,) vector, True at building points."""
        mask = np.zeros(self.n_points, dtype=bool)
        if self.buildings:
            mask[list(self.buildings)] = True
        return mask
