"""Reader for the textual radio-map interchange format.

The training pipeline consumes map files produced by the simulator (or
any external exporter).  Only the documented file format is shared with
the producer; see its README for the format description.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["MapFile", "read_map_file"]


@dataclass(frozen=True)
class MapFile:
    rows: int
    cols: int
    spacing_m: float
    origin: tuple[float, float]
    buildings: frozenset[int]
    per_tx_power_db: np.ndarray  # (S, rows, cols)

    @property
    def combined_db(self) -> np.ndarray:
        lin = np.power(10.0, self.per_tx_power_db / 10.0)
        return 10.0 * np.log10(lin.sum(axis=0))


def read_map_file(path) -> MapFile:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln.strip()]
    it = iter(lines)

    def fields(expected):
        parts = next(it).split()
        if parts[0] != expected:
            raise ValueError(f"expected {expected!r}, found {parts[0]!r}")
        return parts[1:]

    version = int(fields("radiomap")[0])
    if version != 1:
        raise ValueError(f"unsupported map format version {version}")
    rows = int(fields("rows")[0])
    cols = int(fields("cols")[0])
    spacing = float(fields("spacing_m")[0])
    ox, oy = (float(v) for v in fields("origin_m"))
    fields("altitude_m")
    b = fields("buildings")
    buildings = frozenset(int(v) for v in b[1 : 1 + int(b[0])])
    n_tx = int(fields("transmitters")[0])
    for _ in range(n_tx):
        fields("tx")
    planes = np.empty((n_tx, rows, cols))
    for s in range(n_tx):
        if int(fields("plane")[0]) != s:
            raise ValueError("plane indices out of order")
        for i in range(rows):
            row = np.array([float(x) for x in next(it).split()])
            if row.size != cols:
                raise ValueError(f"row {i} of plane {s} has {row.size} values")
            planes[s, i] = row
    fields("end")
    return MapFile(rows, cols, spacing, (ox, oy), buildings, planes)
