"""Textual radio-map file format, for exporting maps and importing
externally generated (e.g. ray-traced) ones.

Line-oriented, whitespace-separated, one header then row-major per-
transmitter dB planes::

    radiomap 1
    rows 32
    cols 32
    spacing_m 3.0
    origin_m 0.0 0.0
    altitude_m 0.0
    buildings 2 35 36
    transmitters 2
    tx 0 48.3 12.9 20.0 10.0 2400000000.0
    tx 1 ...
    plane 0
    <cols floats per line, rows lines>
    plane 1
    ...
    end

Transmitter lines carry x, y, height (m), power (dBm) and carrier (Hz).
Floats are written with ``repr`` so a round trip is bit-exact.  A CSV
variant (one row per grid point) is provided for human inspection.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from radiosurvey.grid import GridGeometry
from radiosurvey.mapgen import RadioMap, Transmitter, combine_db

__all__ = ["save_map", "load_map", "save_map_csv"]

_FORMAT_VERSION = 1


def save_map(radio_map: RadioMap, path) -> None:
    """Write a radio map in the textual interchange format."""
    grid = radio_map.grid
    lines = [f"radiomap {_FORMAT_VERSION}"]
    lines.append(f"rows {grid.rows}")
    lines.append(f"cols {grid.cols}")
    lines.append(f"spacing_m {grid.spacing_m!r}")
    lines.append(f"origin_m {grid.origin[0]!r} {grid.origin[1]!r}")
    lines.append(f"altitude_m {radio_map.altitude_m!r}")
    b = sorted(grid.buildings)
    lines.append("buildings " + " ".join([str(len(b))] + [str(k) for k in b]))
    lines.append(f"transmitters {radio_map.n_transmitters}")
    for s, tx in enumerate(radio_map.transmitters):
        lines.append(
            f"tx {s} {tx.position[0]!r} {tx.position[1]!r} {tx.position[2]!r} "
            f"{tx.power_dbm!r} {tx.carrier_hz!r}"
        )
    for s in range(radio_map.n_transmitters):
        lines.append(f"plane {s}")
        for row in radio_map.per_tx_power_db[s]:
            lines.append(" ".join(repr(float(v)) for v in row))
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_map(path) -> RadioMap:
    """Read a radio map written by ``save_map`` (or an external exporter).

    Shadowing fields are not stored in the format, so the loaded map has
    ``shadowing_fields=None``.
    """
    tokens = Path(path).read_text(encoding="utf-8").split("\n")
    it = iter(tokens)

    def next_fields(expected: str) -> list[str]:
        for line in it:
            if not line.strip():
                continue
            parts = line.split()
            if parts[0] != expected:
                raise ValueError(f"expected {expected!r} line, found {parts[0]!r}")
            return parts[1:]
        raise ValueError(f"truncated map file: missing {expected!r}")

    version = int(next_fields("radiomap")[0])
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported map format version {version}")
    rows = int(next_fields("rows")[0])
    cols = int(next_fields("cols")[0])
    spacing = float(next_fields("spacing_m")[0])
    ox, oy = (float(v) for v in next_fields("origin_m"))
    altitude = float(next_fields("altitude_m")[0])
    bfields = next_fields("buildings")
    n_b = int(bfields[0])
    buildings = frozenset(int(v) for v in bfields[1 : 1 + n_b])
    if len(buildings) != n_b:
        raise ValueError("building list length mismatch")
    grid = GridGeometry(rows, cols, spacing, (ox, oy), buildings)
    n_tx = int(next_fields("transmitters")[0])
    txs = []
    for s in range(n_tx):
        f = next_fields("tx")
        if int(f[0]) != s:
            raise ValueError("transmitter indices out of order")
        txs.append(Transmitter(position=(float(f[1]), float(f[2]), float(f[3])),
                               power_dbm=float(f[4]), carrier_hz=float(f[5])))
    planes = np.empty((n_tx, rows, cols))
    for s in range(n_tx):
        if int(next_fields("plane")[0]) != s:
            raise ValueError("plane indices out of order")
        for i in range(rows):
            row = ""
            while not row.strip():
                row = next(it)
            vals = np.array([float(x) for x in row.split()])
            if vals.size != cols:
                raise ValueError(f"plane {s} row {i} has {vals.size} values, expected {cols}")
            planes[s, i] = vals
    next_fields("end")
    combined = np.asarray(combine_db(planes, axis=0))
    return RadioMap(grid, tuple(txs), planes, combined, None, altitude)


def save_map_csv(radio_map: RadioMap, path) -> None:
    """CSV companion: one row per grid point with positions and powers."""
    grid = radio_map.grid
    pts = grid.points()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["row", "col", "x_m", "y_m"]
        header += [f"tx{s}_db" for s in range(radio_map.n_transmitters)]
        header += ["combined_db", "building"]
        writer.writerow(header)
        for k in range(grid.n_points):
            i, j = grid.row_col(k)
            row = [i, j, repr(pts[k, 0]), repr(pts[k, 1])]
            row += [repr(float(radio_map.per_tx_power_db[s, i, j]))
                    for s in range(radio_map.n_transmitters)]
            row.append(repr(float(radio_map.combined_power_db[i, j])))
            row.append(int(k in grid.buildings))
            writer.writerow(row)
