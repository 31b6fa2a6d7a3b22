"""Textual map format round trips and the CSV companion."""

import numpy as np
import pytest

from radiosurvey.grid import GridGeometry
from radiosurvey.mapgen import GaussianModelParams, Transmitter, generate_map
from radiosurvey.mapio import load_map, save_map, save_map_csv


@pytest.fixture()
def sample_map():
    grid = GridGeometry(5, 7, 3.0, origin=(1.5, -2.0), buildings=frozenset({3, 18}))
    txs = [Transmitter(position=(4.0, 9.0, 20.0), power_dbm=10.0, carrier_hz=2.4e9),
           Transmitter(position=(16.0, 2.0, 20.0), power_dbm=7.0, carrier_hz=3.5e9)]
    params = GaussianModelParams(fading_var=1.5)
    return generate_map(grid, txs, params, seed=13)


def test_round_trip_bit_exact(tmp_path, sample_map):
    path = tmp_path / "m.txt"
    save_map(sample_map, path)
    loaded = load_map(path)
    assert loaded.grid == sample_map.grid
    assert loaded.transmitters == sample_map.transmitters
    assert np.array_equal(loaded.per_tx_power_db, sample_map.per_tx_power_db)
    np.testing.assert_allclose(loaded.combined_power_db, sample_map.combined_power_db,
                               atol=0, rtol=0)
    assert loaded.shadowing_fields is None


def test_save_is_deterministic(tmp_path, sample_map):
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    save_map(sample_map, p1)
    save_map(sample_map, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_csv_has_header_and_all_points(tmp_path, sample_map):
    path = tmp_path / "m.csv"
    save_map_csv(sample_map, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "row,col,x_m,y_m,tx0_db,tx1_db,combined_db,building"
    assert len(lines) == 1 + sample_map.grid.n_points


def test_truncated_file_rejected(tmp_path, sample_map):
    path = tmp_path / "m.txt"
    save_map(sample_map, path)
    body = path.read_text().split("\n")
    (tmp_path / "bad.txt").write_text("\n".join(body[:10]))
    with pytest.raises(ValueError):
        load_map(tmp_path / "bad.txt")


def test_wrong_header_rejected(tmp_path):
    p = tmp_path / "x.txt"
    p.write_text("notamap 1\n")
    with pytest.raises(ValueError):
        load_map(p)
