"""Wire protocol service: framing, error recovery, building handling."""

import json
import socket
import struct

import numpy as np
import pytest

from uncertnet.model import MapUncertaintyNet, NetConfig
from uncertnet.serve import EstimateService, read_frame, write_frame


@pytest.fixture(scope="module")
def service():
    model = MapUncertaintyNet(NetConfig(base_channels=2))
    with EstimateService(model, norm_mean=-60.0, norm_std=3.0) as svc:
        yield svc


def _connect(svc):
    return socket.create_connection((svc.host, svc.port), timeout=10)


def _request_obj(rows=32, cols=32, buildings=()):
    n = rows * cols
    mask = [0] * n
    y = [0.0] * n
    mask[0] = 1
    y[0] = -57.0
    for b in buildings:
        mask[b] = -1
    return {"type": "estimate_request", "rows": rows, "cols": cols,
            "y_matrix": y, "mask": mask}


class TestService:
    def test_round_trip_shapes_and_nonnegativity(self, service):
        with _connect(service) as sock:
            write_frame(sock, _request_obj())
            obj = read_frame(sock)
        assert obj["type"] == "estimate_response"
        assert len(obj["mean_map"]) == 1024
        assert len(obj["uncertainty_map"]) == 1024
        assert all(u >= 0.0 for u in obj["uncertainty_map"])

    def test_building_uncertainty_zeroed(self, service):
        buildings = (5, 99, 1000)
        with _connect(service) as sock:
            write_frame(sock, _request_obj(buildings=buildings))
            obj = read_frame(sock)
        for b in buildings:
            assert obj["uncertainty_map"][b] == 0.0

    def test_two_sequential_requests_one_connection(self, service):
        with _connect(service) as sock:
            write_frame(sock, _request_obj())
            first = read_frame(sock)
            write_frame(sock, _request_obj())
            second = read_frame(sock)
        assert first["type"] == second["type"] == "estimate_response"
        assert first["mean_map"] == second["mean_map"]

    def test_malformed_json_gets_error_frame_connection_survives(self, service):
        with _connect(service) as sock:
            bad = b"this is not json"
            sock.sendall(struct.pack(">I", len(bad)) + bad)
            err = read_frame(sock)
            assert err["type"] == "error"
            write_frame(sock, _request_obj())
            ok = read_frame(sock)
            assert ok["type"] == "estimate_response"

    def test_bad_mask_value_is_error_frame(self, service):
        obj = _request_obj()
        obj["mask"][3] = 7
        with _connect(service) as sock:
            write_frame(sock, obj)
            err = read_frame(sock)
        assert err["type"] == "error"
        assert "mask" in err["message"]

    def test_wrong_type_is_error_frame(self, service):
        with _connect(service) as sock:
            write_frame(sock, {"type": "estimate_response", "mean_map": [],
                               "uncertainty_map": []})
            err = read_frame(sock)
        assert err["type"] == "error"

    def test_doubles_survive_round_trip(self, service):
        obj = _request_obj()
        rng = np.random.default_rng(3)
        obj["y_matrix"] = [float(v) for v in rng.normal(-60, 5, 1024)]
        obj["mask"] = [1] * 1024
        payload = json.dumps(obj)
        assert json.loads(payload)["y_matrix"] == obj["y_matrix"]
        with _connect(service) as sock:
            write_frame(sock, obj)
            resp = read_frame(sock)
        assert resp["type"] == "estimate_response"
