"""Wire protocol and client for an external map/uncertainty estimator.

The survey loop can delegate estimation to a separate process (typically
a neural-network service).  Frames are a 4-byte big-endian unsigned
length followed by a UTF-8 JSON object with a "type" of
"estimate_request", "estimate_response" or "error"; numbers travel as
JSON doubles, which round-trip bit-exactly.  One connection carries
strictly sequential request/response pairs.
"""

from __future__ import annotations

import json
import socket
import struct
import threading
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from radiosurvey.grid import GridGeometry
from radiosurvey.mapgen import Measurement

__all__ = [
    "EstimateRequest",
    "EstimateResponse",
    "BridgeError",
    "BridgeConnectionError",
    "BridgeTimeoutError",
    "BridgeProtocolError",
    "BridgeContractError",
    "build_observation_planes",
    "encode_frame",
    "decode_frame",
    "read_frame",
    "write_frame",
    "BridgeClient",
    "request_estimate",
    "StubEstimateServer",
]

MAX_FRAME_BYTES = 64 * 1024 * 1024


class BridgeError(Exception):
    """Base class for estimator-bridge failures."""


class BridgeConnectionError(BridgeError):
    """The serving process is unreachable or the connection dropped."""


class BridgeTimeoutError(BridgeError):
    """No response within the configured timeout."""


class BridgeProtocolError(BridgeError):
    """Malformed frame: bad length, bad JSON, or missing fields."""


class BridgeContractError(BridgeError):
    """Well-formed response violating the estimate contract."""


@dataclass(frozen=True)
class EstimateRequest:
    """Observation and mask planes flattened row-major."""

    rows: int
    cols: int
    y_matrix: tuple[float, ...]
    mask: tuple[int, ...]

    def __post_init__(self):
        n = self.rows * self.cols
        if len(self.y_matrix) != n or len(self.mask) != n:
            raise ValueError("plane lengths must equal rows*cols")
        if any(m not in (-1, 0, 1) for m in self.mask):
            raise ValueError("mask values restricted to {1, 0, -1}")


@dataclass(frozen=True)
class EstimateResponse:
    """Mean map and nonnegative uncertainty map, flattened row-major."""

    mean_map: tuple[float, ...]
    uncertainty_map: tuple[float, ...]

    def __post_init__(self):
        if len(self.mean_map) != len(self.uncertainty_map):
            raise ValueError("response plane lengths differ")
        if any(u < 0 for u in self.uncertainty_map):
            raise ValueError("uncertainty values must be nonnegative")


def build_observation_planes(measurements: list[Measurement], grid: GridGeometry,
                             buildings=None) -> tuple[np.ndarray, np.ndarray]:
    """Aggregate measurements into observation and mask planes.

    Each measurement is assigned to its nearest free grid point (ties to
    the lowest flat index); entries are per-point arithmetic means of the
    assigned combined values.  Mask: 1 observed, -1 building, 0 otherwise.
    """
    buildings = set(grid.buildings if buildings is None else buildings)
    y = np.zeros(grid.n_points)
    counts = np.zeros(grid.n_points)
    for m in measurements:
        k = grid.nearest_index(m.location, exclude_buildings=True)
        y[k] += m.combined_db()
        counts[k] += 1
    observed = counts > 0
    y[observed] /= counts[observed]
    mask = np.zeros(grid.n_points, dtype=int)
    mask[observed] = 1
    if buildings:
        b = list(buildings)
        mask[b] = -1
        y[b] = 0.0
    return y, mask


# -- framing ---------------------------------------------------------------


def encode_frame(obj: dict) -> bytes:
    payload = json.dumps(obj, allow_nan=False, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME_BYTES:
        raise BridgeProtocolError(f"frame of {len(payload)} bytes exceeds the limit")
    return struct.pack(">I", len(payload)) + payload


def decode_frame(payload: bytes) -> dict:
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise BridgeProtocolError(f"undecodable frame: {e}") from e
    if not isinstance(obj, dict) or "type" not in obj:
        raise BridgeProtocolError("frame is not an object with a 'type' field")
    return obj


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise BridgeConnectionError("connection closed mid-frame")
        buf += chunk
    return buf


def read_frame(sock: socket.socket) -> dict:
    header = _recv_exact(sock, 4)
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise BridgeProtocolError(f"declared frame length {length} exceeds the limit")
    return decode_frame(_recv_exact(sock, length))


def write_frame(sock: socket.socket, obj: dict) -> None:
    sock.sendall(encode_frame(obj))


def request_to_obj(req: EstimateRequest) -> dict:
    return {
        "type": "estimate_request",
        "rows": req.rows,
        "cols": req.cols,
        "y_matrix": list(req.y_matrix),
        "mask": list(req.mask),
    }


def obj_to_request(obj: dict) -> EstimateRequest:
    try:
        return EstimateRequest(
            rows=int(obj["rows"]),
            cols=int(obj["cols"]),
            y_matrix=tuple(float(v) for v in obj["y_matrix"]),
            mask=tuple(int(v) for v in obj["mask"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise BridgeProtocolError(f"bad estimate_request: {e}") from e


def response_to_obj(resp: EstimateResponse) -> dict:
    return {
        "type": "estimate_response",
        "mean_map": list(resp.mean_map),
        "uncertainty_map": list(resp.uncertainty_map),
    }


def obj_to_response(obj: dict, expected_n: int) -> EstimateResponse:
    try:
        mean = tuple(float(v) for v in obj["mean_map"])
        unc = tuple(float(v) for v in obj["uncertainty_map"])
    except (KeyError, TypeError, ValueError) as e:
        raise BridgeProtocolError(f"bad estimate_response: {e}") from e
    if len(mean) != expected_n or len(unc) != expected_n:
        raise BridgeContractError(
            f"response planes of {len(mean)}/{len(unc)} values, expected {expected_n}")
    if any(not np.isfinite(v) for v in mean) or any(not np.isfinite(v) for v in unc):
        raise BridgeContractError("response contains non-finite values")
    if any(u < 0 for u in unc):
        raise BridgeContractError("response contains negative uncertainty")
    return EstimateResponse(mean_map=mean, uncertainty_map=unc)


class BridgeClient:
    """Blocking client; one request in flight per connection."""

    def __init__(self, host: str, port: int, timeout_s: float = 30.0):
        self.host = host
        self.port = port
        self.timeout_s = timeout_s
        self._sock: socket.socket | None = None

    def connect(self) -> None:
        if self._sock is not None:
            return
        try:
            self._sock = socket.create_connection((self.host, self.port),
                                                  timeout=self.timeout_s)
        except socket.timeout as e:
            raise BridgeTimeoutError(f"connect to {self.host}:{self.port} timed out") from e
        except OSError as e:
            raise BridgeConnectionError(
                f"cannot reach estimator at {self.host}:{self.port}: {e}") from e

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self) -> "BridgeClient":
        self.connect()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def request_estimate(self, req: EstimateRequest) -> EstimateResponse:
        self.connect()
        assert self._sock is not None
        try:
            write_frame(self._sock, request_to_obj(req))
            obj = read_frame(self._sock)
        except socket.timeout as e:
            raise BridgeTimeoutError("estimate request timed out") from e
        except BridgeError:
            raise
        except OSError as e:
            raise BridgeConnectionError(f"connection failed mid-request: {e}") from e
        if obj["type"] == "error":
            raise BridgeProtocolError(f"server error: {obj.get('message', '<no message>')}")
        if obj["type"] != "estimate_response":
            raise BridgeProtocolError(f"unexpected frame type {obj['type']!r}")
        return obj_to_response(obj, req.rows * req.cols)


def request_estimate(endpoint: str, req: EstimateRequest,
                     timeout_s: float = 30.0) -> EstimateResponse:
    """One-shot convenience wrapper around ``BridgeClient``."""
    host, _, port = endpoint.rpartition(":")
    with BridgeClient(host or "127.0.0.1", int(port), timeout_s) as client:
        return client.request_estimate(req)


class StubEstimateServer:
    """Loopback estimator used by the primary test suite and dry runs.

    mode="zeros" answers all-zero planes; mode="nearest" fills the mean
    with the nearest observed value and the uncertainty with the distance
    (in grid steps) to the nearest observation, which gives the planner a
    meaningful surface without any learned model.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0, mode: str = "nearest"):
        if mode not in ("zeros", "nearest"):
            raise ValueError(f"unknown stub mode {mode!r}")
        self.mode = mode
        self._lsock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._lsock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._lsock.bind((host, port))
        self._lsock.listen(1)
        self.host, self.port = self._lsock.getsockname()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True)

    @property
    def endpoint(self) -> str:
        return f"{self.host}:{self.port}"

    def start(self) -> "StubEstimateServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._lsock.close()
        self._thread.join(timeout=5)

    def __enter__(self) -> "StubEstimateServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def _serve(self) -> None:
        self._lsock.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self._lsock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            with conn:
                conn.settimeout(5.0)
                self._serve_connection(conn)

    def _serve_connection(self, conn: socket.socket) -> None:
        while not self._stop.is_set():
            try:
                obj = read_frame(conn)
            except BridgeProtocolError as e:
                write_frame(conn, {"type": "error", "message": str(e)})
                continue
            except (BridgeConnectionError, OSError):
                return
            try:
                req = obj_to_request(obj)
                resp = self._estimate(req)
                write_frame(conn, response_to_obj(resp))
            except BridgeError as e:
                write_frame(conn, {"type": "error", "message": str(e)})

    def _estimate(self, req: EstimateRequest) -> EstimateResponse:
        n = req.rows * req.cols
        if self.mode == "zeros":
            return EstimateResponse(mean_map=(0.0,) * n, uncertainty_map=(0.0,) * n)
        y = np.asarray(req.y_matrix)
        mask = np.asarray(req.mask)
        jj, ii = np.meshgrid(np.arange(req.cols), np.arange(req.rows))
        pts = np.column_stack([jj.ravel(), ii.ravel()]).astype(float)
        obs = np.flatnonzero(mask == 1)
        if obs.size == 0:
            mean = np.zeros(n)
            unc = np.full(n, float(req.rows + req.cols))
        else:
            dist, idx = cKDTree(pts[obs]).query(pts)
            mean = y[obs][idx]
            unc = dist
        unc[mask == -1] = 0.0
        return EstimateResponse(mean_map=tuple(float(v) for v in mean),
                                uncertainty_map=tuple(float(v) for v in unc))
