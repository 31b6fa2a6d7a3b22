"""TCP service answering estimate requests with model forward passes.

Frames are 4-byte big-endian lengths followed by UTF-8 JSON objects; a
request carries flattened observation and mask planes, the response the
mean and nonnegative uncertainty planes.  Malformed frames are answered
with an error frame and the connection stays open; requests on one
connection are strictly sequential.
"""

from __future__ import annotations

import json
import socket
import struct
import threading

import numpy as np

from uncertnet.model import MapUncertaintyNet

__all__ = ["FrameError", "read_frame", "write_frame", "EstimateService"]

MAX_FRAME_BYTES = 64 * 1024 * 1024


class FrameError(ValueError):
    pass


def _recv_exact(conn: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = conn.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        buf += chunk
    return buf


def read_frame(conn: socket.socket) -> dict:
    (length,) = struct.unpack(">I", _recv_exact(conn, 4))
    if length > MAX_FRAME_BYTES:
        raise FrameError(f"declared frame length {length} exceeds the limit")
    payload = _recv_exact(conn, length)
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FrameError(f"undecodable frame: {e}") from e
    if not isinstance(obj, dict) or "type" not in obj:
        raise FrameError("frame is not an object with a 'type' field")
    return obj


def write_frame(conn: socket.socket, obj: dict) -> None:
    payload = json.dumps(obj, allow_nan=False, separators=(",", ":")).encode("utf-8")
    conn.sendall(struct.pack(">I", len(payload)) + payload)


class EstimateService:
    """Serves one model; one connection at a time, sequential requests."""

    def __init__(self, model: MapUncertaintyNet, norm_mean: float, norm_std: float,
                 host: str = "127.0.0.1", port: int = 0):
        self.model = model.eval()
        self.norm_mean = norm_mean
        self.norm_std = norm_std
        self._lsock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._lsock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._lsock.bind((host, port))
        self._lsock.listen(1)
        self.host, self.port = self._lsock.getsockname()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        return f"{self.host}:{self.port}"

    def estimate(self, y_plane: np.ndarray, mask_plane: np.ndarray):
        """dB observation plane + mask -> (mean dB, uncertainty dB) planes."""
        y = np.asarray(y_plane, dtype=np.float32).copy()
        mask = np.asarray(mask_plane, dtype=np.float32)
        observed = mask == 1.0
        y[observed] = (y[observed] - self.norm_mean) / self.norm_std
        y[~observed] = 0.0
        mean_n, unc_n = self.model.forward_planes(np.stack([y, mask], axis=-1))
        mean = mean_n * self.norm_std + self.norm_mean
        unc = np.maximum(unc_n * self.norm_std, 0.0)
        unc[mask == -1.0] = 0.0  # uncertainty is undefined inside buildings
        return mean, unc

    def _answer(self, obj: dict) -> dict:
        if obj.get("type") != "estimate_request":
            return {"type": "error", "message": f"unexpected frame type {obj.get('type')!r}"}
        try:
            rows, cols = int(obj["rows"]), int(obj["cols"])
            y = np.asarray(obj["y_matrix"], dtype=float).reshape(rows, cols)
            mask = np.asarray(obj["mask"], dtype=float).reshape(rows, cols)
        except (KeyError, TypeError, ValueError) as e:
            return {"type": "error", "message": f"bad estimate_request: {e}"}
        if not np.isin(mask, (-1.0, 0.0, 1.0)).all():
            return {"type": "error", "message": "mask values restricted to {1, 0, -1}"}
        mean, unc = self.estimate(y, mask)
        return {
            "type": "estimate_response",
            "mean_map": [float(v) for v in mean.ravel()],
            "uncertainty_map": [float(v) for v in unc.ravel()],
        }

    def _serve_connection(self, conn: socket.socket) -> None:
        while not self._stop.is_set():
            try:
                obj = read_frame(conn)
            except FrameError as e:
                write_frame(conn, {"type": "error", "message": str(e)})
                continue
            except (ConnectionError, OSError):
                return
            try:
                write_frame(conn, self._answer(obj))
            except OSError:
                return

    def _run(self) -> None:
        self._lsock.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self._lsock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            with conn:
                conn.settimeout(30.0)
                self._serve_connection(conn)

    def start(self) -> "EstimateService":
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._lsock.close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "EstimateService":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def serve_forever(self) -> None:
        """Blocking variant for the command line."""
        self._run()
