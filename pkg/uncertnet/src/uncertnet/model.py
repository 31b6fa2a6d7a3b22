"""Cascaded convolutional autoencoders for map and uncertainty estimation.

Two structurally identical subnetworks: the first maps the two-channel
observation tensor to a power-map estimate; the second consumes that
estimate concatenated with the input tensor and emits a nonnegative
per-cell uncertainty through an exponential output activation.  Every
convolution uses a 4x4 kernel, stride 1 and same padding; pooling halves
the spatial size three times, giving a 4x4 spatial bottleneck for 32x32
inputs; the decoder mirrors with factor-2 upsampling.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

__all__ = ["NetConfig", "MapUncertaintyNet", "save_checkpoint", "load_checkpoint"]

LATENT_SIDE = 4  # spatial bottleneck side for 32x32 inputs (4*4 = 16 positions)


@dataclass(frozen=True)
class NetConfig:
    base_channels: int = 32
    stages: int = 3
    kernel: int = 4
    negative_slope: float = 0.2

    def arch_hash(self) -> str:
        payload = json.dumps(self.__dict__, sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


class SameConv(nn.Module):
    """4x4 convolution, stride 1, TF-style asymmetric same padding."""

    def __init__(self, c_in: int, c_out: int, kernel: int):
        super().__init__()
        self.pad = (kernel - 1) // 2, kernel // 2, (kernel - 1) // 2, kernel // 2
        self.conv = nn.Conv2d(c_in, c_out, kernel)

    def forward(self, x):
        return self.conv(nn.functional.pad(x, self.pad))


class _Autoencoder(nn.Module):
    def __init__(self, c_in: int, cfg: NetConfig):
        super().__init__()
        act = nn.LeakyReLU(cfg.negative_slope)
        widths = [cfg.base_channels * 2 ** s for s in range(cfg.stages)]
        enc = []
        prev = c_in
        for w in widths:
            enc += [SameConv(prev, w, cfg.kernel), act, nn.MaxPool2d(2, 2)]
            prev = w
        self.encoder = nn.Sequential(*enc)
        dec = []
        for w in reversed(widths):
            dec += [nn.Upsample(scale_factor=2, mode="nearest"),
                    SameConv(prev, w, cfg.kernel), act]
            prev = w
        dec += [SameConv(prev, 1, cfg.kernel)]
        self.decoder = nn.Sequential(*dec)

    def forward(self, x):
        return self.decoder(self.encoder(x))


class MapUncertaintyNet(nn.Module):
    """mean_subnet(input) and uncertainty_subnet(mean, input) cascade."""

    def __init__(self, cfg: NetConfig = NetConfig()):
        super().__init__()
        self.cfg = cfg
        self.latent_dim = LATENT_SIDE * LATENT_SIDE
        self.mean_subnet = _Autoencoder(2, cfg)
        self.uncertainty_subnet = _Autoencoder(3, cfg)

    def forward(self, x):
        """x: (B, 2, H, W) -> mean (B, 1, H, W), uncertainty (B, 1, H, W) >= 0."""
        mean = self.mean_subnet(x)
        unc = torch.exp(self.uncertainty_subnet(torch.cat([mean, x], dim=1)))
        return mean, unc

    def forward_planes(self, input_tensor: np.ndarray):
        """Single (H, W, 2) numpy tensor -> (mean, uncertainty) numpy planes."""
        if input_tensor.ndim != 3 or input_tensor.shape[-1] != 2:
            raise ValueError("input tensor must have shape (rows, cols, 2)")
        with torch.no_grad():
            x = torch.from_numpy(
                np.ascontiguousarray(input_tensor.transpose(2, 0, 1))[None]
            ).float()
            mean, unc = self(x)
        return mean[0, 0].numpy(), unc[0, 0].numpy()


def save_checkpoint(model: MapUncertaintyNet, norm_mean: float, norm_std: float,
                    path) -> None:
    """Native weights file plus a JSON sidecar with the dB normalization."""
    path = Path(path)
    torch.save({"state_dict": model.state_dict(),
                "config": model.cfg.__dict__}, path)
    sidecar = {
        "norm_mean": norm_mean,
        "norm_std": norm_std,
        "arch_hash": model.cfg.arch_hash(),
        "latent_dim": model.latent_dim,
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[MapUncertaintyNet, float, float]:
    path = Path(path)
    payload = torch.load(path, map_location="cpu", weights_only=False)
    model = MapUncertaintyNet(NetConfig(**payload["config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    if sidecar["arch_hash"] != model.cfg.arch_hash():
        raise ValueError("checkpoint sidecar does not match the architecture")
    return model, float(sidecar["norm_mean"]), float(sidecar["norm_std"])
