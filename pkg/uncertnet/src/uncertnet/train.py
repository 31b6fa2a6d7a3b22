"""Weighted two-head loss and the three-phase training schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from uncertnet.data import Dataset
from uncertnet.model import MapUncertaintyNet, NetConfig

__all__ = ["weighted_loss", "TrainSchedule", "train"]


def weighted_loss(mean_out, unc_out, targets, weights, gamma: float):
    """(1 - gamma) * ||E_P . W||_F^2 + gamma * ||E_sigma . W||_F^2, batch mean.

    E_P is the map residual; the uncertainty head is fit to the absolute
    residual |E_P| rather than its square to keep both terms on one scale.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    e_p = targets - mean_out
    e_sigma = e_p.abs() - unc_out
    per_example_p = ((e_p * weights) ** 2).sum(dim=(1, 2))
    per_example_s = ((e_sigma * weights) ** 2).sum(dim=(1, 2))
    return ((1.0 - gamma) * per_example_p + gamma * per_example_s).mean()


@dataclass(frozen=True)
class TrainSchedule:
    """Three-phase schedule: joint warm-up, mean-only, uncertainty-only."""

    phase_epochs: tuple[int, int, int] = (20, 10, 10)
    gammas: tuple[float, float, float] = (0.5, 0.0, 1.0)
    learning_rate: float = 1e-5
    batch_size: int = 64
    seed: int = 0
    net: NetConfig = field(default_factory=NetConfig)


def train(dataset: Dataset, schedule: TrainSchedule = TrainSchedule(),
          log=None) -> tuple[MapUncertaintyNet, dict]:
    """Run the schedule and return the model plus per-phase loss history.

    Phase 2 (gamma = 0) freezes the uncertainty subnetwork; phase 3
    (gamma = 1) freezes the mean subnetwork.  A non-finite loss aborts
    with diagnostics.
    """
    torch.manual_seed(schedule.seed)
    model = MapUncertaintyNet(schedule.net)
    inputs = torch.from_numpy(dataset.inputs.transpose(0, 3, 1, 2)).float()
    targets = torch.from_numpy(dataset.targets).float()
    weights = torch.from_numpy(dataset.weights).float()
    rng = np.random.default_rng(schedule.seed)
    history: dict[str, list[float]] = {"phase1": [], "phase2": [], "phase3": []}

    for phase, (epochs, gamma) in enumerate(zip(schedule.phase_epochs, schedule.gammas),
                                            start=1):
        for p in model.parameters():
            p.requires_grad_(True)
        if phase == 2:
            for p in model.uncertainty_subnet.parameters():
                p.requires_grad_(False)
        elif phase == 3:
            for p in model.mean_subnet.parameters():
                p.requires_grad_(False)
        opt = torch.optim.Adam((p for p in model.parameters() if p.requires_grad),
                               lr=schedule.learning_rate)
        for epoch in range(epochs):
            order = rng.permutation(len(dataset))
            epoch_losses = []
            for start in range(0, len(order), schedule.batch_size):
                idx = torch.from_numpy(order[start:start + schedule.batch_size].copy())
                mean_out, unc_out = model(inputs[idx])
                loss = weighted_loss(mean_out[:, 0], unc_out[:, 0], targets[idx],
                                     weights[idx], gamma)
                if not torch.isfinite(loss):
                    raise RuntimeError(
                        f"training diverged: non-finite loss in phase {phase}, "
                        f"epoch {epoch}, batch at {start}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                epoch_losses.append(float(loss.detach()))
            history[f"phase{phase}"].append(float(np.mean(epoch_losses)))
            if log is not None:
                log(phase, epoch, history[f"phase{phase}"][-1])
    model.eval()
    return model, history
