"""Training tensors: observation/mask planes, residual weights, datasets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from uncertnet.mapfiles import MapFile

__all__ = [
    "TrainingExample",
    "build_observation_planes",
    "weight_matrix",
    "build_training_example",
    "Dataset",
    "build_dataset",
]


@dataclass(frozen=True)
class TrainingExample:
    """One (input tensor, target map, residual weights) triple.

    input_tensor stacks the averaged-observation plane and the
    {1, 0, -1} mask plane along the channel axis.  weight_matrix holds
    eta at measured points, 1 - eta elsewhere, and exactly 0 inside
    buildings, with eta in [0.5, 1].
    """

    input_tensor: np.ndarray  # (rows, cols, 2)
    true_map: np.ndarray  # (rows, cols)
    weight_matrix: np.ndarray  # (rows, cols)
    measured_set: frozenset[int]
    building_set: frozenset[int]

    def __post_init__(self):
        mask = self.input_tensor[:, :, 1]
        if not np.isin(mask, (-1.0, 0.0, 1.0)).all():
            raise ValueError("mask plane values restricted to {1, 0, -1}")
        b = np.zeros(self.true_map.size, dtype=bool)
        if self.building_set:
            b[list(self.building_set)] = True
        w = self.weight_matrix.ravel()
        if not np.all(w[b] == 0.0):
            raise ValueError("building residual weights must be exactly zero")


def build_observation_planes(values: dict, buildings, rows: int, cols: int):
    """Planes from per-node measurement value lists.

    values[k] holds the measured samples assigned to flat node k (the
    nearest grid node of each measurement); entries are per-node means,
    mask is 1 there, -1 at buildings, 0 elsewhere.
    """
    y = np.zeros(rows * cols)
    mask = np.zeros(rows * cols)
    for k, vals in values.items():
        y[k] = float(np.mean(vals))
        mask[k] = 1.0
    if buildings:
        b = list(buildings)
        y[b] = 0.0
        mask[b] = -1.0
    return y.reshape(rows, cols), mask.reshape(rows, cols)


def weight_matrix(mask: np.ndarray, eta: float) -> np.ndarray:
    """Residual weights: eta on measured cells, 1 - eta outside, 0 indoors."""
    if not 0.5 <= eta <= 1.0:
        raise ValueError("measurement emphasis eta must lie in [0.5, 1]")
    w = np.full(mask.shape, 1.0 - eta)
    w[mask == 1.0] = eta
    w[mask == -1.0] = 0.0
    return w


def build_training_example(mapfile: MapFile, n_measurements: int, seed: int,
                           eta: float = 0.9) -> TrainingExample:
    """Sample measurement nodes uniformly on the grid and build the planes."""
    if n_measurements < 1:
        raise ValueError("at least one measurement required")
    rows, cols = mapfile.rows, mapfile.cols
    combined = mapfile.combined_db
    rng = np.random.default_rng(np.random.SeedSequence([seed & (2 ** 63 - 1)]))
    free = np.array([k for k in range(rows * cols) if k not in mapfile.buildings])
    nodes = rng.choice(free, size=n_measurements, replace=True)
    per_node: dict[int, list[float]] = {}
    for k in nodes:
        i, j = divmod(int(k), cols)
        per_node.setdefault(int(k), []).append(float(combined[i, j]))
    y, mask = build_observation_planes(per_node, mapfile.buildings, rows, cols)
    return TrainingExample(
        input_tensor=np.stack([y, mask], axis=-1),
        true_map=combined,
        weight_matrix=weight_matrix(mask, eta),
        measured_set=frozenset(int(k) for k in per_node),
        building_set=frozenset(mapfile.buildings),
    )


@dataclass
class Dataset:
    """Stacked training tensors plus the dB normalization constants."""

    inputs: np.ndarray  # (D, rows, cols, 2)
    targets: np.ndarray  # (D, rows, cols)
    weights: np.ndarray  # (D, rows, cols)
    norm_mean: float
    norm_std: float

    def __len__(self) -> int:
        return self.inputs.shape[0]


def build_dataset(examples: list[TrainingExample],
                  norm: tuple[float, float] | None = None) -> Dataset:
    """Stack examples and standardize the dB scales.

    Targets are standardized with the dataset mean/std (outside
    buildings); observation-plane entries share the same transform at
    measured cells and stay 0 elsewhere, so the mask disambiguates
    "unobserved" from "observed at the mean".
    """
    if not examples:
        raise ValueError("at least one example required")
    inputs = np.stack([e.input_tensor for e in examples]).astype(np.float32)
    targets = np.stack([e.true_map for e in examples]).astype(np.float32)
    weights = np.stack([e.weight_matrix for e in examples]).astype(np.float32)
    if norm is None:
        outside = weights > 0
        mean = float(targets[outside].mean())
        std = float(targets[outside].std())
        if std == 0.0:
            std = 1.0
    else:
        mean, std = norm
    targets = (targets - mean) / std
    mask = inputs[..., 1]
    obs = mask == 1.0
    inputs[..., 0][obs] = (inputs[..., 0][obs] - mean) / std
    inputs[..., 0][~obs] = 0.0
    return Dataset(inputs=inputs, targets=targets, weights=weights,
                   norm_mean=mean, norm_std=std)
