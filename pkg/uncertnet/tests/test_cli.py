"""Command-line smoke tests."""

import numpy as np

from uncertnet.cli import main
from uncertnet.model import load_checkpoint

from conftest import write_tiny_map


def test_train_writes_checkpoint_and_sidecar(tmp_path):
    rng = np.random.default_rng(1)
    maps = tmp_path / "maps"
    maps.mkdir()
    for i in range(6):
        write_tiny_map(maps / f"m{i}.txt", rng.normal(-60, 3, size=(1, 8, 8)))
    out = tmp_path / "model.pt"
    code = main(["train", "--maps", str(maps), "--out", str(out),
                 "--epochs", "1", "1", "0", "--lr", "1e-3",
                 "--base-channels", "2", "--batch-size", "4"])
    assert code == 0
    assert out.exists()
    assert out.with_suffix(".pt.json").exists()
    model, mean, std = load_checkpoint(out)
    assert std > 0
    assert model.latent_dim == 16
