"""Network architecture contracts and checkpointing."""

import numpy as np
import pytest
import torch

from uncertnet.model import (
    LATENT_SIDE,
    MapUncertaintyNet,
    NetConfig,
    load_checkpoint,
    save_checkpoint,
)

SMALL = NetConfig(base_channels=4)


class TestForward:
    def test_output_shapes_match_input(self):
        model = MapUncertaintyNet(SMALL)
        x = torch.randn(3, 2, 32, 32)
        mean, unc = model(x)
        assert mean.shape == (3, 1, 32, 32)
        assert unc.shape == (3, 1, 32, 32)

    def test_uncertainty_nonnegative_for_random_inputs(self):
        model = MapUncertaintyNet(SMALL)
        torch.manual_seed(1)
        with torch.no_grad():
            for _ in range(100):
                x = torch.randn(1, 2, 32, 32) * 5.0
                _, unc = model(x)
                assert float(unc.min()) >= 0.0

    def test_untrained_model_finite_on_zero_input(self):
        model = MapUncertaintyNet(SMALL)
        mean, unc = model(torch.zeros(1, 2, 32, 32))
        assert torch.isfinite(mean).all()
        assert torch.isfinite(unc).all()

    def test_spatial_bottleneck_is_4x4(self):
        model = MapUncertaintyNet(SMALL)
        z = model.mean_subnet.encoder(torch.zeros(1, 2, 32, 32))
        assert z.shape[-2:] == (LATENT_SIDE, LATENT_SIDE)
        assert model.latent_dim == 16

    def test_plane_interface_shape_checked(self):
        model = MapUncertaintyNet(SMALL)
        with pytest.raises(ValueError):
            model.forward_planes(np.zeros((32, 32)))
        mean, unc = model.forward_planes(np.zeros((32, 32, 2)))
        assert mean.shape == (32, 32)
        assert np.all(unc >= 0.0)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = MapUncertaintyNet(SMALL)
        path = tmp_path / "model.pt"
        save_checkpoint(model, norm_mean=-60.0, norm_std=3.5, path=path)
        loaded, mean, std = load_checkpoint(path)
        assert mean == -60.0 and std == 3.5
        x = torch.randn(1, 2, 32, 32)
        with torch.no_grad():
            a, b = model(x)
            c, d = loaded(x)
        assert torch.equal(a, c) and torch.equal(b, d)

    def test_sidecar_mismatch_rejected(self, tmp_path):
        model = MapUncertaintyNet(SMALL)
        path = tmp_path / "model.pt"
        save_checkpoint(model, -60.0, 3.5, path)
        sidecar = path.with_suffix(".pt.json")
        sidecar.write_text(sidecar.read_text().replace(
            NetConfig(base_channels=4).arch_hash(), "0" * 16))
        with pytest.raises(ValueError, match="does not match"):
            load_checkpoint(path)
