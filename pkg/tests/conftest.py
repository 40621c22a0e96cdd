import dataclasses

import numpy as np
import pytest
import torch

from vgcdm.engine import TrainConfig, train
from vgcdm.synthbench import BenchEntry, FaultSpec, SpeedProfile, make_dataset
from vgcdm.unet import DenoiserConfig

TINY_L = 64
TINY_SR = 512.0


def tiny_denoiser_config(**overrides) -> DenoiserConfig:
    base = dict(
        length=TINY_L,
        base_channels=8,
        channel_multipliers=(1, 2),
        time_embed_dim=16,
        n_heads=2,
        inner_dim=16,
        encoder_depth=1,
        condition_enabled=True,
    )
    base.update(overrides)
    return DenoiserConfig(**base)


@pytest.fixture(scope="session")
def tiny_dataset():
    profile = SpeedProfile.steady(12.0, 2.0)
    entry = BenchEntry(profile, FaultSpec("outer_race", 1.0), count=32)
    return make_dataset([entry], TINY_SR, TINY_L, seed=5)


@pytest.fixture(scope="session")
def tiny_trained(tiny_dataset):
    """A briefly trained conditional model shared across tests."""
    dcfg = tiny_denoiser_config()
    tcfg = TrainConfig(epochs=5, batch_size=8, learning_rate=1e-3,
                       weight_decay=0.01, T=40, seed=0)
    model, report = train(tiny_dataset, dcfg, tcfg)
    return model, report, dcfg, tcfg


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)
    np.random.seed(0)
