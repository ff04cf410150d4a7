# -*- coding: utf-8 -*-

import numpy as np
import pytest

from context import ladgpy  # noqa: F401

from ladgpy.config import TrainConfig
from ladgpy.data import gen_rotated_moons, gen_shifted_gaussians


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> TrainConfig:
    """A few steps of every phase on small networks"""
    return TrainConfig(
        seed=3,
        pretrain_steps=6,
        total_steps=14,
        samples_per_domain=8,
        k_nn=4,
        featurizer_widths=[8, 8],
        discriminator_widths=[8, 4],
        domain_head_widths=[8],
        log_interval=2,
        eval_interval=4,
    )


@pytest.fixture
def moons():
    return gen_rotated_moons(n_per_domain=40, seed=0)


@pytest.fixture
def gaussians():
    return gen_shifted_gaussians(n_per_domain=30, seed=0)
