"""Shared fixtures: a tiny architecture and a small synthetic dataset.

The tiny config keeps every structural property of the full network (two
attention stages, windowing, pooling head) at a fraction of the compute, so
gradient and equivariance tests run in milliseconds.  The small dataset uses
shorter trials (120 samples) for the same reason.
"""

import numpy as np
import pytest

from mclswt.data import SynthConfig, generate_synthetic_erd, split_new_subject
from mclswt.model import SwtConfig, init_model

# 40-sample trials -> sequence length 32 (4 windows of 8), embedding 8x4.
TINY = dict(n_samples=40, temporal_kernel=9, n_filters=8, window_size=8,
            n_heads=2, mlp_hidden=12, pool_kernel=8, pool_stride=8)

# 120-sample trials -> sequence length 112 (14 windows of 8).
SMALL = dict(n_samples=120, temporal_kernel=9, n_filters=8, window_size=8,
             n_heads=2, mlp_hidden=12, pool_kernel=8, pool_stride=8)

SMALL_SYNTH = dict(n_samples=120, cue_sample=20, n_trials_per_class=16,
                   n_subjects=4, noise_std=0.5, seed=3)


@pytest.fixture
def tiny_cfg():
    return SwtConfig(**TINY)


@pytest.fixture
def tiny_params(tiny_cfg):
    return init_model(tiny_cfg, seed=0)


@pytest.fixture
def small_cfg():
    return SwtConfig(**SMALL)


@pytest.fixture(scope="session")
def small_sets():
    """(train, test) split of a 32-trial synthetic set; subject 3 held out."""
    ts = generate_synthetic_erd(SynthConfig(**SMALL_SYNTH))
    return split_new_subject(ts, {0, 1, 2}, {3})


@pytest.fixture
def rng():
    return np.random.default_rng(0)
