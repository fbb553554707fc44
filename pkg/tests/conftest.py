import numpy as np
import pytest

from odeformer.blocks import init_block_params, norm_count
from odeformer.config import BlockConfig, NetworkConfig
from odeformer.tensor import Tensor


@pytest.fixture
def rng():
    """Seeded generator shared by a single test."""
    return np.random.default_rng(1234)


@pytest.fixture
def make_block():
    """Factory for (params, config, X) of a small random layer."""

    def _make(variant="parallel", norm_variant="A", seed=0, length=3, dim=4, heads=2, d_ff=8, std=0.5, **cfg):
        r = np.random.default_rng(seed)
        bcfg = BlockConfig(variant=variant, norm_variant=norm_variant, **cfg)
        p = init_block_params(dim, heads, d_ff, norm_count(bcfg), r, std=std)
        x = Tensor(r.uniform(-1.0, 1.0, size=(length, dim)))
        return p, bcfg, x

    return _make


@pytest.fixture
def tiny_classify_cfg():
    """A classifier small enough to train in a test."""
    return NetworkConfig(
        task="classify", depth=2, dim=8, heads=2, mlp_ratio=2.0,
        image_size=8, patch_size=4, channels=1, num_classes=3,
    )


@pytest.fixture
def tiny_lm_cfg():
    return NetworkConfig(task="lm", depth=2, dim=8, heads=2, mlp_ratio=2.0, vocab_size=7, context_length=5)
