import numpy as np
import pytest
from hypothesis import settings

from ngt.gating import GatingConfig, GatingVariant
from ngt.model import ModelConfig

settings.register_profile("default", deadline=None)
settings.load_profile("default")

TOY = ModelConfig(vocab_size=11, hidden=8, num_layers=2, heads=2, intermediate=16,
                  max_positions=8, output_units=1)


@pytest.fixture
def toy_cfg():
    return TOY


@pytest.fixture
def toy_batch():
    rng = np.random.default_rng(3)
    tokens = rng.integers(4, TOY.vocab_size, size=(3, 6))
    tokens[:, 0] = 1
    mask = np.ones(tokens.shape)
    mask[2, 4:] = 0
    return tokens, mask


def gating_for(variant, position=1, depth=1):
    if variant is GatingVariant.NONE:
        return GatingConfig()
    return GatingConfig(variant, (position,), depth)
