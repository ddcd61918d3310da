import numpy as np
import pytest
from hypothesis import settings

from stacknet.synthetic import SyntheticPoolSpec, generate_synthetic

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def binary_pool(n=2000, pi=(0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.6, 0.7, 0.8, 0.9), seed=0, **kw):
    return generate_synthetic(SyntheticPoolSpec(n, len(pi), 2, tuple(pi), seed=seed, **kw))


@pytest.fixture
def pool():
    return binary_pool()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
