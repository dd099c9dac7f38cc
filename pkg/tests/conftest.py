import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_target(rng, n, density=0.3):
    while True:
        t = (rng.random((n, n)) < density).astype(np.uint8)
        np.fill_diagonal(t, 0)
        if t.any():
            return t
