import numpy as np
import pytest


class ZeroRng:
    """Test double: every draw returns zeros (degenerate 'forced' randomness)."""

    seed = 0
    stream_id = 0
    counter = 0

    def normal(self, shape=()):
        return np.zeros(shape)

    def uniform(self, lo=0.0, hi=1.0, shape=()):
        return np.zeros(shape)

    def integers(self, n, shape=()):
        return np.zeros(shape, dtype=np.int64)

    def choice_prob(self, p):
        return 0

    def permutation(self, n):
        return np.arange(n)

    def spawn(self, label):
        return self


@pytest.fixture
def zero_rng():
    return ZeroRng()
