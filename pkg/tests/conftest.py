import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("dmx", deadline=None, max_examples=60)
settings.load_profile("dmx")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_with_singular_values(rng, rows, cols, singular_values):
    """``U diag(s) V'`` with Haar-like orthogonal factors."""
    k = len(singular_values)
    U, _ = np.linalg.qr(rng.standard_normal((rows, rows)))
    V, _ = np.linalg.qr(rng.standard_normal((cols, cols)))
    return (U[:, :k] * singular_values) @ V[:, :k].T
