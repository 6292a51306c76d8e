import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_orthogonal(d, rng):
    """Orthogonal matrix built from random Householder reflections."""
    m = np.eye(d)
    for _ in range(max(2, d)):
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        m = m - 2.0 * np.outer(v, v @ m)
    return m
