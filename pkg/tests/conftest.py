import os

import numpy as np
import pytest

# Simulated fixed-b critical values are cached on disk; keep the cache with the
# checkout so repeated runs reuse it.
os.environ.setdefault(
    "HARCONTAM_CACHE", os.path.join(os.path.dirname(__file__), ".cache")
)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def ar1(n, rho, rng, sigma=1.0, reps=None):
    """Stationary Gaussian AR(1) draws, shape (n,) or (reps, n)."""
    shape = (n,) if reps is None else (reps, n)
    e = rng.standard_normal(shape) * sigma
    x = np.empty(shape)
    x[..., 0] = e[..., 0] / np.sqrt(1 - rho**2)
    for t in range(1, n):
        x[..., t] = rho * x[..., t - 1] + e[..., t]
    return x
