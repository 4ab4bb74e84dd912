import numpy as np
import pytest

from permlrcs import Dims, generate_synthetic


@pytest.fixture
def tiny():
    """A small but nondegenerate permuted instance with known truth."""
    dims = Dims(n=12, q=8, m=10, r=2, s=5)
    instance, truth = generate_synthetic(dims, seed=42)
    return dims, instance, truth


@pytest.fixture
def rng():
    return np.random.default_rng(20240814)
