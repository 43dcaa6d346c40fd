import numpy as np
import pytest

from contextlab.engine import QuantumState


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def random_pure_state(dim: int, rng: np.random.Generator) -> QuantumState:
    vec = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return QuantumState.pure(vec, normalize=True)
