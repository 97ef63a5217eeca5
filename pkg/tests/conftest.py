import numpy as np
import pytest

from pnesdec.fock_space import TwoModeDensityMatrix


def ginibre_state(d: int, rng: np.random.Generator) -> TwoModeDensityMatrix:
    """Random full-rank two-mode density matrix ``G G^dag / tr``."""
    n = d * d
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    rho = g @ g.conj().T
    return TwoModeDensityMatrix(d, rho / np.trace(rho).real)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def random_rho(rng):
    return ginibre_state(5, rng)
