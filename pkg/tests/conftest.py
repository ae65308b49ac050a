import numpy as np
import pytest

from rfphi4.model import BoundaryField
from rfphi4.potential import select_parameters


@pytest.fixture(scope="session")
def cert100():
    """Certificate at the reference point (eps0=0.1, m*=100, d=3)."""
    return select_parameters(0.1, 100.0, 3)


@pytest.fixture(scope="session")
def p_chain(cert100):
    """Certified parameters rendered on a 1D chain (for quadrature tests)."""
    return cert100.params().with_(d=1)


@pytest.fixture(scope="session")
def bc_plus(p_chain):
    return BoundaryField.constant(p_chain.m_star)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
