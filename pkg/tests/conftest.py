import numpy as np
import pytest

from tspec.core import TransmissionProblem


def make(p1, p2, a0=1, a1=0, b0=1, b1=0, g0=0, d0=0, g1=0, d1=0, **kw):
    return TransmissionProblem(p1, p2, a0, a1, b0, b1, g0, d0, g1, d1, **kw)


@pytest.fixture
def decoupled():
    """p = (1, 1), Dirichlet ends, no interface coupling."""
    return make(1, 1)


@pytest.fixture
def opposite():
    """p = (-1, 1), Dirichlet ends, u'(0-) = u(0+), u'(0+) = -u(0-)."""
    return make(-1, 1, d0=1, g1=-1)


@pytest.fixture
def self_adjoint():
    """p = (1, 1) with the interface term p1 delta0 + p2 gamma1 = 0."""
    return make(1, 1, d0=1, g1=-1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
