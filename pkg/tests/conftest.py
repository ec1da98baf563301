import math

import numpy as np
import pytest

from musolve.assembly import DomainMesh, StiffnessFamily, assemble_operator
from musolve.spectral import solve_spectrum

PI = math.pi


@pytest.fixture(scope="session")
def classical_op():
    """delta_1 on (0, pi), n = 128."""
    return assemble_operator(DomainMesh(0.0, PI, 128), [(1.0, 1.0)], 0.5)


@pytest.fixture(scope="session")
def classical_spectrum(classical_op):
    return solve_spectrum(classical_op, 10)


@pytest.fixture(scope="session")
def wrong_sign_op():
    """delta_1 - 0.1 delta_0.25 on (0, pi), n = 128, s_bar = 0.5."""
    return assemble_operator(DomainMesh(0.0, PI, 128), [(1.0, 1.0), (0.25, -0.1)], 0.5)


@pytest.fixture(scope="session")
def family64():
    return StiffnessFamily(DomainMesh(0.0, PI, 64))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
