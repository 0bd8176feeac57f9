import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from freecontrol.ncpoly import NCPolynomial
from freecontrol.randmat import MatrixTuple

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"


def random_poly(rng, d, degree, terms=6, real=True):
    """Random polynomial with up to ``terms`` monomials of length <= degree."""
    out = {}
    for _ in range(terms):
        k = int(rng.integers(0, degree + 1))
        w = tuple(int(i) for i in rng.integers(1, d + 1, size=k))
        c = rng.normal() if real else complex(rng.normal(), rng.normal())
        out[w] = out.get(w, 0) + c
    return NCPolynomial(out, d)


def self_adjoint(p):
    return (p + p.adjoint()) * 0.5


def random_hermitian(rng, d, n, scale=1.0):
    z = rng.normal(size=(d, n, n)) + 1j * rng.normal(size=(d, n, n))
    return scale * (z + np.conj(np.swapaxes(z, -1, -2))) / (2 * np.sqrt(n))


def random_tuple(rng, d, n, scale=1.0):
    return MatrixTuple(random_hermitian(rng, d, n, scale))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def bias_constants():
    return json.loads((FIXTURES / "bias_constants.json").read_text())
