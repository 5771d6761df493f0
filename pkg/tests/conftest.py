import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from beamfcs import beam

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

Q = float(np.sqrt(10.0))


def cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def rand_psd(rng, n, rank=None, norm=1.0):
    X = cplx(rng, n, rank or n)
    A = X @ X.conj().T
    return A * (norm / np.linalg.norm(A, 2))


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture
def plane():
    """Bose plane wave with q = sqrt(10) clicks per unit window."""
    return beam.plane_wave(2 * np.pi * Q, 10.0)
