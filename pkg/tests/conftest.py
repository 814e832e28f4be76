import numpy as np
import pytest

from evoshift.discretization import build_grid
from evoshift.model import QuadraticRateParams, quadratic_model, time_constant_model


def ones(t):
    return np.ones_like(np.asarray(t, dtype=float))


def zeros(t):
    return np.zeros_like(np.asarray(t, dtype=float))


def sin2pi(t):
    return np.sin(2.0 * np.pi * np.asarray(t, dtype=float))


@pytest.fixture(scope="session")
def grid():
    return build_grid(6.0, 2049)


@pytest.fixture(scope="session")
def coarse_grid():
    return build_grid(6.0, 513)


@pytest.fixture(scope="session")
def ref_params():
    return QuadraticRateParams(r=2.0, g=ones, theta=sin2pi)


@pytest.fixture(scope="session")
def ref_model(ref_params):
    return quadratic_model(ref_params)


@pytest.fixture(scope="session")
def harmonic_model():
    return time_constant_model(lambda x: 1.0 - x ** 2, profile_dx=lambda x: -2.0 * x,
                               profile_dxx=lambda x: -2.0 + 0.0 * x, profile_dxxx=lambda x: 0.0 * x)


@pytest.fixture(scope="session")
def quartic_model():
    return time_constant_model(
        lambda x: 1.0 - x ** 2 - 0.3 * x ** 4,
        profile_dx=lambda x: -2.0 * x - 1.2 * x ** 3,
        profile_dxx=lambda x: -2.0 - 3.6 * x ** 2,
        profile_dxxx=lambda x: -7.2 * x,
    )
