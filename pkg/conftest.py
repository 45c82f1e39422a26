import os
import sys

import numpy as np
import pytest

# Add src to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.scalar_harmonics import set_workers
from src.sphere_geom import gauss_legendre_rule


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long numerical runs, deselect with -m 'not slow'")


@pytest.fixture(autouse=True)
def single_worker():
    set_workers(1)
    yield
    set_workers(1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def gl3():
    return gauss_legendre_rule(3)


@pytest.fixture(scope="session")
def gl4():
    return gauss_legendre_rule(4)


@pytest.fixture(scope="session")
def gl5():
    return gauss_legendre_rule(5)


def random_unit_points(rng, n):
    pts = rng.standard_normal((n, 3))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)
