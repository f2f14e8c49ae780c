import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from funcreg.funcspace import FunctionalSample, fourier_values, make_uniform_grid

settings.register_profile(
    "default", max_examples=50, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_sample(rng, n, J=4, M=51, extra=2, scale=1.0):
    """Curves with random coordinates on the first ``J + extra`` Fourier functions."""
    grid = make_uniform_grid(M)
    coef = rng.uniform(-1, 1, size=(n, J + extra)) * scale
    coef[:, J:] *= 0.3
    return FunctionalSample(grid, coef @ fourier_values(J + extra, grid.points))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def grid101():
    return make_uniform_grid(101)
