import numpy as np
import pytest

from ggmc import MassMatrix, SamplerConfig, make_gaussian


def central_difference(f, theta):
    """Central-difference gradient with step 1e-6 * (1 + |theta_i|)."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        step = 1e-6 * (1.0 + abs(theta[i]))
        up, down = theta.copy(), theta.copy()
        up[i] += step
        down[i] -= step
        g[i] = (f(up) - f(down)) / (up[i] - down[i])
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def std_normal():
    return make_gaussian([0.0], [1.0])


@pytest.fixture
def gauss2d():
    return make_gaussian([0.0, 0.0], [1.0, 4.0])


def random_config(rng, d, friction=None):
    h = rng.uniform(0.01, 1.0)
    gamma = rng.uniform(0.01, 10.0) if friction is None else friction
    temp = float(rng.choice([0.5, 1.0, 2.0]))
    mass = MassMatrix(rng.uniform(0.3, 3.0, size=d))
    return SamplerConfig(h, gamma, temp, mass)
