"""Shared fixtures: a generic linear test plant and the cached reach battery."""

from dataclasses import dataclass

import numpy as np
import pytest

from ocsim.experiments import regression_suite
from ocsim.plants import Plant


@dataclass(frozen=True, eq=False)
class LinearPlant(Plant):
    """Arbitrary 2-state/1-control linear dynamics for solver oracles."""

    a_mat: np.ndarray = None
    b_mat: np.ndarray = None
    dt: float = 0.01
    control_bounds: tuple | None = None

    name = "linear-test"
    state_dim = 2
    control_dim = 1
    position_slice = slice(0, 1)
    velocity_slice = slice(1, 2)

    def step_deterministic(self, x, u):
        return self.a_mat @ x + self.b_mat @ u


def random_linear_plant(rng, spectral_radius=0.95, control_bounds=None):
    """A random stable-ish 2x1 linear plant."""
    a = rng.normal(size=(2, 2))
    a *= spectral_radius / max(np.abs(np.linalg.eigvals(a)).max(), 1e-9)
    b = rng.normal(size=(2, 1))
    return LinearPlant(a_mat=a, b_mat=b, control_bounds=control_bounds)


@pytest.fixture(scope="session")
def linear_plant_factory():
    return random_linear_plant


@pytest.fixture(scope="session")
def suite_records():
    """The regression suite, run once per test session."""
    return regression_suite()
