import numpy as np
import pytest

from nl4s.ground_state import ground_state
from nl4s.spectral import GridSpec, PhysicalField


def random_field(grid: GridSpec, rng: np.random.Generator) -> PhysicalField:
    """White complex noise on every lattice mode."""
    v = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    return PhysicalField(grid, v)


def smooth_random_field(grid: GridSpec, rng: np.random.Generator, decay: float = 0.3) -> PhysicalField:
    """Random spectrum with Gaussian decay, so the field is smooth and resolved."""
    c = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    c *= np.exp(-decay * grid.xi2)
    return PhysicalField(grid, grid.ifft(c))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid1d():
    return GridSpec(1, 256, 10.0)


@pytest.fixture(scope="session")
def grid2d():
    return GridSpec(2, 32, 6.0)


@pytest.fixture(scope="session")
def gs1024():
    return ground_state(GridSpec(1, 1024, 20.0))


@pytest.fixture(scope="session")
def gs256():
    return ground_state(GridSpec(1, 256, 20.0))
