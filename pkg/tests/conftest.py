"""Shared fixtures: grids and kernels are expensive, so build once."""

import numpy as np
import pytest

from entlab.measures import build_gamma_grid, potential_field
from entlab.ou import build_ou_kernel


@pytest.fixture(scope="session")
def grid1d():
    """The default 1D production grid."""
    return build_gamma_grid(1, 6.0, 301)


@pytest.fixture(scope="session")
def grid1d_small():
    """Coarser 1D grid for cheap solver tests."""
    return build_gamma_grid(1, 6.0, 61)


@pytest.fixture(scope="session")
def grid2d():
    return build_gamma_grid(2, 5.0, 41)


@pytest.fixture(scope="session")
def kernel03(grid1d):
    return build_ou_kernel(grid1d, 0.3)


@pytest.fixture(scope="session")
def kernel03_small(grid1d_small):
    return build_ou_kernel(grid1d_small, 0.3)


@pytest.fixture(scope="session")
def zero_potential(grid1d):
    return potential_field(grid1d, np.zeros(grid1d.size))


@pytest.fixture(scope="session")
def ball_indicator(grid1d):
    """W = indicator of [-1, 1]: the compact-support target."""
    r = np.abs(grid1d.nodes[:, 0])
    return potential_field(grid1d, np.where(r <= 1.0, 0.0, np.inf))
