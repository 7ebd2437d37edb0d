import numpy as np
import pytest

from kblab.grid import Grid, ScalarField
from kblab.spectral import Potential, solve_eigen

PI2 = np.pi * np.pi


def make_basis(n_points, count, potential_fn):
    grid = Grid(n_points)
    pot = Potential(ScalarField(grid, potential_fn(grid.nodes)))
    return solve_eigen(pot, count)


@pytest.fixture(scope="session")
def basis_const():
    """V = pi^2 on the fine grid; closed-form eigenpairs."""
    return make_basis(2001, 12, lambda x: np.full_like(x, PI2))


@pytest.fixture(scope="session")
def basis_linear():
    """V = 10 + 5x on the fine grid, 30 modes; the generic workhorse."""
    return make_basis(2001, 30, lambda x: 10.0 + 5.0 * x)


@pytest.fixture(scope="session")
def basis_small():
    """V = 10 + 5x on a coarse grid for cheap property sweeps."""
    return make_basis(201, 20, lambda x: 10.0 + 5.0 * x)


@pytest.fixture(scope="session")
def basis_const_small():
    return make_basis(201, 20, lambda x: np.full_like(x, PI2))
