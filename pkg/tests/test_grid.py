"""Quadrature, differentiation, and norm layer."""

import math

import numpy as np
import pytest

from kblab.errors import ValidationError
from kblab.grid import (Grid, ScalarField, cumulative_integral, derivative,
                        integrate, norms, same_grid)


@pytest.fixture(scope="module")
def grid():
    return Grid(2001)


def field(grid, fn):
    return ScalarField.from_callable(grid, fn)


def test_grid_shape():
    g = Grid(11)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 1.0
    assert g.spacing == pytest.approx(0.1)
    assert np.all(np.diff(g.nodes) > 0)


def test_even_point_count_rejected():
    with pytest.raises(ValidationError):
        Grid(10)
    with pytest.raises(ValidationError):
        Grid(1)


def test_field_validation(grid):
    with pytest.raises(ValidationError):
        ScalarField(grid, np.ones(7))
    bad = np.ones(grid.n_points)
    bad[3] = np.nan
    with pytest.raises(ValidationError):
        ScalarField(grid, bad)


def test_cross_grid_rejected(grid):
    other = Grid(201)
    with pytest.raises(ValidationError):
        same_grid(field(grid, np.sin), field(other, np.sin))


def test_integrate_constant(grid):
    assert integrate(field(grid, lambda x: np.ones_like(x))) == pytest.approx(
        1.0, abs=1e-14)


def test_integrate_square(grid):
    # Simpson is exact on cubics
    assert integrate(field(grid, lambda x: x**2)) == pytest.approx(
        1.0 / 3.0, abs=1e-12)


def test_integrate_sine(grid):
    got = integrate(field(grid, lambda x: np.sin(np.pi * x)))
    assert got == pytest.approx(2.0 / np.pi, abs=1e-10)


def test_integrate_linearity(grid):
    rng = np.random.default_rng(0)
    f = rng.normal(size=grid.n_points)
    g = rng.normal(size=grid.n_points)
    a, b = 2.7, -1.3
    lhs = grid.integrate_values(a * f + b * g)
    rhs = a * grid.integrate_values(f) + b * grid.integrate_values(g)
    assert abs(lhs - rhs) <= 1e-14 * max(1.0, abs(rhs))


def test_simpson_order_on_exp():
    # halving h must shrink the e^x error by about 2^4
    errs = []
    for n in (251, 501, 1001):
        g = Grid(n)
        exact = math.e - 1.0
        errs.append(abs(integrate(field(g, np.exp)) - exact))
    order = np.log2(errs[0] / errs[1])
    assert order >= 3.8
    assert np.log2(errs[1] / errs[2]) >= 3.8


def test_derivative_constant(grid):
    d = derivative(field(grid, lambda x: np.full_like(x, 4.2)))
    # interior central differences cancel exactly; the one-sided end
    # stencils leave one rounding of c/(2h)
    assert np.abs(d.values[1:-1]).max() == 0.0
    assert np.abs(d.values).max() <= 1e-12


def test_derivative_affine(grid):
    d = derivative(field(grid, lambda x: x))
    assert np.abs(d.values - 1.0).max() <= 1e-12


def test_derivative_cosine(grid):
    d = derivative(field(grid, lambda x: np.cos(np.pi * x)))
    exact = -np.pi * np.sin(np.pi * grid.nodes)
    assert np.abs(d.values - exact).max() <= 1e-5


def test_cumulative_integral(grid):
    # prefix integral of cos(pi x) is sin(pi x)/pi
    c = cumulative_integral(field(grid, lambda x: np.cos(np.pi * x)))
    exact = np.sin(np.pi * grid.nodes) / np.pi
    assert c.values[0] == 0.0
    assert np.abs(c.values - exact).max() <= 1e-9


def test_norms_constant(grid):
    n = norms(field(grid, lambda x: np.ones_like(x)))
    assert n.l2 == pytest.approx(1.0, abs=1e-12)
    assert n.h1 == pytest.approx(1.0, abs=1e-12)
    assert n.sup == 1.0


def test_norms_cosine_mode(grid):
    f = field(grid, lambda x: math.sqrt(2.0) * np.cos(np.pi * x))
    n = norms(f)
    assert n.l2 == pytest.approx(1.0, abs=1e-10)
    assert n.h1 == pytest.approx(math.sqrt(1.0 + np.pi**2), abs=1e-4)
    assert n.sup == pytest.approx(math.sqrt(2.0), abs=1e-15)


def test_l2_below_h1_and_sobolev(grid):
    # |f|_sup <= sqrt(2) |f|_H1 up to discretization error
    rng = np.random.default_rng(3)
    for _ in range(10):
        vals = np.zeros(grid.n_points)
        for k in range(1, 6):
            vals += rng.normal() / k**2 * np.cos(k * np.pi * grid.nodes)
            vals += rng.normal() / k**2 * np.sin(k * np.pi * grid.nodes)
        n = norms(ScalarField(grid, vals))
        assert n.l2 <= n.h1 * (1 + 1e-12)
        assert n.sup <= math.sqrt(2.0) * n.h1 + 50.0 * grid.spacing**2
