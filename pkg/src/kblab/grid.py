"""Uniform-grid calculus on [0, 1]: quadrature, differentiation, norms.

Everything downstream (spectral solves, flow evaluation, certificates)
funnels through the three primitives defined here, so their orders of
accuracy are load-bearing: composite Simpson quadrature (exact on cubics),
second-order central differences with one-sided closures, and norms built
from both.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .errors import ValidationError


class Grid:
    """Uniform mesh on [0, 1] with an odd number of nodes.

    The node count is kept odd so the Simpson panels tile the whole
    interval; ``spacing`` is ``1/(n_points - 1)``.
    """

    __slots__ = ("n_points", "spacing", "nodes", "_simpson_w")

    def __init__(self, n_points: int):
        if n_points < 3 or n_points % 2 == 0:
            raise ValidationError(
                f"grid.n_points must be odd and >= 3, got {n_points}"
            )
        self.n_points = int(n_points)
        self.spacing = 1.0 / (self.n_points - 1)
        nodes = np.linspace(0.0, 1.0, self.n_points)
        nodes.setflags(write=False)
        self.nodes = nodes
        w = np.full(self.n_points, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        w *= self.spacing / 3.0
        w.setflags(write=False)
        self._simpson_w = w

    # grids compare by node count; mixing fields from unequal grids is an error
    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and other.n_points == self.n_points

    def __hash__(self) -> int:
        return hash(("Grid", self.n_points))

    def __repr__(self) -> str:
        return f"Grid(n_points={self.n_points})"

    # ---- array-level primitives (ScalarField wrappers live below) ----

    def integrate_values(self, values: np.ndarray) -> float:
        return float(self._simpson_w @ values)

    def cumulative_values(self, values: np.ndarray) -> np.ndarray:
        """Running integral from 0 to each node.

        Even nodes get the composite Simpson value of the full panels to
        their left; odd nodes add a single trapezoid on the partial panel.
        """
        h = self.spacing
        panels = (h / 3.0) * (values[0:-2:2] + 4.0 * values[1:-1:2] + values[2::2])
        out = np.empty_like(values)
        out[0] = 0.0
        out[2::2] = np.cumsum(panels)
        out[1::2] = out[0:-1:2] + (h / 2.0) * (values[0:-1:2] + values[1::2])
        return out

    def derivative_values(self, values: np.ndarray) -> np.ndarray:
        h = self.spacing
        out = np.empty_like(values)
        out[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
        out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
        out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * h)
        return out


class ScalarField:
    """Immutable samples of a real function on a :class:`Grid`."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        vals = np.asarray(values, dtype=np.float64)
        if vals.shape != (grid.n_points,):
            raise ValidationError(
                f"field needs {grid.n_points} samples, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValidationError("field values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        self.grid = grid
        self.values = vals

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]):
        return cls(grid, np.asarray(fn(grid.nodes), dtype=np.float64))

    def __repr__(self) -> str:
        return f"ScalarField(n={self.grid.n_points}, sup={np.abs(self.values).max():.3g})"


class FieldNorms(NamedTuple):
    l2: float
    h1: float
    sup: float


def same_grid(a: ScalarField, b: ScalarField) -> Grid:
    if a.grid != b.grid:
        raise ValidationError(
            f"cross-grid operation: {a.grid.n_points} vs {b.grid.n_points} nodes"
        )
    return a.grid


def integrate(f: ScalarField) -> float:
    """Composite Simpson quadrature over [0, 1]."""
    return f.grid.integrate_values(f.values)


def cumulative_integral(f: ScalarField) -> ScalarField:
    """Prefix integral x -> integral of f over [0, x], Simpson-consistent."""
    return ScalarField(f.grid, f.grid.cumulative_values(f.values))


def derivative(f: ScalarField) -> ScalarField:
    """Second-order derivative: central in the interior, one-sided at the ends."""
    return ScalarField(f.grid, f.grid.derivative_values(f.values))


def norms(f: ScalarField) -> FieldNorms:
    """L2, H1 and sup norms; the H1 norm uses the discrete derivative."""
    g = f.grid
    l2_sq = g.integrate_values(f.values**2)
    d = g.derivative_values(f.values)
    h1_sq = l2_sq + g.integrate_values(d**2)
    return FieldNorms(
        l2=float(np.sqrt(max(l2_sq, 0.0))),
        h1=float(np.sqrt(max(h1_sq, 0.0))),
        sup=float(np.abs(f.values).max()),
    )
