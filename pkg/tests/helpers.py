"""Deterministic random-state factories shared across the test modules."""

import numpy as np

from kblab.cole_hopf import State, StateTag, cole
from kblab.grid import ScalarField


def smooth_burgers(grid, rng, amplitude=1.0, n_modes=5):
    """Random smooth velocity profile scaled to the requested sup norm."""
    x = grid.nodes
    vals = np.zeros(grid.n_points)
    for k in range(1, n_modes + 1):
        vals += rng.normal() / k**2 * np.sin(k * np.pi * x)
        vals += rng.normal() / (k + 1) ** 2 * np.cos(k * np.pi * x)
    peak = np.abs(vals).max()
    if peak > 0:
        vals *= amplitude / peak
    return ScalarField(grid, vals)


def positive_p1(grid, rng, rough=0.25, n_modes=4):
    """Random unit-mass positive state: 1 + cosine series, clipped away
    from zero. Cosine roughness keeps the ends Neumann-compatible."""
    x = grid.nodes
    vals = np.ones(grid.n_points)
    for k in range(1, n_modes + 1):
        vals += rng.normal(0.0, rough / k**2) * np.cos(k * np.pi * x)
    vals = np.clip(vals, 0.1, None)
    vals /= grid.integrate_values(vals)
    return State(StateTag.P_ONE, ScalarField(grid, vals))


def spanned_p1(basis, rng, rough=0.08, n_modes=4):
    """Unit-mass positive state inside the resolved eigenspan.

    Flow operations reject states with an unresolved tail; building from
    the eigenmodes themselves keeps that guard quiet at any mode count.
    """
    vals = basis.modes[0].copy()
    top = min(n_modes, basis.count - 1)
    for k in range(1, top + 1):
        vals += rng.normal(0.0, rough) / k**2 * basis.modes[k]
    vals /= basis.grid.integrate_values(vals)
    return State(StateTag.P_ONE, ScalarField(basis.grid, vals))


def spanned_burgers(basis, rng, rough=0.08, n_modes=4):
    """Velocity whose hopf image lies in the resolved eigenspan exactly."""
    return cole(spanned_p1(basis, rng, rough, n_modes))
