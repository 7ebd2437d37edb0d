"""The three conjugated evolutions and their steady states.

* ``heat_flow``: linear heat semigroup of -d^2/dx^2 + V with Neumann ends,
  evaluated spectrally on positive states.
* ``nonlinear_heat_flow``: the mean-normalized flow on unit-mass states;
  it equals ``heat_flow`` divided by ``heat_mean``.
* ``burgers_flow``: the forced Burgers evolution, conjugated to the heat
  flow through the Cole-Hopf pair.
* ``nonlinear_heat_general``: the mean-normalized flow started from an
  arbitrary positive state; masses above 1 blow up in finite time, and the
  report brackets that time via the closed-form mean reduction.
* ``burgers_fd_oracle``: an independent finite-difference time stepper for
  cross-checking the spectral route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .cole_hopf import State, StateTag, cole, hopf
from .errors import ResolutionError, StabilityError, ValidationError
from .grid import Grid, ScalarField, derivative, integrate
from .spectral import Potential, SpectralBasis

_TAIL_REL_TOL = 1e-6
_BLOWUP_DETECT = 1e-10  # declared when (g-1)/g reaches 1 - this
_TSTAR_TOL = 1e-8
_GROWTH_CAP = 1e6
_MEAN_EXACT_ONE = 1e-12


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    means: np.ndarray


@dataclass
class BlowupReport:
    blew_up: bool
    t_star: float
    g_trace: np.ndarray  # rows (t, mean)


def _checked_coeffs(basis: SpectralBasis, field: ScalarField) -> np.ndarray:
    """Expansion coefficients, guarded by a tail-energy resolution check."""
    if field.grid != basis.grid:
        raise ValidationError("state lives on a different grid than the basis")
    c = basis.coeffs(field.values)
    recon = basis.reconstruct(c)
    g = basis.grid
    tail = math.sqrt(max(g.integrate_values((field.values - recon) ** 2), 0.0))
    scale = math.sqrt(max(g.integrate_values(field.values**2), 0.0))
    if tail > _TAIL_REL_TOL * scale:
        raise ResolutionError(
            f"state not resolved by {basis.count} modes "
            f"(tail energy {tail:.3g} vs {_TAIL_REL_TOL:g} * {scale:.3g})"
        )
    return c


def _require_positive_state(v0) -> State:
    if not isinstance(v0, State) or v0.tag not in (StateTag.P_PLUS, StateTag.P_ONE):
        raise ValidationError("flow requires a positive State (P_PLUS or P_ONE)")
    return v0


def heat_flow(basis: SpectralBasis, v0: State, t: float) -> ScalarField:
    """Spectral evaluation of the heat semigroup at time t >= 0."""
    _require_positive_state(v0)
    if t < 0.0:
        raise ValidationError(f"time must be >= 0, got {t}")
    c = _checked_coeffs(basis, v0.field)
    decayed = c * np.exp(-basis.mu * t)
    return ScalarField(basis.grid, basis.reconstruct(decayed))


def heat_mean(basis: SpectralBasis, v0: State, t: float) -> float:
    """Mass of the heat flow at time t (no field reconstruction)."""
    _require_positive_state(v0)
    if t < 0.0:
        raise ValidationError(f"time must be >= 0, got {t}")
    c = _checked_coeffs(basis, v0.field)
    return float(np.sum(c * np.exp(-basis.mu * t) * basis.one_coeffs))


def nonlinear_heat_flow(basis: SpectralBasis, v0: State, t: float) -> State:
    """Mean-normalized heat flow on unit-mass states; global in time."""
    if not isinstance(v0, State) or v0.tag is not StateTag.P_ONE:
        raise ValidationError("nonlinear_heat_flow requires a P_ONE state")
    c = _checked_coeffs(basis, v0.field)
    decay = np.exp(-(basis.mu - basis.mu[0]) * t)
    mean = float(np.sum(c * decay * basis.one_coeffs))
    if mean <= 0.0:
        raise ResolutionError(
            "evolved mass is non-positive; this cannot happen in the continuum "
            "and signals an unresolved state"
        )
    vals = basis.reconstruct(c * decay) / mean
    return State(StateTag.P_ONE, ScalarField(basis.grid, vals))


class _MeanReduction:
    """Closed-form mean dynamics of the mean-normalized flow.

    With z the unit-mass solution and w(s) the integral of V*z(s), the mean
    g of the general flow satisfies (g-1)/g = ((g0-1)/g0) * exp(W(t)) with
    W the time integral of w. Everything below evaluates w spectrally and
    W by adaptive Simpson quadrature, so blow-up times come from root
    finding on a monotone scalar function.
    """

    def __init__(self, basis: SpectralBasis, c: np.ndarray, g0: float):
        self.basis = basis
        self.c = c
        self.g0 = g0
        self.gaps = basis.mu - basis.mu[0]

    def w(self, s: float) -> float:
        decay = self.c * np.exp(-self.gaps * s)
        num = float(np.sum(decay * self.basis.v_int))
        den = float(np.sum(decay * self.basis.one_coeffs))
        return num / den

    def W(self, t: float, tol: float = 1e-11) -> float:
        if t <= 0.0:
            return 0.0
        return _adaptive_simpson(self.w, 0.0, t, tol)

    def envelope(self, t: float) -> float:
        # (g-1)/g at time t
        return (self.g0 - 1.0) / self.g0 * math.exp(self.W(t))

    def mean(self, t: float) -> float:
        return 1.0 / (1.0 - self.envelope(t))


def _adaptive_simpson(f, a: float, b: float, tol: float) -> float:
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50)

def _simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = f(0.5 * (a + m)), f(0.5 * (m + b))
    left = (m - a) / 6.0 * (fa + 4.0 * lm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * rm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    half = 0.5 * tol
    return (_simpson_rec(f, a, m, fa, lm, fm, left, half, depth - 1)
            + _simpson_rec(f, m, b, fm, rm, fb, right, half, depth - 1))


def nonlinear_heat_general(
    basis: SpectralBasis,
    v0: State,
    horizon: float,
    t_samples: Optional[np.ndarray] = None,
):
    """Mean-normalized flow from an arbitrary positive state.

    Returns (Trajectory, BlowupReport). The trajectory is sampled on
    ``t_samples`` when given, otherwise on a uniform mesh that stops at the
    horizon or just short of the blow-up time. Blow-up occurs exactly when
    the initial mass exceeds 1, and then simultaneously at every node.
    """
    _require_positive_state(v0)
    if horizon <= 0.0:
        raise ValidationError("horizon must be positive")
    g0 = integrate(v0.field)
    z0 = State(StateTag.P_ONE, ScalarField(basis.grid, v0.values / g0))
    c = _checked_coeffs(basis, z0.field)
    red = _MeanReduction(basis, c, g0)

    blew_up = False
    t_star = horizon
    if g0 > 1.0 + _MEAN_EXACT_ONE:
        target = math.log(g0 / (g0 - 1.0))
        detect = target + math.log1p(-_BLOWUP_DETECT)
        if red.W(horizon) >= detect:
            blew_up = True
            hi = horizon
            for _ in range(200):
                if red.W(hi) >= target:
                    break
                hi *= 1.25
            lo = 0.0
            while hi - lo > _TSTAR_TOL:
                mid = 0.5 * (lo + hi)
                if red.W(mid) >= target:
                    hi = mid
                else:
                    lo = mid
            t_star = 0.5 * (lo + hi)

    if t_samples is None:
        t_end = horizon
        if blew_up:
            # stop the sampled trajectory where the mean is still finite
            stop = target + math.log1p(-1e-6)
            lo, hi = 0.0, t_star
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if red.W(mid) >= stop:
                    hi = mid
                else:
                    lo = mid
            t_end = min(horizon, lo)
        t_samples = np.linspace(0.0, t_end, 65)
    else:
        t_samples = np.asarray(t_samples, dtype=np.float64)

    gaps = basis.mu - basis.mu[0]
    states, means = [], []
    for t in t_samples:
        if abs(g0 - 1.0) <= _MEAN_EXACT_ONE:
            g = 1.0
        else:
            env = red.envelope(float(t))
            if env >= 1.0:
                raise ValidationError(
                    f"sample time {t:g} is at or beyond the blow-up time {t_star:g}"
                )
            g = 1.0 / (1.0 - env)
        decay = c * np.exp(-gaps * float(t))
        zmean = float(np.sum(decay * basis.one_coeffs))
        zvals = basis.reconstruct(decay) / zmean
        states.append(ScalarField(basis.grid, g * zvals))
        means.append(g)
    means = np.asarray(means)
    traj = Trajectory(times=t_samples, states=states, means=means)
    trace = np.column_stack([t_samples, means])
    return traj, BlowupReport(blew_up=blew_up, t_star=t_star, g_trace=trace)


def burgers_flow(basis: SpectralBasis, u0: ScalarField, t: float) -> ScalarField:
    """Forced Burgers evolution via Cole-Hopf conjugation with the heat flow."""
    v0 = hopf(u0)
    v_t = heat_flow(basis, v0, t)
    return cole(v_t)


def burgers_fd_oracle(
    potential: Potential, u0: ScalarField, t: float, dt: float
) -> ScalarField:
    """Independent Burgers solver: Crank-Nicolson diffusion, Heun advection.

    Dirichlet u=0 endpoints. Serves as a cross-check oracle for the
    spectral route; accuracy is second order in both dt and the grid
    spacing.
    """
    if potential.grid != u0.grid:
        raise ValidationError("potential and state live on different grids")
    if t < 0.0:
        raise ValidationError(f"time must be >= 0, got {t}")
    if dt <= 0.0:
        raise ValidationError("dt must be positive")
    grid = u0.grid
    force = 2.0 * grid.derivative_values(potential.field.values)
    u = np.array(u0.values, dtype=np.float64)
    u[0] = u[-1] = 0.0
    nsteps = int(math.floor(t / dt + 1e-12))
    remainder = t - nsteps * dt
    if nsteps > 0:
        u, ok = kernels.fd_burgers_run(u, force, grid.spacing, dt, nsteps,
                                       _GROWTH_CAP)
        if not ok:
            raise StabilityError(
                f"time stepper exceeded the growth cap {_GROWTH_CAP:g}; "
                f"reduce dt"
            )
    if remainder > 1e-12 * max(dt, 1.0):
        u, ok = kernels.fd_burgers_run(u, force, grid.spacing, remainder, 1,
                                       _GROWTH_CAP)
        if not ok:
            raise StabilityError("time stepper unstable on the final partial step")
    return ScalarField(grid, u)


def fd_burgers_trajectory(
    potential: Potential, u0: ScalarField, times: np.ndarray, dt: float
) -> list:
    """FD oracle sampled along an increasing time mesh (single sweep)."""
    times = np.asarray(times, dtype=np.float64)
    if np.any(np.diff(times) < 0.0) or (len(times) and times[0] < 0.0):
        raise ValidationError("time mesh must be non-negative and increasing")
    grid = u0.grid
    force = 2.0 * grid.derivative_values(potential.field.values)
    u = np.array(u0.values, dtype=np.float64)
    u[0] = u[-1] = 0.0
    out = []
    reached = 0.0
    for t in times:
        span = float(t) - reached
        nsteps = int(math.floor(span / dt + 1e-12))
        if nsteps > 0:
            u, ok = kernels.fd_burgers_run(u, force, grid.spacing, dt, nsteps,
                                           _GROWTH_CAP)
            if not ok:
                raise StabilityError("time stepper exceeded the growth cap")
        rem = span - nsteps * dt
        if rem > 1e-12 * max(dt, 1.0):
            u, ok = kernels.fd_burgers_run(u, force, grid.spacing, rem, 1,
                                           _GROWTH_CAP)
            if not ok:
                raise StabilityError("time stepper exceeded the growth cap")
        reached = float(t)
        out.append(ScalarField(grid, u))
    return out


def sink_heat(basis: SpectralBasis) -> State:
    """Unit-mass steady state of the mean-normalized flow: e0 / integral(e0)."""
    vals = basis.modes[0] / basis.i0
    return State(StateTag.P_ONE, ScalarField(basis.grid, vals))


def sink_burgers(basis: SpectralBasis) -> ScalarField:
    """Steady state of the Burgers flow: -2 e0'/e0."""
    return cole(ScalarField(basis.grid, basis.modes[0]))
