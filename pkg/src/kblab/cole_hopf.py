"""Cole-Hopf transform pair linking Burgers states to positive densities.

``hopf`` sends a velocity profile u to the normalized exponential of its
negative half-prefix-integral; ``cole`` sends a positive profile v to
-2 v'/v. They are mutually inverse (hopf . cole is exact renormalization,
cole . hopf recovers u), and cole is invariant under positive scaling of
its argument.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import RangeError, ValidationError
from .grid import ScalarField, cumulative_integral, derivative, integrate

_EXP_GUARD = 700.0  # |log| beyond this overflows double precision
_UNIT_MASS_TOL = 1e-8


class StateTag(Enum):
    L2 = "L2_STATE"
    P_PLUS = "P_PLUS"
    P_ONE = "P_ONE"


class State:
    """A ScalarField tagged with the class it is asserted to live in.

    P_PLUS requires strictly positive samples; P_ONE additionally requires
    unit mass (within quadrature tolerance).
    """

    __slots__ = ("tag", "field")

    def __init__(self, tag: StateTag, field: ScalarField):
        if tag in (StateTag.P_PLUS, StateTag.P_ONE):
            vmin = float(field.values.min())
            if vmin <= 0.0:
                raise ValidationError(
                    f"{tag.value} state must be strictly positive (min={vmin:g})"
                )
        if tag is StateTag.P_ONE:
            mass = integrate(field)
            if abs(mass - 1.0) > _UNIT_MASS_TOL:
                raise ValidationError(
                    f"P_ONE state must have unit mass, got {mass!r}"
                )
        self.tag = tag
        self.field = field

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def grid(self):
        return self.field.grid

    def __repr__(self) -> str:
        return f"State({self.tag.value}, n={self.grid.n_points})"


def hopf(u: ScalarField) -> State:
    """Map a velocity profile to its unit-mass positive density.

    v = exp(-(1/2) * prefix_integral(u)), renormalized to integrate to 1.
    """
    exponent = -0.5 * cumulative_integral(u).values
    peak = float(np.abs(exponent).max())
    if peak > _EXP_GUARD:
        raise RangeError(
            f"hopf exponent reaches {peak:.1f}; rescale the input "
            f"(overflow beyond {_EXP_GUARD:g})"
        )
    w = np.exp(exponent)
    field = ScalarField(u.grid, w)
    return State(StateTag.P_ONE, ScalarField(u.grid, w / integrate(field)))


def cole(v) -> ScalarField:
    """Map a strictly positive profile to the velocity -2 v'/v.

    Accepts a State (P_PLUS or P_ONE) or a bare positive ScalarField; the
    result is invariant under positive scaling of v.
    """
    field = v.field if isinstance(v, State) else v
    if not isinstance(field, ScalarField):
        raise ValidationError(f"cole expects a State or ScalarField, got {type(v)}")
    if float(field.values.min()) <= 0.0:
        raise ValidationError("cole requires a strictly positive profile")
    dv = derivative(field)
    return ScalarField(field.grid, -2.0 * dv.values / field.values)
