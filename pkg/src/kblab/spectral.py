"""Neumann spectral solver for A = -d^2/dx^2 + V on [0, 1].

The operator is discretized with the standard 3-point Laplacian; the
Neumann closure mirrors the first interior neighbor through the boundary
(ghost node), and the resulting boundary asymmetry is removed by a sqrt(2)
diagonal similarity so a symmetric tridiagonal eigensolver applies. The
discrete eigenvectors of a constant potential are exact cosine samples,
which pins the expected accuracy of everything downstream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import DiscretizationError, ResolutionError, ValidationError
from .grid import Grid, ScalarField

_SIGN_TIE_TOL = 1e-12


class Potential:
    """Strictly positive multiplicative potential sampled on a grid."""

    __slots__ = ("field", "min_value", "max_value")

    def __init__(self, field: ScalarField):
        vmin = float(field.values.min())
        if vmin <= 0.0:
            raise ValidationError(
                f"potential must be strictly positive everywhere (min={vmin:g})"
            )
        self.field = field
        self.min_value = vmin
        self.max_value = float(field.values.max())

    @property
    def grid(self) -> Grid:
        return self.field.grid


@dataclass(frozen=True)
class TridiagonalOperator:
    """Symmetric tridiagonal matrix in (diagonal, off-diagonal) band form."""

    diag: np.ndarray
    off: np.ndarray

    def apply(self, vec: np.ndarray) -> np.ndarray:
        out = self.diag * vec
        out[:-1] += self.off * vec[1:]
        out[1:] += self.off * vec[:-1]
        return out


def assemble_operator(potential: Potential, grid: Grid) -> TridiagonalOperator:
    """Discrete -d^2/dx^2 + V with Neumann ends, symmetrized.

    The mirrored ghost node gives boundary rows (2/h^2 + V, -2/h^2); the
    sqrt(2) similarity that restores symmetry scales those off-diagonal
    couplings to -sqrt(2)/h^2 while leaving every diagonal entry at
    2/h^2 + V. The result is symmetric positive definite for V > 0.
    """
    if potential.grid != grid:
        raise ValidationError("potential sampled on a different grid")
    h = grid.spacing
    diag = 2.0 / h**2 + potential.field.values
    off = np.full(grid.n_points - 1, -1.0 / h**2)
    off[0] = off[-1] = -math.sqrt(2.0) / h**2
    return TridiagonalOperator(diag=diag, off=off)


class SpectralBasis:
    """First ``count`` Neumann eigenpairs of -d^2/dx^2 + V plus derived constants.

    Attributes
    ----------
    mu : ascending eigenvalues, mu[0] < mu[1].
    modes : (count, n_points) eigenfunction samples, Simpson-orthonormal,
        ground mode positive, excited modes positive at the left end.
    d_modes : discrete derivatives of the modes.
    m0 : min of the ground mode; i0 : its integral.
    p : integral ratios  p[q] = (integral of e_q) / i0.
    v_int : integrals of V * e_q.
    one_coeffs : expansion coefficients of the constant 1, i.e. integral of e_q.
    c_v : max(1, sup V);  v_l2 : L2 norm of V.
    """

    __slots__ = (
        "grid", "potential", "count", "mu", "modes", "d_modes",
        "m0", "i0", "p", "v_int", "one_coeffs", "c_v", "v_l2",
        "_coeff_matrix",
    )

    def __init__(self, grid: Grid, potential: Potential, mu: np.ndarray,
                 modes: np.ndarray):
        self.grid = grid
        self.potential = potential
        self.count = len(mu)
        mu.setflags(write=False)
        modes.setflags(write=False)
        self.mu = mu
        self.modes = modes
        self.d_modes = np.vstack([grid.derivative_values(m) for m in modes])
        self.d_modes.setflags(write=False)

        e0 = modes[0]
        self.m0 = float(e0.min())
        self.i0 = grid.integrate_values(e0)
        self.one_coeffs = np.array([grid.integrate_values(m) for m in modes])
        self.p = self.one_coeffs / self.i0
        vvals = potential.field.values
        self.v_int = np.array([grid.integrate_values(vvals * m) for m in modes])
        self.c_v = max(1.0, potential.max_value)
        self.v_l2 = math.sqrt(grid.integrate_values(vvals**2))
        # rows give Simpson inner products against each mode
        self._coeff_matrix = self.modes * grid._simpson_w

    def mode(self, n: int) -> ScalarField:
        if not 0 <= n < self.count:
            raise ValidationError(f"mode index {n} outside [0, {self.count})")
        return ScalarField(self.grid, self.modes[n])

    def coeffs(self, values: np.ndarray) -> np.ndarray:
        """All ``count`` expansion coefficients of a sample vector."""
        return self._coeff_matrix @ values

    def reconstruct(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs @ self.modes[: len(coeffs)]


def solve_eigen(potential: Potential, count: int) -> SpectralBasis:
    """Lowest ``count`` eigenpairs via a symmetric tridiagonal eigensolver.

    Deterministic LAPACK bisection + inverse iteration; the sqrt(2)
    similarity is undone on the eigenvectors, which are then normalized in
    the Simpson inner product and given a fixed sign convention.
    """
    grid = potential.field.grid
    if count < 2:
        raise ValidationError("count must be >= 2 (the gap mu[1]-mu[0] is used)")
    if count > grid.n_points // 4:
        raise ResolutionError(
            f"count={count} exceeds the resolution guard n_points/4="
            f"{grid.n_points // 4}"
        )
    op = assemble_operator(potential, grid)
    mu, w = eigh_tridiagonal(
        op.diag, op.off, select="i", select_range=(0, count - 1)
    )
    modes = np.ascontiguousarray(w.T)
    # undo the boundary similarity scaling
    modes[:, 0] *= math.sqrt(2.0)
    modes[:, -1] *= math.sqrt(2.0)
    for k in range(count):
        nrm = math.sqrt(grid.integrate_values(modes[k] ** 2))
        modes[k] /= nrm
    # sign fixing: ground mode positive, others positive at the left end
    if grid.integrate_values(modes[0]) < 0.0:
        modes[0] = -modes[0]
    if modes[0].min() <= 0.0:
        raise DiscretizationError(
            "ground mode changes sign; refine the grid or check the potential"
        )
    for k in range(1, count):
        sup = np.abs(modes[k]).max()
        lead = modes[k][np.abs(modes[k]) > _SIGN_TIE_TOL * sup][0]
        if lead < 0.0:
            modes[k] = -modes[k]
    if not mu[0] < mu[1]:
        raise DiscretizationError("ground eigenvalue is not simple")
    return SpectralBasis(grid, potential, mu, modes)


def coeff(basis: SpectralBasis, f: ScalarField, n: int) -> float:
    """Simpson inner product of f with the n-th mode."""
    if f.grid != basis.grid:
        raise ValidationError("field sampled on a different grid than the basis")
    if not 0 <= n < basis.count:
        raise ValidationError(f"mode index {n} outside [0, {basis.count})")
    return float(basis._coeff_matrix[n] @ f.values)


def export_basis(basis: SpectralBasis, outdir) -> list:
    """Write spectrum.csv, per-mode sample files and a JSON summary.

    Returns the list of paths written (relative to ``outdir``).
    """
    from pathlib import Path

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    lines = ["n,mu"]
    lines += [f"{n},{float(basis.mu[n])!r}" for n in range(basis.count)]
    (out / "spectrum.csv").write_text("\n".join(lines) + "\n")
    written.append("spectrum.csv")

    mode_dir = out / "modes"
    mode_dir.mkdir(exist_ok=True)
    x = basis.grid.nodes
    for n in range(basis.count):
        rows = ["x,value"]
        rows += [
            f"{float(x[i])!r},{float(basis.modes[n, i])!r}"
            for i in range(basis.grid.n_points)
        ]
        rel = f"modes/mode_{n:03d}.csv"
        (out / rel).write_text("\n".join(rows) + "\n")
        written.append(rel)

    summary = {
        "count": basis.count,
        "n_points": basis.grid.n_points,
        "mu": [float(v) for v in basis.mu],
        "m0": basis.m0,
        "i0": basis.i0,
        "c_v": basis.c_v,
        "p": [float(v) for v in basis.p],
        "v_int": [float(v) for v in basis.v_int],
    }
    (out / "basis_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    written.append("basis_summary.json")
    return written
