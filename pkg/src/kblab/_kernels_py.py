"""Pure-NumPy kernels; API-identical fallback for the compiled extension."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded


def series_accumulate(heads, tails, coefs, base, ratio, out):
    """out += sum_k coefs[k] * base[heads[k]] * prod_j ratio[tails[k, j]].

    ``tails`` is padded with -1 past each term's order. Consecutive terms
    usually share a head and a tail prefix, so partial products are kept on
    a stack and only recomputed from the first differing slot.
    """
    nterms, maxm = tails.shape
    if nterms == 0:
        return out
    n = out.shape[0]
    stack = np.empty((maxm + 1, n))
    tmp = np.empty(n)
    prev = np.full(maxm, -2, dtype=tails.dtype)
    prev_head = -1
    for k in range(nterms):
        h = heads[k]
        row = tails[k]
        if h != prev_head:
            stack[0] = base[h]
            prev_head = h
            prev[:] = -2
        d = 0
        while d < maxm and row[d] >= 0 and row[d] == prev[d]:
            d += 1
        j = d
        while j < maxm and row[j] >= 0:
            np.multiply(stack[j], ratio[row[j]], out=stack[j + 1])
            j += 1
        prev[:] = row
        np.multiply(stack[j], coefs[k], out=tmp)
        out += tmp
    return out


def fd_burgers_run(u0, force, h, dt, nsteps, growth_cap=1e6):
    """Semi-implicit Burgers stepper: Crank-Nicolson diffusion, Heun advection.

    Dirichlet u=0 at both ends. Returns (u, ok); ok=False signals the
    growth cap was exceeded (instability).
    """
    n = u0.shape[0]
    u = u0.copy()
    u[0] = u[-1] = 0.0
    r = dt / (2.0 * h * h)
    # banded form of I - (dt/2) Lap with identity boundary rows
    ab = np.zeros((3, n))
    ab[1, :] = 1.0 + 2.0 * r
    ab[0, 2:] = -r
    ab[2, :-2] = -r
    ab[1, 0] = ab[1, -1] = 1.0
    ab[0, 1] = 0.0
    ab[2, -2] = 0.0

    def explicit(v):
        # (dt/2) Lap v + advection/forcing slot builder, interior only
        rhs = np.zeros(n)
        rhs[1:-1] = v[1:-1] + r * (v[2:] - 2.0 * v[1:-1] + v[:-2])
        return rhs

    def advect(v):
        a = np.zeros(n)
        a[1:-1] = -v[1:-1] * (v[2:] - v[:-2]) / (2.0 * h) + force[1:-1]
        return a

    check_every = 64
    # overflow past the cap must surface as ok=False, never as a LAPACK
    # error or a warning, so finite checks are ours alone
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(nsteps):
            nu = advect(u)
            half = explicit(u)
            star = solve_banded((1, 1), ab, half + dt * nu,
                                check_finite=False)
            star[0] = star[-1] = 0.0
            u = solve_banded((1, 1), ab, half + 0.5 * dt * (nu + advect(star)),
                             check_finite=False)
            u[0] = u[-1] = 0.0
            if step % check_every == 0 and not np.all(np.abs(u) <= growth_cap):
                return u, False
    if not np.all(np.abs(u) <= growth_cap):
        return u, False
    return u, True
