# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: product-mode series accumulation and the FD Burgers stepper.

Each function mirrors the signature and semantics of its twin in
_kernels_py.py; the import-time selector in kernels.py picks whichever is
available.
"""

import numpy as np


def series_accumulate(int[::1] heads, int[:, ::1] tails, double[::1] coefs,
                      double[:, ::1] base, double[:, ::1] ratio, double[::1] out):
    """out += sum_k coefs[k] * base[heads[k]] * prod_j ratio[tails[k, j]].

    tails is padded with -1 past each term's order; partial products are
    reused across terms sharing a head and tail prefix.
    """
    cdef Py_ssize_t nterms = heads.shape[0]
    cdef Py_ssize_t maxm = tails.shape[1]
    cdef Py_ssize_t n = out.shape[0]
    if nterms == 0:
        return np.asarray(out)
    stack_arr = np.empty((maxm + 1, n))
    prev_arr = np.full(maxm, -2, dtype=np.intc)
    cdef double[:, ::1] stack = stack_arr
    cdef int[::1] prev = prev_arr
    cdef Py_ssize_t k, d, j, i
    cdef int h, prev_head = -1
    cdef double c
    for k in range(nterms):
        h = heads[k]
        if h != prev_head:
            for i in range(n):
                stack[0, i] = base[h, i]
            prev_head = h
            for j in range(maxm):
                prev[j] = -2
        d = 0
        while d < maxm and tails[k, d] >= 0 and tails[k, d] == prev[d]:
            d += 1
        j = d
        while j < maxm and tails[k, j] >= 0:
            for i in range(n):
                stack[j + 1, i] = stack[j, i] * ratio[tails[k, j], i]
            j += 1
        for d in range(maxm):
            prev[d] = tails[k, d]
        c = coefs[k]
        for i in range(n):
            out[i] += c * stack[j, i]
    return np.asarray(out)


def fd_burgers_run(double[::1] u0, double[::1] force, double h, double dt,
                   Py_ssize_t nsteps, double growth_cap=1e6):
    """Semi-implicit Burgers stepper; see the fallback for the scheme.

    Crank-Nicolson diffusion (constant tridiagonal factored once), Heun
    advection, Dirichlet ends. Returns (u, ok).
    """
    cdef Py_ssize_t n = u0.shape[0]
    u_arr = np.array(u0, dtype=np.float64)
    cdef double[::1] u = u_arr
    u[0] = 0.0
    u[n - 1] = 0.0
    cdef double r = dt / (2.0 * h * h)
    cdef double diag = 1.0 + 2.0 * r
    cdef double off = -r
    # Thomas forward-elimination multipliers for the constant matrix
    cp_arr = np.empty(n)
    nu_arr = np.empty(n)
    half_arr = np.empty(n)
    star_arr = np.empty(n)
    rhs_arr = np.empty(n)
    cdef double[::1] cp = cp_arr
    cdef double[::1] nu = nu_arr
    cdef double[::1] half = half_arr
    cdef double[::1] star = star_arr
    cdef double[::1] rhs = rhs_arr
    cdef Py_ssize_t i, step
    # boundary rows are identity: solve the interior block [1, n-2]
    cp[1] = off / diag
    for i in range(2, n - 1):
        cp[i] = off / (diag - off * cp[i - 1])
    cdef double denom, sup
    cdef bint ok = True

    for step in range(nsteps):
        sup = 0.0
        for i in range(1, n - 1):
            nu[i] = -u[i] * (u[i + 1] - u[i - 1]) / (2.0 * h) + force[i]
            half[i] = u[i] + r * (u[i + 1] - 2.0 * u[i] + u[i - 1])
        # predictor solve
        for i in range(1, n - 1):
            rhs[i] = half[i] + dt * nu[i]
        star[1] = rhs[1] / diag
        for i in range(2, n - 1):
            star[i] = (rhs[i] - off * star[i - 1]) / (diag - off * cp[i - 1])
        for i in range(n - 3, 0, -1):
            star[i] = star[i] - cp[i] * star[i + 1]
        star[0] = 0.0
        star[n - 1] = 0.0
        # corrector solve with averaged advection
        for i in range(1, n - 1):
            rhs[i] = half[i] + 0.5 * dt * (
                nu[i] - star[i] * (star[i + 1] - star[i - 1]) / (2.0 * h) + force[i]
            )
        u[1] = rhs[1] / diag
        for i in range(2, n - 1):
            u[i] = (rhs[i] - off * u[i - 1]) / (diag - off * cp[i - 1])
        for i in range(n - 3, 0, -1):
            u[i] = u[i] - cp[i] * u[i + 1]
        u[0] = 0.0
        u[n - 1] = 0.0
        if step % 64 == 0:
            for i in range(n):
                if u[i] > sup:
                    sup = u[i]
                elif -u[i] > sup:
                    sup = -u[i]
            if sup > growth_cap:
                ok = False
                break
    if ok:
        for i in range(n):
            if u[i] != u[i]:
                ok = False
                break
            if u[i] > growth_cap or -u[i] > growth_cap:
                ok = False
                break
    return u_arr, ok
