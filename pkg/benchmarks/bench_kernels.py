"""Compare the compiled kernels against the pure-NumPy fallback.

Times the two hot paths on workloads matching the large end of normal use:
the multi-index series accumulation at Q=12, M=4 (about 294k terms over
2001 nodes) and the semi-implicit Burgers stepper at N=2001 with 5000
steps. Both implementations are imported directly, so the comparison runs
in one process regardless of which one the package selected.

Usage: python3 benchmarks/bench_kernels.py [--repeat R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from kblab import _kernels_py
from kblab import koopman
from kblab.config import ExperimentConfig
from kblab.spectral import solve_eigen

try:
    from kblab import _kernels
except ImportError:
    _kernels = None


def _build_series_workload():
    cfg = ExperimentConfig.load(None, overrides=["modes=30"], seed=None,
                                out_dir="/tmp/bench")
    grid = cfg.grid()
    basis = solve_eigen(cfg.potential(grid), cfg.modes)
    heads, tails, orders = koopman._index_arrays(koopman.TruncationSpec(12, 4))
    # coefficient magnitudes shaped like a real decomposition: geometric
    # decay in the order, mild decay in the head index
    rng = np.random.default_rng(3)
    coefs = rng.normal(0.0, 1.0, heads.shape[0]) * 0.2**orders \
        / (1.0 + heads.astype(float))
    base = np.ascontiguousarray(basis.d_modes / basis.modes[0])
    ratio = np.ascontiguousarray(basis.modes / basis.modes[0])
    return heads, tails, coefs, base, ratio


def _build_fd_workload():
    cfg = ExperimentConfig.load(None, overrides=[], seed=None,
                                out_dir="/tmp/bench")
    grid = cfg.grid()
    basis = solve_eigen(cfg.potential(grid), cfg.modes)
    u0 = -2.0 * basis.d_modes[0] / basis.modes[0] \
        + 0.05 * np.sin(np.pi * grid.nodes)
    dv = np.gradient(basis.potential.field.values, grid.spacing)
    return u0, 2.0 * dv, grid.spacing


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    impls = [("python", _kernels_py)]
    if _kernels is not None:
        impls.append(("compiled", _kernels))
    else:
        print("compiled extension not available; timing fallback only")

    heads, tails, coefs, base, ratio = _build_series_workload()
    print(f"series_accumulate: {heads.shape[0]} terms, {base.shape[1]} nodes")
    results = {}
    for name, mod in impls:
        def run(mod=mod):
            out = np.zeros(base.shape[1])
            return mod.series_accumulate(heads, tails, coefs, base, ratio,
                                         out)
        dt, out = _time(run, args.repeat)
        results[name] = (dt, out)
        print(f"  {name:9s} {dt:8.3f} s")
    if len(results) == 2:
        d = np.abs(results["python"][1] - results["compiled"][1]).max()
        speedup = results["python"][0] / results["compiled"][0]
        print(f"  speedup {speedup:.1f}x, max|difference| = {d:.3e}")

    u0, force, h = _build_fd_workload()
    nsteps = 5000
    dt_step = 2e-4
    print(f"fd_burgers_run: {u0.shape[0]} nodes, {nsteps} steps")
    results = {}
    for name, mod in impls:
        def run(mod=mod):
            return mod.fd_burgers_run(u0, force, h, dt_step, nsteps)
        t_el, (u, ok) = _time(run, args.repeat)
        results[name] = (t_el, u)
        print(f"  {name:9s} {t_el:8.3f} s  (stable={ok})")
    if len(results) == 2:
        d = np.abs(results["python"][1] - results["compiled"][1]).max()
        speedup = results["python"][0] / results["compiled"][0]
        print(f"  speedup {speedup:.1f}x, max|difference| = {d:.3e}")


if __name__ == "__main__":
    main()
