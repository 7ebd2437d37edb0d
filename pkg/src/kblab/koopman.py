"""Product-mode decompositions of the conjugated flows, with certificates.

Both nonlinear flows admit explicit expansions indexed by a head mode q0
and an ordered tail (q1..qm) of excited modes:

* mean-normalized heat flow:  sum over nu of exp(-lambda_nu t) psi_nu(v0) b_nu,
  where psi_nu is a product of coefficient ratios c_q/c0 and b_nu is
  (-1)^m (prod of integral ratios p_q) e_{q0} / i0.  The expansion is the
  geometric series of 1/(1 + k(t)) and is valid once |k(t)| < 1.
* Burgers flow:  sum over nu of exp(-lambda_nu t) phi_nu(u0) a_nu with
  phi_nu = psi_nu after the hopf transform and
  a_nu = 2 (-1)^{m+1} (e_{q0}'/e0) prod (e_{qi}/e0).

lambda_nu is the sum of spectral gaps over every entry of nu, so each
observable satisfies the exponential eigen-relation along its flow.

Every series evaluation returns a certificate: the validity threshold tau
for the requested time, absolute-convergence diagnostics (the geometric
ratio of the term majorant), and a conservative bound on everything the
truncation discarded.  All spectral sums are truncated at the basis size
and padded with an analytic tail majorant built from the eigenvalue lower
bound mu_n >= mu_{K-1} + (n-K+1)^2 pi^2 / 2, so certificates err on the
pessimistic side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .cole_hopf import State, StateTag, hopf
from .errors import (
    CertificateError,
    NumericalError,
    SizeGuardError,
    ValidationError,
)
from .grid import ScalarField, norms as field_norms
from .spectral import SpectralBasis

ALWAYS_VALID = float("-inf")
"""Sentinel threshold: the certified range is all positive times."""

TERM_CAP = 10_000_000
_DIST_ZERO = 1e-8  # below this (relative) a distance counts as zero
_T_FLOOR = 1e-9
_BISECT_TOL = 1e-8


@dataclass(frozen=True)
class MultiIndex:
    """Head mode q0 >= 0 plus an ordered tail of excited modes (each >= 1)."""

    q0: int
    tail: tuple = ()

    def __post_init__(self):
        if self.q0 < 0:
            raise ValidationError(f"q0 must be >= 0, got {self.q0}")
        if any(q < 1 for q in self.tail):
            raise ValidationError(f"tail entries must be >= 1, got {self.tail}")

    @property
    def order(self) -> int:
        return len(self.tail)


@dataclass(frozen=True)
class TruncationSpec:
    """Keep heads and tail entries <= max_mode and orders <= max_order."""

    max_mode: int
    max_order: int
    lambda_cut: Optional[float] = None

    def __post_init__(self):
        if self.max_mode < 1:
            raise ValidationError("max_mode must be >= 1")
        if self.max_order < 0:
            raise ValidationError("max_order must be >= 0")
        if self.lambda_cut is not None and not 0.0 < self.lambda_cut < 1.0:
            raise ValidationError("lambda_cut must lie in (0, 1)")

    def count(self) -> int:
        q, m = self.max_mode, self.max_order
        return (q + 1) * sum(q**k for k in range(m + 1))


@dataclass
class KoopmanTerm:
    """One term of a decomposition: scalar coefficient times a fixed mode."""

    index: MultiIndex
    decay_rate: float
    coefficient: float
    mode: Optional[ScalarField] = None


def _index_arrays(trunc: TruncationSpec):
    """(heads, tails, orders) in canonical order: head-major, then order,
    then lexicographic tails; tails padded with -1."""
    total = trunc.count()
    if total > TERM_CAP:
        raise SizeGuardError(
            f"truncation enumerates {total} terms, above the cap {TERM_CAP}"
        )
    q, m_max = trunc.max_mode, trunc.max_order
    width = max(m_max, 1)
    blocks = []
    orders = []
    for m in range(m_max + 1):
        if m == 0:
            block = np.full((1, width), -1, dtype=np.intc)
        else:
            grids = np.meshgrid(*([np.arange(1, q + 1)] * m), indexing="ij")
            block = np.full((q**m, width), -1, dtype=np.intc)
            block[:, :m] = np.stack(grids, axis=-1).reshape(-1, m)
        blocks.append(block)
        orders.append(np.full(q**m if m else 1, m, dtype=np.intc))
    tails_one = np.vstack(blocks)
    orders_one = np.concatenate(orders)
    per_head = tails_one.shape[0]
    heads = np.repeat(np.arange(q + 1, dtype=np.intc), per_head)
    tails = np.ascontiguousarray(np.tile(tails_one, (q + 1, 1)))
    orders = np.tile(orders_one, q + 1)
    return heads, tails, orders


def enumerate_indices(trunc: TruncationSpec) -> list:
    """All retained multi-indices in canonical order."""
    heads, tails, _ = _index_arrays(trunc)
    out = []
    for k in range(len(heads)):
        row = tails[k]
        out.append(MultiIndex(int(heads[k]), tuple(int(v) for v in row[row >= 0])))
    return out


def lambda_of(basis: SpectralBasis, nu: MultiIndex) -> float:
    """Decay rate: sum of gaps mu_q - mu_0 over every entry of nu."""
    _check_index(basis, nu)
    gaps = basis.mu - basis.mu[0]
    return float(gaps[nu.q0] + sum(gaps[q] for q in nu.tail))


def _check_index(basis: SpectralBasis, nu: MultiIndex):
    top = max((nu.q0, *nu.tail)) if nu.tail else nu.q0
    if top >= basis.count:
        raise ValidationError(
            f"index touches mode {top}, basis holds {basis.count}"
        )


def psi(basis: SpectralBasis, nu: MultiIndex, v0: State) -> float:
    """Eigen-functional of the mean-normalized heat flow: prod c_q / c0."""
    if not isinstance(v0, State) or v0.tag is not StateTag.P_ONE:
        raise ValidationError("psi expects a P_ONE state")
    _check_index(basis, nu)
    c = basis.coeffs(v0.values)
    out = c[nu.q0] / c[0]
    for q in nu.tail:
        out *= c[q] / c[0]
    return float(out)


def sigma(basis: SpectralBasis, nu: MultiIndex, v0: State) -> float:
    """Eigen-functional of the linear heat flow: plain coefficient product."""
    if not isinstance(v0, State) or v0.tag not in (StateTag.P_PLUS, StateTag.P_ONE):
        raise ValidationError("sigma expects a positive state")
    _check_index(basis, nu)
    c = basis.coeffs(v0.values)
    out = c[nu.q0]
    for q in nu.tail:
        out *= c[q]
    return float(out)


def phi(basis: SpectralBasis, nu: MultiIndex, u0: ScalarField) -> float:
    """Eigen-functional of the Burgers flow: psi after the hopf transform."""
    return psi(basis, nu, hopf(u0))


def mode_b(basis: SpectralBasis, nu: MultiIndex) -> ScalarField:
    """Heat-side product mode: (-1)^m (prod p_{qi}) e_{q0} / i0."""
    _check_index(basis, nu)
    scale = (-1.0) ** nu.order / basis.i0
    for q in nu.tail:
        scale *= basis.p[q]
    return ScalarField(basis.grid, scale * basis.modes[nu.q0])


def mode_a(basis: SpectralBasis, nu: MultiIndex) -> ScalarField:
    """Burgers-side product mode: 2 (-1)^{m+1} (e_{q0}'/e0) prod (e_{qi}/e0)."""
    _check_index(basis, nu)
    e0 = basis.modes[0]
    vals = 2.0 * (-1.0) ** (nu.order + 1) * basis.d_modes[nu.q0] / e0
    for q in nu.tail:
        vals = vals * (basis.modes[q] / e0)
    return ScalarField(basis.grid, vals)


# ---------------------------------------------------------------------------
# envelopes, thresholds, certificates
# ---------------------------------------------------------------------------


class ConvergenceProfile:
    """Decay envelopes and validity thresholds for both decompositions.

    h1 bounds the sup norm of the mode-1-and-up remainder of the heat flow
    (through the Sobolev constant c1 = sqrt(2)); h2 drives the absolute-
    convergence ratio of the heat-side majorant; h4/h5 play the same roles
    on the Burgers side; h3 is the state-dependent geometric ratio of the
    Burgers majorant.  Sums run over the basis modes and are topped up with
    an analytic tail, so every envelope is an upper bound of its infinite
    counterpart.
    """

    def __init__(self, basis: SpectralBasis, c1: float = math.sqrt(2.0)):
        self.basis = basis
        self.c1 = c1
        self.gaps = basis.mu - basis.mu[0]
        v_sq = basis.v_l2**2 - float(np.sum(basis.v_int**2))
        self.v_resid = math.sqrt(max(v_sq, 0.0))

    # -- analytic tail beyond the last resolved eigenvalue ----------------

    def _tail(self, t: float, rate: float, weight_fn) -> float:
        s = rate * t
        half_pi2 = 0.5 * math.pi**2
        if s >= 1e-8:
            jmax = max(int(math.sqrt(760.0 / (s * half_pi2))) + 4, 4)
        else:
            jmax = 200_000
        j = np.arange(1.0, jmax + 1.0)
        mus = self.basis.mu[-1] + half_pi2 * j * j
        terms = weight_fn(mus) * np.exp(-s * (mus - self.basis.mu[0]))
        total = float(np.sum(terms))
        if s < 1e-8 and terms[-1] > 1e-16 * max(total, 1e-300):
            return math.inf
        return total

    def _head(self, t: float, rate: float, weights: np.ndarray,
              q_start: int) -> float:
        sl = slice(q_start, None)
        return float(np.sum(weights[sl] * np.exp(-rate * t * self.gaps[sl])))

    # -- envelope family ---------------------------------------------------

    def h1(self, t: float) -> float:
        mu = self.basis.mu
        s = self._head(t, 2.0, 1.0 + mu, 1) + self._tail(t, 2.0, lambda m: 1.0 + m)
        return self.c1 * math.sqrt(s)

    def h2(self, t: float, q_start: int = 1) -> float:
        mu = self.basis.mu
        s = self._head(t, 2.0, mu**-3.0, max(q_start, 1))
        s += self._tail(t, 2.0, lambda m: m**-3.0)
        return math.sqrt(s)

    def h4(self, t: float) -> float:
        mu = self.basis.mu
        s = self._head(t, 2.0, (1.0 + mu) ** 2, 0)
        s += self._tail(t, 2.0, lambda m: (1.0 + m) ** 2)
        return math.sqrt(s)

    def h5(self, t: float, q_start: int = 1) -> float:
        mu = self.basis.mu
        s = self._head(t, 2.0, (1.0 + np.sqrt(mu)) ** 2, max(q_start, 1))
        s += self._tail(t, 2.0, lambda m: (1.0 + np.sqrt(m)) ** 2)
        return math.sqrt(s)

    # -- potential-weighted decay sum (heat-side geometric ratio) ----------

    def t_hat(self, t: float, q_start: int = 1) -> float:
        """Sum of |int V e_q| mu_q^{-3/2} exp(-gap_q t), with tail."""
        mu = self.basis.mu
        w = np.abs(self.basis.v_int) * mu**-1.5
        s = self._head(t, 1.0, w, max(q_start, 1))
        tail_sq = self._tail(t, 2.0, lambda m: m**-3.0)
        s += self.v_resid * math.sqrt(tail_sq)
        return s

    def s1(self, t: float, q_start: int = 1) -> float:
        """Sum of ((1+sqrt(mu_q))/sqrt(mu_q)) exp(-gap_q t), with tail."""
        mu = self.basis.mu
        w = (1.0 + np.sqrt(mu)) / np.sqrt(mu)
        s = self._head(t, 1.0, w, max(q_start, 1))
        s += self._tail(t, 1.0, lambda m: (1.0 + np.sqrt(m)) / np.sqrt(m))
        return s

    def weighted_coeff_sum(self, t: float, coeff_abs: np.ndarray, resid: float,
                           weight: str, q_start: int) -> float:
        """Sum of w(mu_q) |c_q| exp(-gap_q t) with a Cauchy-Schwarz tail.

        ``weight`` selects w: "sqrt" for 1+sqrt(mu), "linear" for 1+mu.
        ``coeff_abs`` covers the basis modes; ``resid`` bounds the L2 mass
        of the coefficients beyond the basis.
        """
        mu = self.basis.mu
        if weight == "sqrt":
            w = 1.0 + np.sqrt(mu)
            tail_fn = lambda m: (1.0 + np.sqrt(m)) ** 2
        elif weight == "linear":
            w = 1.0 + mu
            tail_fn = lambda m: (1.0 + m) ** 2
        else:
            raise ValidationError(f"unknown weight {weight!r}")
        s = self._head(t, 1.0, w * coeff_abs, q_start)
        s += resid * math.sqrt(self._tail(t, 2.0, tail_fn))
        return s


def _invert_decreasing(f, target: float, tol: float = _BISECT_TOL) -> float:
    """Smallest t with f(t) <= target, for strictly decreasing f."""
    hi = 1.0
    for _ in range(200):
        if f(hi) <= target:
            break
        hi *= 2.0
    else:
        raise NumericalError("envelope never drops below the threshold")
    lo = _T_FLOOR
    if f(lo) <= target:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) <= target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class _HeatData:
    c: np.ndarray
    c0: float
    v_norm: float
    d_l2: float
    d_h1: float
    one_dist: float  # L2 distance between 1 and i0*e0
    c_resid: float


def _heat_data(basis: SpectralBasis, values: np.ndarray) -> _HeatData:
    c = basis.coeffs(values)
    c0 = float(c[0])
    if c0 <= 0.0:
        raise ValidationError("ground coefficient must be positive")
    d_vals = values - c0 * basis.modes[0]
    dn = field_norms(ScalarField(basis.grid, d_vals))
    v_norm = math.sqrt(max(basis.grid.integrate_values(values**2), 0.0))
    one_vals = 1.0 - basis.i0 * basis.modes[0]
    one_dist = math.sqrt(
        max(basis.grid.integrate_values(one_vals**2), 0.0)
    )
    c_resid = math.sqrt(max(dn.l2**2 - float(np.sum(c[1:] ** 2)), 0.0))
    return _HeatData(c=c, c0=c0, v_norm=v_norm, d_l2=dn.l2, d_h1=dn.h1,
                     one_dist=one_dist, c_resid=c_resid)


def tau_n(basis: SpectralBasis, v0: State) -> float:
    """Validity threshold of the heat-side expansion (log of the k-bound).

    Negative when the expansion is valid from t = 0; ALWAYS_VALID when the
    initial distance vanishes (e.g. constant potential, where 1 = i0 e0).
    """
    data = _heat_data(basis, v0.values)
    if data.d_l2 <= _DIST_ZERO * data.v_norm or data.one_dist <= _DIST_ZERO:
        return ALWAYS_VALID
    ratio = data.d_l2 * data.one_dist / (data.c0 * basis.i0)
    gap1 = float(basis.mu[1] - basis.mu[0])
    return math.log(ratio) / gap1


def in_omega_n(basis: SpectralBasis, v0: State) -> bool:
    """Membership in the set where the heat expansion is valid from t=0."""
    return tau_n(basis, v0) < 0.0


def tau_tilde_n(basis: SpectralBasis, v0: State) -> float:
    """Absolute-convergence threshold of the heat-side expansion (h2 inverse)."""
    data = _heat_data(basis, v0.values)
    profile = ConvergenceProfile(basis)
    if data.d_h1 <= _DIST_ZERO * data.v_norm:
        return ALWAYS_VALID
    threshold = data.c0 * basis.i0 / (basis.c_v * basis.v_l2 * data.d_h1)
    if profile.h2(0.0) < threshold:
        return ALWAYS_VALID
    return _invert_decreasing(profile.h2, threshold)


def _burgers_data(basis: SpectralBasis, u0: ScalarField):
    v0 = hopf(u0)
    data = _heat_data(basis, v0.values)
    sink_dist_sq = basis.grid.integrate_values(
        (v0.values - basis.modes[0] / basis.i0) ** 2
    )
    return v0, data, math.sqrt(max(sink_dist_sq, 0.0))


def _transform_floor(basis: SpectralBasis) -> float:
    """Distances below this are indistinguishable from zero on the grid.

    The hopf/cole pair loses O(h^2) per roundtrip (central differences and
    panel quadrature), so sink distances measured after a transform carry
    that noise floor; c_v scales it with the stiffness of the potential.
    """
    return max(_DIST_ZERO, basis.grid.spacing**2 * basis.c_v)


def tau_b(basis: SpectralBasis, u0: ScalarField) -> float:
    """Validity threshold of the Burgers expansion (h1 inverse at the sink gap)."""
    profile = ConvergenceProfile(basis)
    _, data, sink_dist = _burgers_data(basis, u0)
    if sink_dist <= _transform_floor(basis):
        return ALWAYS_VALID
    return _invert_decreasing(profile.h1, basis.m0**2 / sink_dist)


def in_omega_b(basis: SpectralBasis, u0: ScalarField, theta0: float) -> bool:
    """Membership in the basin where the Burgers expansion is valid past theta0."""
    if theta0 <= 0.0:
        raise ValidationError("theta0 must be positive")
    profile = ConvergenceProfile(basis)
    _, _, sink_dist = _burgers_data(basis, u0)
    return sink_dist < basis.m0**2 / profile.h1(theta0)


def tau_tilde_b(basis: SpectralBasis, u0: ScalarField) -> float:
    """Absolute-convergence threshold of the Burgers expansion (h5 inverse)."""
    profile = ConvergenceProfile(basis)
    _, data, _ = _burgers_data(basis, u0)
    if data.d_l2 <= _transform_floor(basis):
        return ALWAYS_VALID
    return _invert_decreasing(profile.h5, basis.m0**2 / data.d_l2)


# ---------------------------------------------------------------------------
# decay estimates for the linear flow
# ---------------------------------------------------------------------------


@dataclass
class EstimateSample:
    t: float
    mean_lhs: float
    mean_rhs: float
    sup_lhs: float
    sup_rhs: float

    @property
    def mean_margin(self) -> float:
        return self.mean_rhs - self.mean_lhs

    @property
    def sup_margin(self) -> float:
        return self.sup_rhs - self.sup_lhs


@dataclass
class EstimateReport:
    samples: list

    def to_json_dict(self) -> dict:
        return {
            "samples": [
                {
                    "t": s.t,
                    "mean_lhs": s.mean_lhs,
                    "mean_rhs": s.mean_rhs,
                    "mean_margin": s.mean_margin,
                    "sup_lhs": s.sup_lhs,
                    "sup_rhs": s.sup_rhs,
                    "sup_margin": s.sup_margin,
                }
                for s in self.samples
            ]
        }


def verify_estimates(basis: SpectralBasis, v0: State, t_samples) -> EstimateReport:
    """Evaluate both decay estimates for the linear heat flow.

    Mean estimate: |exp(mu0 t) g(t) - c0 i0| <= exp(-(mu1-mu0) t)
    ||v0 - c0 e0|| ||1 - i0 e0||.  Sup estimate: the mode-1-and-up
    remainder of exp(mu0 t) v(t) is bounded by ||v0 - c0 e0|| h1(t).
    """
    if not isinstance(v0, State) or v0.tag not in (StateTag.P_PLUS, StateTag.P_ONE):
        raise ValidationError("verify_estimates expects a positive state")
    data = _heat_data(basis, v0.values)
    profile = ConvergenceProfile(basis)
    gaps = basis.mu - basis.mu[0]
    gap1 = float(gaps[1])
    samples = []
    for t in np.asarray(t_samples, dtype=np.float64):
        decay = data.c * np.exp(-gaps * t)
        mean_shifted = float(np.sum(decay * basis.one_coeffs))
        mean_lhs = abs(mean_shifted - data.c0 * basis.i0)
        mean_rhs = math.exp(-gap1 * t) * data.d_l2 * data.one_dist
        v_shifted = basis.reconstruct(decay)
        sup_lhs = float(np.abs(v_shifted - data.c0 * basis.modes[0]).max())
        sup_rhs = data.d_l2 * profile.h1(float(t))
        samples.append(
            EstimateSample(float(t), mean_lhs, mean_rhs, sup_lhs, sup_rhs)
        )
    return EstimateReport(samples=samples)


# ---------------------------------------------------------------------------
# series evaluation with certificates
# ---------------------------------------------------------------------------


@dataclass
class SeriesCertificate:
    kind: str  # "heat" or "burgers"
    t: float
    tau: float
    tau_tilde: float
    k_bound: float
    eps: float  # geometric ratio of the absolute-term majorant at t
    absolutely_convergent: bool
    tail_bound: float
    in_omega: bool
    c1: float
    truncation: dict
    valid: bool

    def to_json_dict(self) -> dict:
        def enc(x):
            if x == ALWAYS_VALID:
                return "ALWAYS_VALID"
            if isinstance(x, float) and math.isinf(x):
                return "INF"
            return x

        tau_key = "tau_n" if self.kind == "heat" else "tau_b"
        tilde_key = "tau_tilde_n" if self.kind == "heat" else "tau_tilde_b"
        return {
            "kind": self.kind,
            "t": self.t,
            tau_key: enc(self.tau),
            tilde_key: enc(self.tau_tilde),
            "k_bound": enc(self.k_bound),
            "eps": enc(self.eps),
            "absolutely_convergent": self.absolutely_convergent,
            "tail_bound": enc(self.tail_bound),
            "in_omega": self.in_omega,
            "c1": self.c1,
            "truncation": self.truncation,
            "valid": self.valid,
        }


def _geometric_pieces(ratio: float, ratio_hi: float, m_max: int):
    """Partial geometric sums used by the discarded-term majorant."""
    if ratio >= 1.0:
        return None
    geo_kept = sum(ratio**m for m in range(m_max + 1))
    geo_beyond = ratio ** (m_max + 1) / (1.0 - ratio)
    union = sum(m * ratio ** (m - 1) for m in range(1, m_max + 1)) * ratio_hi
    return geo_kept, geo_beyond, union


def _dropped_term_mass(basis: SpectralBasis, data: _HeatData, t: float,
                       trunc: TruncationSpec, kind: str) -> float:
    """Exact sup-norm mass of the terms removed by the lambda cut."""
    if trunc.lambda_cut is None:
        return 0.0
    heads, tails, orders = _index_arrays(trunc)
    lam = _term_lambdas(basis, heads, tails)
    dropped = np.exp(-lam * t) < trunc.lambda_cut
    if not np.any(dropped):
        return 0.0
    heads = heads[dropped]
    tails = tails[dropped]
    cr_abs = np.abs(data.c / data.c0)
    scalars = _term_scalars(heads, tails, cr_abs)
    safe = np.maximum(tails, 0)
    if kind == "heat":
        p_prod = np.prod(np.where(tails >= 0, np.abs(basis.p)[safe], 1.0),
                         axis=1)
        sup_e = np.abs(basis.modes).max(axis=1)
        profile_sup = p_prod * sup_e[heads] / basis.i0
    else:
        inv_m0 = 1.0 / basis.m0
        sup_ratio = np.abs(basis.modes).max(axis=1) * inv_m0
        sup_d = np.abs(basis.d_modes).max(axis=1) * inv_m0
        r_prod = np.prod(np.where(tails >= 0, sup_ratio[safe], 1.0), axis=1)
        profile_sup = 2.0 * sup_d[heads] * r_prod
    weights = np.exp(-lam[dropped] * t) * scalars * profile_sup
    return float(np.sum(weights))


def absolute_tail_bound(basis: SpectralBasis, state, t: float,
                        trunc: TruncationSpec):
    """Conservative majorant for all terms outside the truncation.

    Returns (bound, absolutely_convergent, ratio).  The discarded set is
    split into orders beyond max_order, heads beyond max_mode, kept orders
    whose tail touches a mode beyond max_mode (union bound), and terms
    removed by the lambda cut (summed exactly); the first three pieces are
    bounded by the geometric majorant of the term family.  A ratio >= 1
    means the majorant diverges: bound = inf, flag False.
    """
    profile = ConvergenceProfile(basis)
    q_hi = trunc.max_mode + 1
    if isinstance(state, State):
        data = _heat_data(basis, state.values)
        lead = basis.c_v * data.d_h1 / (data.c0 * basis.i0)
        ratio = lead * profile.t_hat(t, 1)
        ratio_hi = lead * profile.t_hat(t, q_hi)
        pieces = _geometric_pieces(ratio, ratio_hi, trunc.max_order)
        if pieces is None:
            return math.inf, False, ratio
        geo_kept, geo_beyond, union = pieces
        b0 = (1.0 + math.sqrt(basis.mu[0])) / basis.i0
        s1_full = profile.s1(t, 1)
        s1_hi = profile.s1(t, q_hi)
        s1_lo = max(s1_full - s1_hi, 0.0)
        full_factor = b0 + lead * s1_full
        bound = (
            full_factor * geo_beyond
            + lead * s1_hi * geo_kept
            + (b0 + lead * s1_lo) * union
            + _dropped_term_mass(basis, data, t, trunc, "heat")
        )
        return bound, True, ratio
    if isinstance(state, ScalarField):
        v0, data, _ = _burgers_data(basis, state)
        cabs = np.abs(data.c)
        m0sq = basis.m0**2
        h3 = profile.weighted_coeff_sum(t, cabs, data.c_resid, "sqrt", 1) / m0sq
        h3_hi = (
            profile.weighted_coeff_sum(t, cabs, data.c_resid, "sqrt", q_hi)
            / m0sq
        )
        pieces = _geometric_pieces(h3, h3_hi, trunc.max_order)
        if pieces is None:
            return math.inf, False, h3
        geo_kept, geo_beyond, union = pieces
        g_scale = 2.0 * basis.c_v / m0sq
        g_full = g_scale * profile.weighted_coeff_sum(
            t, cabs, data.c_resid, "linear", 0
        )
        g_hi = g_scale * profile.weighted_coeff_sum(
            t, cabs, data.c_resid, "linear", q_hi
        )
        g_lo = max(g_full - g_hi, 0.0)
        bound = (
            g_full * geo_beyond + g_hi * geo_kept + g_lo * union
            + _dropped_term_mass(basis, data, t, trunc, "burgers")
        )
        return bound, True, h3
    raise ValidationError("state must be a positive State (heat) or a "
                          "ScalarField (Burgers)")


def _term_scalars(heads, tails, table):
    """Per-term products table[q0] * prod table[tails]; padded slots are 1."""
    safe = np.maximum(tails, 0)
    gathered = np.where(tails >= 0, table[safe], 1.0)
    return table[heads] * np.prod(gathered, axis=1)


def _term_lambdas(basis: SpectralBasis, heads, tails):
    gaps = basis.mu - basis.mu[0]
    safe = np.maximum(tails, 0)
    gathered = np.where(tails >= 0, gaps[safe], 0.0)
    return gaps[heads] + np.sum(gathered, axis=1)


def _series_certificate(kind, basis, t, trunc, data, profile, tail_info,
                        n_terms, n_dropped, tau, tau_tilde, k_bound, in_om):
    tail_bound, abs_conv, ratio = tail_info
    return SeriesCertificate(
        kind=kind,
        t=float(t),
        tau=tau,
        tau_tilde=tau_tilde,
        k_bound=k_bound,
        eps=ratio,
        absolutely_convergent=abs_conv,
        tail_bound=tail_bound,
        in_omega=in_om,
        c1=profile.c1,
        truncation={
            "max_mode": trunc.max_mode,
            "max_order": trunc.max_order,
            "lambda_cut": trunc.lambda_cut,
            "n_terms": int(n_terms),
            "n_dropped": int(n_dropped),
        },
        valid=bool(t > tau),
    )


def _apply_lambda_cut(trunc, lam, t):
    if trunc.lambda_cut is None:
        return slice(None), 0
    keep = np.exp(-lam * t) >= trunc.lambda_cut
    return keep, int(np.sum(~keep))


def heat_series(basis: SpectralBasis, v0: State, t: float,
                trunc: TruncationSpec, *, unsafe: bool = False,
                reverse_order: bool = False):
    """Evaluate the heat-side product-mode expansion at time t.

    Returns (field, certificate).  Raises CertificateError when t is not
    past the validity threshold, unless ``unsafe`` is set (the certificate
    is attached to the exception and still returned in the unsafe case).
    """
    if not isinstance(v0, State) or v0.tag is not StateTag.P_ONE:
        raise ValidationError("heat_series expects a P_ONE state")
    if trunc.max_mode >= basis.count:
        raise ValidationError(
            f"max_mode {trunc.max_mode} needs at least {trunc.max_mode + 1} "
            f"basis modes, have {basis.count}"
        )
    data = _heat_data(basis, v0.values)
    profile = ConvergenceProfile(basis)
    gaps = basis.mu - basis.mu[0]

    # k(t): the geometric variable of the expansion, plus its tail majorant
    ratios = data.c[1:] / data.c0
    k_val = float(np.sum(ratios * basis.p[1:] * np.exp(-gaps[1:] * t)))
    mu_lb = basis.mu[-1] + 0.5 * math.pi**2
    k_tail = (
        data.c_resid * profile.v_resid * math.exp(-(mu_lb - basis.mu[0]) * t)
        / (mu_lb * data.c0 * basis.i0)
    )
    k_bound = abs(k_val) + k_tail

    tau = tau_n(basis, v0)
    tau_t = tau_tilde_n(basis, v0)
    tail_info = absolute_tail_bound(basis, v0, t, trunc)
    heads, tails, orders = _index_arrays(trunc)
    lam = _term_lambdas(basis, heads, tails)
    keep, n_dropped = _apply_lambda_cut(trunc, lam, t)
    cert = _series_certificate(
        "heat", basis, t, trunc, data, profile, tail_info,
        len(heads) - n_dropped, n_dropped, tau, tau_t, k_bound,
        in_omega_n(basis, v0),
    )
    if not cert.valid and not unsafe:
        raise CertificateError(
            f"t={t:g} is not past the validity threshold tau={tau:g}", cert
        )

    cr = data.c / data.c0
    psi_terms = _term_scalars(heads, tails, cr)
    safe = np.maximum(tails, 0)
    p_prod = np.prod(np.where(tails >= 0, basis.p[safe], 1.0), axis=1)
    signs = np.where(orders % 2 == 0, 1.0, -1.0)
    weights = np.exp(-lam * t) * psi_terms * signs * p_prod / basis.i0
    if n_dropped:
        weights = weights[keep]
        heads_k = heads[keep]
    else:
        heads_k = heads
    buckets = np.zeros(basis.count)
    if reverse_order:
        np.add.at(buckets, heads_k[::-1], weights[::-1])
        head_order = range(trunc.max_mode, -1, -1)
    else:
        np.add.at(buckets, heads_k, weights)
        head_order = range(trunc.max_mode + 1)
    vals = np.zeros(basis.grid.n_points)
    for q in head_order:
        vals += buckets[q] * basis.modes[q]
    return ScalarField(basis.grid, vals), cert


def burgers_series(basis: SpectralBasis, u0: ScalarField, t: float,
                   trunc: TruncationSpec, *, unsafe: bool = False,
                   reverse_order: bool = False):
    """Evaluate the Burgers product-mode expansion at time t.

    Returns (field, certificate); certificate semantics match heat_series.
    The per-term profiles are genuine products of mode ratios, so the
    accumulation runs through the compiled kernel when available.
    """
    if trunc.max_mode >= basis.count:
        raise ValidationError(
            f"max_mode {trunc.max_mode} needs at least {trunc.max_mode + 1} "
            f"basis modes, have {basis.count}"
        )
    v0, data, sink_dist = _burgers_data(basis, u0)
    profile = ConvergenceProfile(basis)

    k_bound = data.d_l2 * profile.h1(t) / (data.c0 * basis.m0)
    tau = tau_b(basis, u0)
    tau_t = tau_tilde_b(basis, u0)
    tail_info = absolute_tail_bound(basis, u0, t, trunc)
    heads, tails, orders = _index_arrays(trunc)
    lam = _term_lambdas(basis, heads, tails)
    keep, n_dropped = _apply_lambda_cut(trunc, lam, t)
    cert = _series_certificate(
        "burgers", basis, t, trunc, data, profile, tail_info,
        len(heads) - n_dropped, n_dropped, tau, tau_t, k_bound,
        in_omega_b(basis, u0, t) if t > 0 else False,
    )
    if not cert.valid and not unsafe:
        raise CertificateError(
            f"t={t:g} is not past the validity threshold tau={tau:g}", cert
        )

    cr = data.c / data.c0
    phi_terms = _term_scalars(heads, tails, cr)
    signs = np.where(orders % 2 == 0, -1.0, 1.0)  # (-1)^{m+1}
    weights = 2.0 * np.exp(-lam * t) * phi_terms * signs
    if n_dropped:
        weights = weights[keep]
        heads_s = np.ascontiguousarray(heads[keep])
        tails_s = np.ascontiguousarray(tails[keep])
    else:
        heads_s, tails_s = heads, tails
    if reverse_order:
        heads_s = np.ascontiguousarray(heads_s[::-1])
        tails_s = np.ascontiguousarray(tails_s[::-1])
        weights = np.ascontiguousarray(weights[::-1])
    e0 = basis.modes[0]
    base = np.ascontiguousarray(basis.d_modes / e0)
    ratio = np.ascontiguousarray(basis.modes / e0)
    out = np.zeros(basis.grid.n_points)
    kernels.series_accumulate(
        heads_s, tails_s, np.ascontiguousarray(weights, dtype=np.float64),
        base, ratio, out,
    )
    return ScalarField(basis.grid, out), cert
