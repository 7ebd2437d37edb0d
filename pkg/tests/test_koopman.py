"""Decomposition layer: indices, eigen-functionals, certificates, bounds."""

import math

import numpy as np
import pytest

from helpers import spanned_p1
from kblab import flows, koopman
from kblab.cole_hopf import State, StateTag, cole, hopf
from kblab.errors import (CertificateError, SizeGuardError, ValidationError)
from kblab.grid import ScalarField
from kblab.koopman import (ALWAYS_VALID, ConvergenceProfile, MultiIndex,
                           SeriesCertificate, TruncationSpec,
                           absolute_tail_bound, burgers_series,
                           enumerate_indices, heat_series, in_omega_b,
                           in_omega_n, lambda_of, mode_a, mode_b, phi, psi,
                           sigma, tau_b, tau_n, tau_tilde_b, tau_tilde_n,
                           verify_estimates)


# ---------------------------------------------------------------------------
# index bookkeeping
# ---------------------------------------------------------------------------


def test_enumeration_order_q2_m1():
    got = enumerate_indices(TruncationSpec(2, 1))
    want = [
        MultiIndex(0), MultiIndex(0, (1,)), MultiIndex(0, (2,)),
        MultiIndex(1), MultiIndex(1, (1,)), MultiIndex(1, (2,)),
        MultiIndex(2), MultiIndex(2, (1,)), MultiIndex(2, (2,)),
    ]
    assert got == want


def test_enumeration_m0():
    assert enumerate_indices(TruncationSpec(1, 0)) == [mi for mi in
                                                       (MultiIndex(0),
                                                        MultiIndex(1))]


def test_count_formula():
    for q, m in ((1, 0), (2, 1), (3, 2), (5, 3)):
        spec = TruncationSpec(q, m)
        assert spec.count() == len(enumerate_indices(spec))
    assert TruncationSpec(3, 2).count() == 52


def test_size_guard():
    with pytest.raises(SizeGuardError):
        enumerate_indices(TruncationSpec(100, 4))


def test_multi_index_validation():
    with pytest.raises(ValidationError):
        MultiIndex(-1)
    with pytest.raises(ValidationError):
        MultiIndex(2, (0,))
    with pytest.raises(ValidationError):
        TruncationSpec(0, 1)
    with pytest.raises(ValidationError):
        TruncationSpec(4, -1)
    with pytest.raises(ValidationError):
        TruncationSpec(4, 2, lambda_cut=1.5)


def test_lambda_values(basis_const_small):
    b = basis_const_small
    assert lambda_of(b, MultiIndex(0)) == 0.0
    gaps = b.mu - b.mu[0]
    nu = MultiIndex(2, (1, 1))
    assert lambda_of(b, nu) == pytest.approx(gaps[2] + 2 * gaps[1], rel=1e-12)
    # constant potential: the ladder is pi^2 (q0^2 + sum q_i^2)
    assert lambda_of(b, nu) == pytest.approx(
        math.pi**2 * (4 + 1 + 1), rel=1e-3)


def test_lambda_zero_only_at_root(basis_small):
    for nu in enumerate_indices(TruncationSpec(4, 2)):
        lam = lambda_of(basis_small, nu)
        if nu.q0 == 0 and nu.order == 0:
            assert lam == 0.0
        else:
            gap1 = basis_small.mu[1] - basis_small.mu[0]
            assert lam >= gap1 * (1.0 - 1e-12)


def test_index_range_check(basis_small):
    with pytest.raises(ValidationError):
        lambda_of(basis_small, MultiIndex(basis_small.count))
    with pytest.raises(ValidationError):
        mode_b(basis_small, MultiIndex(0, (basis_small.count,)))


# ---------------------------------------------------------------------------
# eigen-functionals and product modes
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def two_mode_state(basis_const_small):
    # a e0 + b e1 with the mass renormalized away: psi and sigma then have
    # closed forms in (a, b)
    b = basis_const_small
    vals = 1.0 * b.modes[0] + 0.3 * b.modes[1]
    return State(StateTag.P_PLUS, ScalarField(b.grid, vals))


def test_psi_sigma_closed_forms(basis_const_small, two_mode_state):
    b = basis_const_small
    vals = two_mode_state.values / b.grid.integrate_values(two_mode_state.values)
    v1 = State(StateTag.P_ONE, ScalarField(b.grid, vals))
    assert psi(b, MultiIndex(0), v1) == pytest.approx(1.0, abs=1e-10)
    assert psi(b, MultiIndex(1), v1) == pytest.approx(0.3, abs=1e-8)
    assert psi(b, MultiIndex(1, (1,)), v1) == pytest.approx(0.09, abs=1e-8)
    # sigma is the plain product, so the two-mode profile gives b^2 at (1;1)
    assert sigma(b, MultiIndex(1, (1,)), two_mode_state) == pytest.approx(
        0.09, abs=1e-8)
    assert sigma(b, MultiIndex(0), two_mode_state) == pytest.approx(
        1.0, abs=1e-8)


def test_psi_requires_unit_mass(basis_const_small, two_mode_state):
    with pytest.raises(ValidationError):
        psi(basis_const_small, MultiIndex(1), two_mode_state)


def test_phi_matches_psi_after_transform(basis_const):
    # phi is scale-free, so any positive multiple of the profile agrees
    b = basis_const
    vals = 1.0 * b.modes[0] + 0.3 * b.modes[1]
    u0 = cole(ScalarField(b.grid, 2.0 * vals))
    assert phi(b, MultiIndex(1), u0) == pytest.approx(0.3, abs=1e-5)
    assert phi(b, MultiIndex(1, (1,)), u0) == pytest.approx(0.09, abs=1e-5)


def test_mode_b_root_is_sink(basis_small):
    root = mode_b(basis_small, MultiIndex(0))
    sink = flows.sink_heat(basis_small)
    assert np.abs(root.values - sink.values).max() <= 1e-12


def test_mode_b_const_potential_tails_vanish(basis_const_small):
    # constant potential has p_q = 0 for q >= 1, killing every tail term
    out = mode_b(basis_const_small, MultiIndex(2, (1,)))
    assert np.abs(out.values).max() <= 1e-6


def test_mode_a_root_is_sink(basis_small):
    root = mode_a(basis_small, MultiIndex(0))
    sink = flows.sink_burgers(basis_small)
    assert np.abs(root.values - sink.values).max() <= 1e-13


def test_mode_a_const_potential_closed_form(basis_const):
    b = basis_const
    out = mode_a(b, MultiIndex(1))
    want = 2.0 * math.sqrt(2.0) * np.pi * np.sin(np.pi * b.grid.nodes)
    assert np.abs(out.values - want).max() <= 0.05


def test_eigen_relations(basis_small):
    b = basis_small
    rng = np.random.default_rng(41)
    v0 = spanned_p1(b, rng)
    u0 = cole(v0)
    t = 0.3
    v_nonlin = flows.nonlinear_heat_flow(b, v0, t)
    v_heat = State(StateTag.P_PLUS, flows.heat_flow(b, v0, t))
    u_t = flows.burgers_flow(b, u0, t)
    for nu in enumerate_indices(TruncationSpec(4, 2)):
        lam = lambda_of(b, nu)
        total_mu = float(b.mu[nu.q0] + sum(b.mu[q] for q in nu.tail))
        before = psi(b, nu, v0)
        after = psi(b, nu, v_nonlin)
        assert abs(after - math.exp(-lam * t) * before) <= \
            1e-8 * (1.0 + abs(before))
        before = sigma(b, nu, v0)
        after = sigma(b, nu, v_heat)
        assert abs(after - math.exp(-total_mu * t) * before) <= \
            1e-8 * (1.0 + abs(before))
        before = phi(b, nu, u0)
        after = phi(b, nu, u_t)
        assert abs(after - math.exp(-lam * t) * before) <= \
            1e-5 * (1.0 + abs(before))


# ---------------------------------------------------------------------------
# thresholds
# ---------------------------------------------------------------------------


def test_tau_sentinels(basis_small, basis_const_small):
    sink_v = flows.sink_heat(basis_small)
    assert tau_n(basis_small, sink_v) == ALWAYS_VALID
    assert tau_b(basis_small, flows.sink_burgers(basis_small)) == ALWAYS_VALID
    # constant potential: 1 = i0 e0 exactly, so every state is covered
    rng = np.random.default_rng(42)
    v0 = spanned_p1(basis_const_small, rng)
    assert tau_n(basis_const_small, v0) == ALWAYS_VALID


def test_tau_b_positive_off_sink(basis_linear):
    x = basis_linear.grid.nodes
    s0 = flows.sink_burgers(basis_linear)
    u0 = ScalarField(basis_linear.grid, s0.values + 0.3 * np.sin(np.pi * x))
    tb = tau_b(basis_linear, u0)
    assert 0.0 < tb < 0.1
    assert in_omega_b(basis_linear, u0, 2.0 * tb)
    assert not in_omega_b(basis_linear, u0, 0.5 * tb)
    with pytest.raises(ValidationError):
        in_omega_b(basis_linear, u0, 0.0)


def test_tau_tilde_b_defining_equation(basis_linear):
    x = basis_linear.grid.nodes
    s0 = flows.sink_burgers(basis_linear)
    u0 = ScalarField(basis_linear.grid, s0.values + 0.3 * np.sin(np.pi * x))
    tt = tau_tilde_b(basis_linear, u0)
    assert tt != ALWAYS_VALID and tt > 0.0
    _, data, _ = koopman._burgers_data(basis_linear, u0)
    prof = ConvergenceProfile(basis_linear)
    assert prof.h5(tt) == pytest.approx(basis_linear.m0**2 / data.d_l2,
                                        rel=1e-5)


def test_in_omega_n_matches_tau(basis_small):
    rng = np.random.default_rng(43)
    v0 = spanned_p1(basis_small, rng)
    assert in_omega_n(basis_small, v0) == (tau_n(basis_small, v0) < 0.0)
    # mildly perturbed positive states sit inside the valid set
    assert in_omega_n(basis_small, v0)


def test_tau_tilde_n_sentinel_or_positive(basis_small):
    rng = np.random.default_rng(44)
    v0 = spanned_p1(basis_small, rng)
    tt = tau_tilde_n(basis_small, v0)
    assert tt == ALWAYS_VALID or tt > 0.0


# ---------------------------------------------------------------------------
# convergence profile
# ---------------------------------------------------------------------------


def test_envelopes_decrease(basis_small):
    prof = ConvergenceProfile(basis_small)
    ts = [0.01, 0.05, 0.2, 1.0, 5.0]
    for fn in (prof.h1, prof.h2, prof.h4, prof.h5, prof.t_hat, prof.s1):
        vals = [fn(t) for t in ts]
        assert all(v > 0.0 for v in vals)
        assert all(a > b for a, b in zip(vals, vals[1:]))
    for fn in (prof.h1, prof.h2, prof.h5, prof.t_hat, prof.s1):
        assert fn(40.0) <= 1e-10
    # h4 keeps its ground term (gap zero), so it floors at 1 + mu0
    assert prof.h4(40.0) == pytest.approx(1.0 + basis_small.mu[0], rel=1e-10)


def test_h1_diverges_at_zero(basis_small):
    prof = ConvergenceProfile(basis_small)
    assert math.isinf(prof.h1(0.0))


def test_h1_dominates_first_mode(basis_small):
    b = basis_small
    prof = ConvergenceProfile(b)
    t = 0.3
    gap1 = b.mu[1] - b.mu[0]
    lower = math.sqrt(2.0) * math.sqrt(1.0 + b.mu[1]) * math.exp(-gap1 * t)
    assert prof.h1(t) >= lower


# ---------------------------------------------------------------------------
# decay estimates
# ---------------------------------------------------------------------------


def test_verify_estimates_hold(basis_small):
    rng = np.random.default_rng(45)
    for _ in range(5):
        v0 = spanned_p1(basis_small, rng)
        rep = verify_estimates(basis_small, v0, [0.05, 0.1, 0.5, 1.0, 2.0])
        assert len(rep.samples) == 5
        for s in rep.samples:
            assert s.mean_lhs <= s.mean_rhs * (1.0 + 1e-6) + 1e-8
            assert s.sup_lhs <= s.sup_rhs * (1.0 + 1e-6) + 1e-8
    d = rep.to_json_dict()
    assert set(d["samples"][0]) == {"t", "mean_lhs", "mean_rhs", "mean_margin",
                                    "sup_lhs", "sup_rhs", "sup_margin"}


def test_verify_estimates_rejects_l2_state(basis_small):
    raw = State(StateTag.L2,
                ScalarField(basis_small.grid, basis_small.modes[1]))
    with pytest.raises(ValidationError):
        verify_estimates(basis_small, raw, [0.1])


# ---------------------------------------------------------------------------
# tail bounds
# ---------------------------------------------------------------------------


def test_tail_bound_shrinks_with_truncation(basis_linear):
    x = basis_linear.grid.nodes
    s0 = flows.sink_burgers(basis_linear)
    u0 = ScalarField(basis_linear.grid, s0.values + 0.05 * np.sin(np.pi * x))
    t = 0.5
    bounds = []
    for q, m in ((2, 1), (6, 2), (10, 3)):
        bound, ok, ratio = absolute_tail_bound(basis_linear, u0, t,
                                               TruncationSpec(q, m))
        assert ok and 0.0 <= ratio < 1.0
        bounds.append(bound)
    assert bounds[0] > bounds[1] > bounds[2] > 0.0
    late, ok, _ = absolute_tail_bound(basis_linear, u0, 5.0,
                                      TruncationSpec(6, 2))
    assert ok and late <= 1e-8


def test_tail_bound_divergent_at_t0(basis_linear):
    x = basis_linear.grid.nodes
    s0 = flows.sink_burgers(basis_linear)
    u0 = ScalarField(basis_linear.grid, s0.values + 0.3 * np.sin(np.pi * x))
    bound, ok, ratio = absolute_tail_bound(basis_linear, u0, 0.0,
                                           TruncationSpec(6, 2))
    assert not ok
    assert math.isinf(bound)


def test_tail_bound_const_potential_heat(basis_const):
    # constant potential: the heat-side majorant collapses (p_q = 0)
    rng = np.random.default_rng(46)
    v0 = spanned_p1(basis_const, rng)
    bound, ok, ratio = absolute_tail_bound(basis_const, v0, 0.5,
                                           TruncationSpec(6, 2))
    assert ok
    assert abs(ratio) <= 1e-6
    assert bound <= 1e-4


def test_tail_bound_rejects_bad_state(basis_small):
    with pytest.raises(ValidationError):
        absolute_tail_bound(basis_small, np.ones(5), 0.5, TruncationSpec(4, 2))


# ---------------------------------------------------------------------------
# series with certificates
# ---------------------------------------------------------------------------


def test_heat_series_sink_exact(basis_small):
    sink = flows.sink_heat(basis_small)
    out, cert = heat_series(basis_small, sink, 0.4, TruncationSpec(6, 2))
    assert np.abs(out.values - sink.values).max() <= 1e-8
    assert cert.tau == ALWAYS_VALID
    assert cert.valid


def test_heat_series_const_potential_exact(basis_const):
    # constant potential: order-zero truncation reproduces the flow exactly
    rng = np.random.default_rng(47)
    v0 = spanned_p1(basis_const, rng)
    t = 0.3
    out, cert = heat_series(basis_const, v0, t,
                            TruncationSpec(basis_const.count - 1, 0))
    ref = flows.nonlinear_heat_flow(basis_const, v0, t)
    assert np.abs(out.values - ref.values).max() <= 1e-6
    assert cert.tau == ALWAYS_VALID


def test_heat_series_matches_flow(basis_linear):
    rng = np.random.default_rng(48)
    v0 = spanned_p1(basis_linear, rng)
    t = 0.5
    out, cert = heat_series(basis_linear, v0, t, TruncationSpec(10, 3))
    ref = flows.nonlinear_heat_flow(basis_linear, v0, t)
    assert np.abs(out.values - ref.values).max() <= 5e-3
    assert cert.kind == "heat"
    assert cert.valid and cert.absolutely_convergent


def test_burgers_series_sink_exact(basis_linear):
    s0 = flows.sink_burgers(basis_linear)
    out, cert = burgers_series(basis_linear, s0, 0.7, TruncationSpec(6, 2))
    assert np.abs(out.values - s0.values).max() <= 1e-4
    assert cert.tau == ALWAYS_VALID


def test_burgers_series_matches_flow(basis_linear):
    x = basis_linear.grid.nodes
    s0 = flows.sink_burgers(basis_linear)
    u0 = ScalarField(basis_linear.grid, s0.values + 0.05 * np.sin(np.pi * x))
    t = 0.5
    out, cert = burgers_series(basis_linear, u0, t, TruncationSpec(10, 3))
    ref = flows.burgers_flow(basis_linear, u0, t)
    assert np.abs(out.values - ref.values).max() <= 1e-2
    assert cert.valid and cert.absolutely_convergent
    assert cert.tail_bound < 1e-8


def test_burgers_series_truncation_ladder(basis_linear):
    # successive truncations differ by no more than their tail budgets
    x = basis_linear.grid.nodes
    s0 = flows.sink_burgers(basis_linear)
    u0 = ScalarField(basis_linear.grid, s0.values + 0.05 * np.sin(np.pi * x))
    t = 0.5
    prev_field, prev_cert = None, None
    for q, m in ((2, 1), (6, 2), (10, 3)):
        field, cert = burgers_series(basis_linear, u0, t, TruncationSpec(q, m))
        if prev_field is not None:
            gap = np.abs(field.values - prev_field.values).max()
            assert gap <= prev_cert.tail_bound + cert.tail_bound + 1e-10
        prev_field, prev_cert = field, cert


def test_burgers_series_certificate_gate(basis_linear):
    x = basis_linear.grid.nodes
    s0 = flows.sink_burgers(basis_linear)
    u0 = ScalarField(basis_linear.grid, s0.values + 0.3 * np.sin(np.pi * x))
    tb = tau_b(basis_linear, u0)
    with pytest.raises(CertificateError) as exc:
        burgers_series(basis_linear, u0, 0.5 * tb, TruncationSpec(6, 2))
    cert = exc.value.certificate
    assert cert is not None and not cert.valid
    assert cert.kind == "burgers"
    # unsafe mode still returns the field plus the failing certificate
    field, cert2 = burgers_series(basis_linear, u0, 0.5 * tb,
                                  TruncationSpec(6, 2), unsafe=True)
    assert not cert2.valid
    assert field.values.shape == (basis_linear.grid.n_points,)


def test_series_order_invariance(basis_linear):
    x = basis_linear.grid.nodes
    s0 = flows.sink_burgers(basis_linear)
    u0 = ScalarField(basis_linear.grid, s0.values + 0.05 * np.sin(np.pi * x))
    t = 0.6
    fwd, cert = burgers_series(basis_linear, u0, t, TruncationSpec(8, 3))
    rev, _ = burgers_series(basis_linear, u0, t, TruncationSpec(8, 3),
                            reverse_order=True)
    assert np.abs(fwd.values - rev.values).max() <= cert.tail_bound + 1e-10
    v0 = hopf(u0)
    fwd_h, cert_h = heat_series(basis_linear, v0, t, TruncationSpec(8, 3))
    rev_h, _ = heat_series(basis_linear, v0, t, TruncationSpec(8, 3),
                           reverse_order=True)
    assert np.abs(fwd_h.values - rev_h.values).max() <= \
        cert_h.tail_bound + 1e-10


def test_lambda_cut_drops_terms(basis_linear):
    x = basis_linear.grid.nodes
    s0 = flows.sink_burgers(basis_linear)
    u0 = ScalarField(basis_linear.grid, s0.values + 0.05 * np.sin(np.pi * x))
    t = 0.5
    full, _ = burgers_series(basis_linear, u0, t, TruncationSpec(8, 2))
    cut, cert = burgers_series(basis_linear, u0, t,
                               TruncationSpec(8, 2, lambda_cut=1e-3))
    assert cert.truncation["n_dropped"] > 0
    assert cert.truncation["n_terms"] + cert.truncation["n_dropped"] == \
        TruncationSpec(8, 2).count()
    assert np.abs(cut.values - full.values).max() <= cert.tail_bound + 1e-10


def test_series_needs_enough_modes(basis_small):
    sink = flows.sink_heat(basis_small)
    with pytest.raises(ValidationError):
        heat_series(basis_small, sink, 0.5,
                    TruncationSpec(basis_small.count, 1))


def test_certificate_json_encoding():
    cert = SeriesCertificate(
        kind="heat", t=0.5, tau=ALWAYS_VALID, tau_tilde=0.12, k_bound=0.3,
        eps=float("inf"), absolutely_convergent=False,
        tail_bound=float("inf"), in_omega=True, c1=math.sqrt(2.0),
        truncation={"max_mode": 4}, valid=True)
    d = cert.to_json_dict()
    assert d["tau_n"] == "ALWAYS_VALID"
    assert d["eps"] == "INF"
    assert d["tail_bound"] == "INF"
    assert d["tau_tilde_n"] == 0.12
    cert_b = SeriesCertificate(
        kind="burgers", t=0.5, tau=0.01, tau_tilde=0.02, k_bound=1.0,
        eps=0.5, absolutely_convergent=True, tail_bound=1e-6, in_omega=True,
        c1=math.sqrt(2.0), truncation={}, valid=True)
    db = cert_b.to_json_dict()
    assert db["tau_b"] == 0.01 and db["tau_tilde_b"] == 0.02
