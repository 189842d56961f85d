"""Dichotomy certificates, Green kernel, fixed points, noncriticality,
index and the full-line criterion.

Quantitative oracles: the scalar field x' = -x has bounded solution
(cos t + sin t)/2 under forcing cos t, and markus_yamabe has an exact
splitting e1 (growth 1/2) / e2 (decay 1) with K = 1, alpha = 1/2.
"""

import math

import numpy as np
import pytest

from dlab import (
    CertificateRequired,
    DomainError,
    GapViolation,
    IndexUndetermined,
    InvalidInput,
    NumericalInconsistency,
    builtin,
    certify,
    conjugated_system,
    dichotomy_index,
    estimate_splitting,
    full_line_criterion,
    green_apply,
    lipschitz_fixed_point,
    min_principal_angle,
    noncriticality_test,
    noncriticality_threshold,
    parse_system,
    projector_path_defect,
    sup_bound_check,
)
from dlab.propagate import integrate_ivp, transition_path

P_STABLE = np.diag([0.0, 1.0])


@pytest.fixture(scope="module")
def my():
    return builtin("markus_yamabe")


@pytest.fixture(scope="module")
def cert_my(my):
    return certify(my, P_STABLE, (-6.0, 6.0), alpha_candidates=[0.5],
                   K_cap=1.2)


@pytest.fixture(scope="module")
def decay():
    return parse_system("dim = 1\nA = -1\n")


@pytest.fixture(scope="module")
def cert_decay(decay):
    return certify(decay, [[1.0]], (-8.0, 8.0), alpha_candidates=[0.9],
                   K_cap=1.1)


@pytest.fixture(scope="module")
def half_decay():
    return parse_system("dim = 1\ndomain = half-line-plus\nA = -2\n")


@pytest.fixture(scope="module")
def cert_half(half_decay):
    return certify(half_decay, [[1.0]], (0.0, 8.0), alpha_candidates=[1.5],
                   K_cap=1.1)


def bounded_forced(t):
    # bounded solution of x' = -x + cos t
    return 0.5 * (math.cos(t) + math.sin(t))


# ----------------------------------------------------------- certificates

def test_markus_yamabe_certificate(cert_my):
    assert cert_my.flag == "verified"
    assert 1.0 <= cert_my.K <= 1.2
    assert cert_my.alpha == 0.5
    assert cert_my.projector.rank == 1
    assert cert_my.anchor == 0.0
    assert cert_my.residual <= 1e-6
    d = cert_my.to_json_dict()
    assert d["flag"] == "verified" and d["rank"] == 1
    assert d["interval"] == [-6.0, 6.0]


def test_fixed_alpha_above_coefficient_norm_is_noted(my):
    c = certify(my, P_STABLE, (-6.0, 6.0), alpha=8.0)
    assert any("exceeds" in n for n in c.notes)


def test_bisected_alpha_stays_below_coefficient_norm(my):
    c = certify(my, P_STABLE, (-6.0, 6.0))
    assert c.alpha <= c.sup_coeff * (1.0 + 1e-6)


def test_certify_rejections(my):
    with pytest.raises(InvalidInput):
        certify(my, P_STABLE, (2.0, 2.0))
    with pytest.raises(InvalidInput):
        certify(my, P_STABLE, (-1.0, 1.0), grid=[-1.0, 0.0, 3.0])
    with pytest.raises(InvalidInput):
        certify(my, P_STABLE, (-1.0, 1.0), alpha=-0.5)
    with pytest.raises(InvalidInput):
        # every candidate above sup||A||
        certify(my, P_STABLE, (-6.0, 6.0), alpha_candidates=[50.0])


def test_tiny_grid_is_inconclusive(my):
    c = certify(my, P_STABLE, (-1.0, 1.0), grid=[-1.0, 1.0])
    assert c.flag == "inconclusive"
    assert math.isnan(c.K)


def test_wrong_projector_is_violated(my):
    c = certify(my, np.diag([1.0, 0.0]), (-6.0, 6.0),
                alpha_candidates=[0.5], K_cap=1.2)
    assert c.flag == "violated"


def test_bounded_rotation_fails_net_contraction():
    rot = builtin("antisym_exp")
    c = certify(rot, np.eye(2), (-1.0, 1.0))
    assert c.flag == "violated"
    assert any("no net contraction" in n for n in c.notes)


def test_wide_window_raises_numerical_inconsistency():
    a113 = builtin("auto_diag_113")
    with pytest.raises(NumericalInconsistency):
        certify(a113, np.diag([0.0, 0.0, 1.0]), (-17.0, 17.0))


def test_growth_bounds_along_solutions(my, cert_my):
    """|X(t)P xi| <= K e^{-at}|P xi| and |X(t)(I-P)xi| >= e^{at}|(I-P)xi|/K."""
    K, al = cert_my.K, cert_my.alpha
    ts = np.linspace(0.0, 6.0, 7)[1:]
    Xs = transition_path(my, 0.0, ts)
    rng = np.random.default_rng(3)
    for xi in rng.normal(size=(6, 2)):
        p, q = P_STABLE @ xi, (np.eye(2) - P_STABLE) @ xi
        for t, X in zip(ts, Xs):
            assert (np.linalg.norm(X @ p)
                    <= K * math.exp(-al * t) * np.linalg.norm(p) * (1 + 1e-6))
            assert (np.linalg.norm(X @ q)
                    >= math.exp(al * t) * np.linalg.norm(q) / K * (1 - 1e-6))


def test_projector_invariance_and_rank(my, cert_my):
    ts = np.linspace(-6.0, 6.0, 9)
    assert projector_path_defect(my, cert_my, ts) <= 10 * 1e-6
    Xs = transition_path(my, 0.0, ts)
    for X in Xs:
        Pt = X @ P_STABLE @ np.linalg.inv(X)
        assert np.linalg.matrix_rank(Pt, tol=1e-8) == 1


def test_kinematic_similarity_preserves_constants(my, cert_my):
    """Constant orthogonal change of variables keeps (K, alpha)."""
    th = 0.7
    Q = np.array([[math.cos(th), -math.sin(th)],
                  [math.sin(th), math.cos(th)]])
    conj = conjugated_system(my, lambda t: Q, lambda t: np.zeros((2, 2)))
    c = certify(conj, Q.T @ P_STABLE @ Q, (-6.0, 6.0),
                alpha_candidates=[0.5], K_cap=1.2)
    assert c.flag == "verified"
    assert c.alpha == cert_my.alpha
    # ||Q|| = ||Q^-1|| = 1, so K may only move by the sampling tolerance
    assert c.K <= cert_my.K * (1.0 + 1e-6)
    assert projector_path_defect(conj, c, np.linspace(-6, 6, 7)) <= 1e-8


# -------------------------------------------------------------- splitting

def test_splitting_markus_yamabe(my):
    sp = estimate_splitting(my, 10.0)
    assert sp.dim_stable == 1 and sp.dim_unstable == 1
    assert sp.backward_swept
    assert sp.fwd_inconclusive == 0 and sp.bwd_inconclusive == 0
    assert sp.stable_rates[0] == pytest.approx(-1.0, abs=0.02)
    assert sp.unstable_rates[0] == pytest.approx(-0.5, abs=0.02)
    assert sp.basis_cond == pytest.approx(1.0, abs=1e-6)


def test_splitting_constant_diagonal():
    sp = estimate_splitting(builtin("auto_diag_113"), 10.0)
    assert sp.dim_stable == 1 and sp.dim_unstable == 2
    assert np.allclose(sp.stable_rates, -1.0, atol=0.02)
    assert np.allclose(sp.unstable_rates, -1.0, atol=0.02)


def test_splitting_half_line_skips_backward_sweep(half_decay):
    sp = estimate_splitting(half_decay, 8.0)
    assert sp.dim_stable == 1 and sp.dim_unstable == 0
    assert not sp.backward_swept
    assert sp.stable_rates[0] == pytest.approx(-2.0, abs=0.02)


def test_min_principal_angle_cases():
    e1, e2 = np.eye(2)[:, :1], np.eye(2)[:, 1:]
    assert min_principal_angle(e1, e2) == pytest.approx(math.pi / 2)
    assert min_principal_angle(e1, e1) == pytest.approx(0.0, abs=1e-7)
    assert min_principal_angle(e1, np.zeros((2, 0))) == math.pi / 2


# ------------------------------------------------------------ Green kernel

def test_green_matches_closed_form(decay, cert_decay):
    g = lambda t: [math.cos(t)]
    for t in (0.0, 1.3, -2.5):
        s = green_apply(decay, cert_decay, g, t)
        assert abs(s.value[0] - bounded_forced(t)) <= 1e-7
        assert s.window[0] <= t <= s.window[1]


def test_green_truncation_bound_is_honest(decay, cert_decay):
    g = lambda t: [math.cos(t)]
    s = green_apply(decay, cert_decay, g, 0.5, window=(-2.5, 3.5))
    err = abs(s.value[0] - bounded_forced(0.5))
    assert err <= s.truncation_bound + 1e-6
    assert s.window == (-2.5, 3.5)
    with pytest.raises(InvalidInput):
        green_apply(decay, cert_decay, g, 5.0, window=(-2.0, 2.0))


def test_green_requires_verified_full_line(my, half_decay, cert_half):
    bad = certify(my, np.diag([1.0, 0.0]), (-6.0, 6.0),
                  alpha_candidates=[0.5], K_cap=1.2)
    with pytest.raises(CertificateRequired):
        green_apply(my, bad, lambda t: [1.0, 0.0], 0.0)
    with pytest.raises(DomainError):
        green_apply(half_decay, cert_half, lambda t: [1.0], 2.0)


def test_sup_bound_check(decay, cert_decay):
    rep = sup_bound_check(decay, cert_decay, lambda t: [math.cos(t)],
                          [0.0, 1.0, 2.2])
    assert rep.ok
    assert rep.worst_ratio <= 1.0
    assert rep.bound == pytest.approx(2.0 * cert_decay.K / cert_decay.alpha,
                                      rel=1e-3)


# ------------------------------------------------------------- fixed point

def test_fixed_point_reproduces_linear_forcing(decay, cert_decay):
    h = lambda t, x: np.array([0.2 * math.cos(t)])
    fp = lipschitz_fixed_point(decay, cert_decay, h, 0.01,
                               grid=np.linspace(-4.0, 4.0, 33))
    errs = [abs(fp.values[i, 0] - 0.2 * bounded_forced(t))
            for i, t in enumerate(fp.times)]
    assert max(errs) <= 1e-6
    assert fp.iterations <= 4
    assert fp.q == pytest.approx(2 * cert_decay.K * 0.01 / cert_decay.alpha)


def test_fixed_point_solves_the_quasilinear_field(decay, cert_decay):
    """Forward integration of the perturbed field tracks the fixed point."""
    h = lambda t, x: np.array([0.1 * math.sin(x[0]) + 0.2 * math.cos(t)])
    fp = lipschitz_fixed_point(decay, cert_decay, h, 0.1,
                               grid=np.linspace(-4.0, 4.0, 33), tol=1e-8)
    quasi = parse_system(
        "dim = 1\nA = -1\nf = 0.1*sin(y1) + 0.2*cos(t)\n"
        "mu = 0.3\ngamma = 0.1\n")
    tr = integrate_ivp(quasi, fp.values[0], fp.times[0], fp.times[-1],
                       tol=1e-11)
    errs = [abs(tr(t)[0] - fp.values[i, 0]) for i, t in enumerate(fp.times)]
    assert max(errs) <= 5e-4


def test_fixed_point_guards(decay, cert_decay, half_decay, cert_half):
    h = lambda t, x: np.array([0.5 * math.tanh(x[0])])
    with pytest.raises(GapViolation):
        lipschitz_fixed_point(decay, cert_decay, h, 0.5)
    with pytest.raises(DomainError):
        lipschitz_fixed_point(half_decay, cert_half, h, 0.01)
    with pytest.raises(InvalidInput):
        # non-uniform output grid
        lipschitz_fixed_point(decay, cert_decay, h, 0.01,
                              grid=[-1.0, 0.0, 2.0])


# ---------------------------------------------------------- noncriticality

def test_noncriticality_threshold_formula():
    for K, al, T in [(1.0, 0.5, 2.0), (2.0, 1.0, 3.0), (1.5, 0.25, 8.0)]:
        psi = noncriticality_threshold(K, al, T)
        assert psi == pytest.approx(math.exp(al * T) / K
                                    - K * math.exp(-al * T))


def test_noncriticality_consistent_with_certificate(my, cert_my):
    """theta = 2/Psi(T) from the certificate must pass; a norm-preserving
    flow must fail the same theta."""
    T = 2.0
    theta = 2.0 / noncriticality_threshold(cert_my.K, cert_my.alpha, T)
    assert theta < 1.0
    rep = noncriticality_test(my, T, theta, np.linspace(-2.0, 2.0, 9))
    assert rep.ok and rep.margin <= theta
    rot = builtin("antisym_exp")
    rep2 = noncriticality_test(rot, T, theta, np.linspace(-2.0, 2.0, 9))
    assert not rep2.ok
    assert rep2.margin == pytest.approx(1.0, abs=1e-6)


def test_noncriticality_guards(my, half_decay):
    with pytest.raises(InvalidInput):
        noncriticality_test(my, -1.0, 0.9, [0.0])
    with pytest.raises(DomainError):
        # window [t-T, t+T] leaves the half line
        noncriticality_test(half_decay, 2.0, 0.9, [1.0])


# ------------------------------------------------------ index / full line

def test_dichotomy_index_values(my):
    assert dichotomy_index(builtin("scalar_switch"), 10.0) == 1
    assert dichotomy_index(my, 10.0) == 0
    assert dichotomy_index(builtin("auto_diag_113"), 10.0) == 0


def test_dichotomy_index_guards(half_decay):
    with pytest.raises(IndexUndetermined):
        dichotomy_index(builtin("antisym_exp"), 6.0)
    with pytest.raises(DomainError):
        dichotomy_index(half_decay, 6.0)


def test_full_line_criterion_passes(my):
    for s in (my, builtin("auto_diag_113")):
        rep = full_line_criterion(s, 10.0)
        assert rep.ok, rep.reasons
        assert rep.index == 0
        assert rep.angle > 1.0
        assert rep.cert_plus.flag == "verified"
        assert rep.cert_minus.flag == "verified"


def test_full_line_criterion_rejects_overlapping_families():
    rep = full_line_criterion(builtin("scalar_switch"), 10.0)
    assert not rep.ok
    assert rep.index == 1
    assert any("index" in r for r in rep.reasons)
    assert any("angle" in r for r in rep.reasons)
