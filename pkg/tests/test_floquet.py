import math

import numpy as np
import pytest

from dlab.dichotomy import certify, green_apply
from dlab.errors import NotPeriodic, ResonantForcing
from dlab.floquet import (
    floquet_factor,
    floquet_factor_path,
    monodromy,
    periodic_hyperbolic,
    periodic_solution,
)
from dlab.linalg import matrix_exp, operator_norm_2
from dlab.propagate import transition_matrix
from dlab.system import builtin, parse_system

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def peri():
    return builtin("periodic_scalar")  # a(t) = 0.3 + cos t


@pytest.fixture(scope="module")
def my():
    return builtin("markus_yamabe")


def test_monodromy_requires_declared_period():
    with pytest.raises(NotPeriodic):
        monodromy(builtin("auto_diag_113"))


def test_scalar_multiplier_closed_form(peri):
    data = monodromy(peri, tol=1e-11)
    assert data.omega == pytest.approx(TWO_PI)
    rho = data.multipliers[0]
    assert abs(rho - math.exp(0.6 * math.pi)) <= 1e-6 * abs(rho)
    assert data.d_is_real
    assert data.D[0, 0].real == pytest.approx(0.3, abs=1e-8)
    assert abs(data.D[0, 0].imag) <= 1e-10
    assert data.det_rel_err <= 1e-8


def test_scalar_factor_closed_form(peri):
    data = monodromy(peri, tol=1e-11)
    for t in np.linspace(0.0, TWO_PI, 9):
        Q, D = floquet_factor(peri, t, data=data, tol=1e-11)
        assert Q[0, 0] == pytest.approx(math.exp(math.sin(t)), rel=1e-8)
        assert D[0, 0].real == pytest.approx(0.3, abs=1e-8)


def test_biperiodicity_of_transition(rng, my):
    om = my.period
    for t, s in rng.uniform(-2.0, 2.0, (6, 2)):
        A = transition_matrix(my, t + om, s + om, tol=1e-10).X
        B = transition_matrix(my, t, s, tol=1e-10).X
        assert operator_norm_2(A - B) <= 1e-8 * max(1.0, operator_norm_2(B))


def test_markus_yamabe_multipliers_are_negative_reals(my):
    data = monodromy(my, tol=1e-11)
    rho = sorted(data.multipliers, key=lambda z: abs(z))
    assert rho[1] == pytest.approx(-math.exp(math.pi / 2), rel=1e-7)
    assert rho[0] == pytest.approx(-math.exp(-math.pi), rel=1e-6)
    # log of a negative spectrum is genuinely complex
    assert not data.d_is_real
    assert data.unit_circle_margin == pytest.approx(1 - math.exp(-math.pi),
                                                    rel=1e-6)


def test_factorization_residual_on_period_grid(my):
    data = monodromy(my, tol=1e-11)
    ts = np.linspace(0.0, my.period, 8)
    Qs, D = floquet_factor_path(my, ts, data=data, tol=1e-10)
    for t, Q in zip(ts, Qs):
        X = transition_matrix(my, t, 0.0, tol=1e-10).X
        resid = operator_norm_2(X - Q @ matrix_exp(D * t))
        assert resid <= 1e-8 * max(1.0, operator_norm_2(X))


def test_factor_is_periodic(my):
    data = monodromy(my, tol=1e-11)
    Q0, _ = floquet_factor(my, 0.3, data=data, tol=1e-10)
    Q1, _ = floquet_factor(my, 0.3 + my.period, data=data, tol=1e-10)
    assert operator_norm_2(Q1 - Q0) <= 1e-7


def test_periodic_hyperbolic_classification(peri):
    hyp, margin = periodic_hyperbolic(peri)
    assert hyp
    assert margin == pytest.approx(math.exp(0.6 * math.pi) - 1.0, rel=1e-6)
    neutral = builtin("periodic_scalar(0.0)")
    hyp0, margin0 = periodic_hyperbolic(neutral)
    assert not hyp0
    assert margin0 <= 1e-8


def test_periodic_solution_constant_decay_closed_form():
    sys = parse_system(
        f"dim = 1\nperiod = {TWO_PI!r}\nA = -1\n", name="decay")
    sol = periodic_solution(sys, lambda t: np.array([math.cos(t)]),
                            tol=1e-11)
    # x*(t) = (cos t + sin t) / 2
    assert sol.x0[0] == pytest.approx(0.5, abs=1e-8)
    assert sol.return_defect <= 1e-8
    for t in (0.7, 3.0, 5.5):
        expect = 0.5 * (math.cos(t) + math.sin(t))
        assert sol.trajectory(t)[0] == pytest.approx(expect, abs=1e-7)


def test_periodic_solution_rejects_resonance():
    neutral = builtin("periodic_scalar(0.0)")  # multiplier exactly 1
    with pytest.raises(ResonantForcing):
        periodic_solution(neutral, lambda t: np.array([math.cos(t)]))


def test_periodic_solution_matches_green_bounded_solution(peri):
    # unstable scalar: the bounded full-line solution uses the null
    # projector; it must coincide with the periodic solution
    g = lambda t: np.array([math.cos(t)])
    sol = periodic_solution(peri, g, tol=1e-11)
    cert = certify(peri, [[0.0]], (-8.0, 8.0),
                   alpha_candidates=[0.25, 0.15], K_cap=50.0)
    assert cert.flag == "verified"
    for t in (0.5, 2.0, 4.4):
        sample = green_apply(peri, cert, g, t, tol=1e-8)
        assert sample.value[0] == pytest.approx(sol.trajectory(t)[0],
                                                abs=1e-6)
