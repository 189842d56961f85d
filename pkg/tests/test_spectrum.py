"""QR triangularization, window growth averages, spectral intervals,
and shifted-system verdicts.

auto_diag_113 is the main oracle: constant diag(1, 1, -1) has spectrum
{-1} u {1} with multiplicities (1, 2) and stable ranks 0 / 1 / 3 below,
between, and above the intervals.
"""

import math

import numpy as np
import pytest

from dlab import (
    DomainError,
    HorizonTooShort,
    InvalidInput,
    UnboundedCoefficients,
    bounded_growth_fit,
    builtin,
    conjugated_system,
    eval_coeff,
    fullline_spectrum,
    halfline_spectrum,
    parse_system,
    perron_triangularize,
    rank_step_function,
    scalar_bohl,
    shifted_dichotomy_test,
    shifted_system,
)


@pytest.fixture(scope="module")
def a113():
    return builtin("auto_diag_113")


@pytest.fixture(scope="module")
def rep113(a113):
    return halfline_spectrum(a113, 40.0, 8.0)


# ---------------------------------------------------------- triangularize

def test_triangularize_constant_diagonal(a113):
    red = perron_triangularize(a113, 0.0, 5.0, h=0.1)
    assert np.allclose(red.log_diag[-1], [5.0, 5.0, -5.0], atol=1e-10)
    assert red.offdiag_bound <= 1e-12
    assert np.allclose(red.step_rates, [[1.0, 1.0, -1.0]], atol=1e-10)


def test_triangularize_fixes_triangular_system():
    """An already upper-triangular coefficient keeps the identity frame."""
    tri = builtin("coppel_counterexample")
    red = perron_triangularize(tri, 0.0, 3.0, h=0.05)
    for k in range(len(red.grid)):
        assert np.allclose(red.Q[k], np.eye(2), atol=1e-9)
        assert np.allclose(red.B_nodes[k], eval_coeff(tri, red.grid[k]),
                           atol=1e-9)


def test_triangularize_volume_identity():
    """sum_i log_diag[k, i] equals the trace integral (Liouville)."""
    my = builtin("markus_yamabe")
    red = perron_triangularize(my, 0.0, 4.0, h=0.05)
    # tr A = -1/2 for this coefficient at every t
    traces = np.array([np.trace(eval_coeff(my, t)) for t in red.grid])
    assert np.allclose(traces, -0.5, atol=1e-12)
    assert np.allclose(red.log_diag.sum(axis=1), -0.5 * red.grid, atol=1e-8)


def test_triangularize_guards(a113):
    with pytest.raises(InvalidInput):
        perron_triangularize(a113, 1.0, 1.0)
    with pytest.raises(InvalidInput):
        perron_triangularize(a113, 0.0, 1.0, Q0=np.eye(2))
    with pytest.raises(InvalidInput):
        perron_triangularize(a113, 0.0, 1.0, Q0=2.0 * np.eye(3))


# ------------------------------------------------------------ scalar_bohl

def test_bohl_constant_rate():
    ts = np.linspace(0.0, 20.0, 401)
    p = scalar_bohl(ts, np.full_like(ts, 0.5), 4.0)
    assert p.beta_minus == pytest.approx(0.5, abs=1e-12)
    assert p.beta_plus == pytest.approx(0.5, abs=1e-12)
    assert p.unbounded is None
    assert p.start_range[0] == pytest.approx(10.0)
    assert p.start_range[1] == pytest.approx(16.0)


def test_bohl_periodic_rate_full_window():
    ts = np.linspace(0.0, 8 * math.pi, 1601)
    p = scalar_bohl(ts, np.sin(ts), 2 * math.pi)
    assert abs(p.beta_minus) <= 1e-3 and abs(p.beta_plus) <= 1e-3


def test_bohl_cumulative_matches_rates():
    ts = np.linspace(0.0, 20.0, 801)
    vals = 0.3 + 0.1 * np.cos(ts)
    I = np.concatenate([[0.0], np.cumsum(
        0.5 * np.diff(ts) * (vals[1:] + vals[:-1]))])
    a = scalar_bohl(ts, vals, 5.0)
    b = scalar_bohl(ts, I, 5.0, cumulative=True)
    assert a.beta_minus == pytest.approx(b.beta_minus, abs=1e-12)
    assert a.beta_plus == pytest.approx(b.beta_plus, abs=1e-12)


def test_bohl_drift_marks_unbounded():
    ts = np.linspace(0.0, 40.0, 801)
    p = scalar_bohl(ts, 0.2 * ts, 4.0)
    assert p.unbounded == "+inf"
    q = scalar_bohl(ts, -0.2 * ts, 4.0)
    assert q.unbounded == "-inf"


def test_bohl_cap_marks_unbounded():
    ts = np.linspace(0.0, 20.0, 401)
    p = scalar_bohl(ts, np.full_like(ts, 2e3), 4.0)
    assert p.unbounded == "+inf"


def test_bohl_guards():
    ts = np.linspace(0.0, 10.0, 101)
    with pytest.raises(InvalidInput):
        scalar_bohl(ts, ts[:-1], 2.0)
    with pytest.raises(InvalidInput):
        scalar_bohl([0.0, 1.0], [0.0, 1.0], 0.5)
    with pytest.raises(InvalidInput):
        scalar_bohl(ts, ts, -1.0)
    with pytest.raises(HorizonTooShort):
        scalar_bohl(ts, ts, 8.0)


# ------------------------------------------------------- half-line spectrum

def test_spectrum_constant_diagonal(rep113):
    assert len(rep113.intervals) == 2
    (l0, h0), (l1, h1) = rep113.intervals
    assert abs(l0 + 1) <= 0.05 and abs(h0 + 1) <= 0.05
    assert abs(l1 - 1) <= 0.05 and abs(h1 - 1) <= 0.05
    assert rep113.multiplicities == [1, 2]
    assert not rep113.unbounded_left and not rep113.unbounded_right


def test_spectrum_gap_ranks(rep113):
    ranks = [r for (_, _, r) in rep113.gaps]
    assert ranks == [0, 1, 3]
    # gaps tile the complement of the intervals
    assert rep113.gaps[0][0] == -math.inf
    assert rep113.gaps[-1][1] == math.inf


def test_spectrum_json_round(rep113):
    d = rep113.to_json_dict()
    assert d["multiplicities"] == [1, 2]
    assert d["method"] == "qr-bohl"
    assert len(d["intervals"]) == 2 and len(d["gaps"]) == 3


def test_spectrum_contained_in_growth_bound(a113, rep113):
    """Intervals live inside the exponential sandwich of the flow."""
    fit = bounded_growth_fit(a113, (0.0, 8.0), mode="both")
    lo = -fit.alpha - 0.1
    hi = fit.alpha + 0.1
    for (a, b) in rep113.intervals:
        assert lo <= a <= b <= hi


def test_spectrum_nearly_autonomous_scalar():
    rep = halfline_spectrum(builtin("scalar_arctan"), 40.0, 8.0)
    assert len(rep.intervals) == 1
    assert -0.05 <= rep.intervals[0][0] <= rep.intervals[0][1] <= 0.05


def test_spectrum_unbounded_direction_is_flagged():
    rep = halfline_spectrum(builtin("scalar_linear_t"), 40.0, 8.0)
    assert rep.unbounded_right
    assert rep.intervals[-1][1] == math.inf
    assert any("drift upward" in w for w in rep.warnings)
    # the only gap sits below the spectrum, where nothing is stable
    assert rep.gaps == [(-math.inf, rep.intervals[-1][0], 0)]


def test_spectrum_refuses_growing_coefficients():
    with pytest.raises(UnboundedCoefficients):
        halfline_spectrum(builtin("antisym_exp"), 40.0, 8.0)


def test_spectrum_merge_eps_collapses(a113):
    rep = halfline_spectrum(a113, 40.0, 8.0, merge_eps=5.0)
    assert len(rep.intervals) == 1
    assert rep.multiplicities == [3]
    assert [r for (_, _, r) in rep.gaps] == [0, 3]


def test_spectrum_guards(a113):
    with pytest.raises(HorizonTooShort):
        halfline_spectrum(a113, 10.0, 8.0)
    minus = parse_system("dim = 1\ndomain = half-line-minus\nA = -1\n")
    with pytest.raises(DomainError):
        halfline_spectrum(minus, 10.0, 2.0)
    plus = parse_system("dim = 1\ndomain = half-line-plus\nA = -1\n")
    with pytest.raises(DomainError):
        fullline_spectrum(plus, 10.0, 2.0)


# -------------------------------------------------------------- full line

def test_fullline_spectrum_markus_yamabe():
    rep = fullline_spectrum(builtin("markus_yamabe"), 20.0, 4.0)
    assert len(rep.intervals) == 2
    assert rep.intervals[0][0] == pytest.approx(-1.0, abs=0.05)
    assert rep.intervals[0][1] == pytest.approx(-1.0, abs=0.05)
    assert rep.intervals[1][0] == pytest.approx(0.5, abs=0.05)
    assert rep.intervals[1][1] == pytest.approx(0.5, abs=0.05)
    assert rep.method == "qr-bohl-union"
    assert any("union" in w for w in rep.warnings)


# ---------------------------------------------------- transformed spectra

def test_spectrum_shift_equivariance(a113):
    """A - 0.7 I moves every endpoint down by 0.7."""
    base = halfline_spectrum(a113, 20.0, 4.0)
    rep = halfline_spectrum(shifted_system(a113, 0.7), 20.0, 4.0)
    assert len(rep.intervals) == len(base.intervals)
    for (a, b), (c, d) in zip(base.intervals, rep.intervals):
        assert c == pytest.approx(a - 0.7, abs=0.1)
        assert d == pytest.approx(b - 0.7, abs=0.1)


def test_spectrum_kinematic_invariance(a113):
    """A bounded rotating frame does not move the intervals."""
    def Q(t):
        th = 0.3 * math.sin(t)
        c, s = math.cos(th), math.sin(th)
        return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])

    def Qdot(t):
        th = 0.3 * math.sin(t)
        dth = 0.3 * math.cos(t)
        c, s = math.cos(th), math.sin(th)
        return dth * np.array([[-s, 0.0, -c], [0.0, 0.0, 0.0],
                               [c, 0.0, -s]])

    base = halfline_spectrum(a113, 20.0, 4.0)
    rep = halfline_spectrum(conjugated_system(a113, Q, Qdot), 20.0, 4.0)
    assert len(rep.intervals) == len(base.intervals)
    for (a, b), (c, d) in zip(base.intervals, rep.intervals):
        assert c == pytest.approx(a, abs=0.1)
        assert d == pytest.approx(b, abs=0.1)


# ----------------------------------------------------------- shifted tests

def test_shifted_verdicts_match_gaps(a113):
    assert shifted_dichotomy_test(a113, -2.0, 8.0).verdict == "in-resolvent"
    assert shifted_dichotomy_test(a113, -2.0, 8.0).rank == 0
    mid = shifted_dichotomy_test(a113, 0.0, 8.0)
    assert mid.verdict == "in-resolvent" and mid.rank == 1
    assert mid.cert.flag == "verified"
    top = shifted_dichotomy_test(a113, 2.0, 8.0)
    assert top.verdict == "in-resolvent" and top.rank == 3
    spec = shifted_dichotomy_test(a113, 1.0, 8.0)
    assert spec.verdict == "in-spectrum"
    assert spec.rank is None


def test_shifted_test_needs_full_line():
    plus = parse_system("dim = 1\ndomain = half-line-plus\nA = -1\n")
    with pytest.raises(DomainError):
        shifted_dichotomy_test(plus, 0.0, 8.0)


def test_rank_scan_monotone(a113):
    scan = rank_step_function(a113, [2.0, -2.0, 0.0], 8.0)
    assert scan.monotone
    assert not scan.inconsistencies
    assert [r.rank for r in scan.rows] == [0, 1, 3]
    assert [r.lam for r in scan.rows] == [-2.0, 0.0, 2.0]
