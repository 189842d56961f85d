"""Polar block reduction and recursion down spectral gaps.

markus_yamabe needs its coordinates swapped before the canonical
rank-1 reduction puts the decaying direction first; the plain
orientation must still reduce (bounded invariant splitting) but its
block certificates cannot verify, which is asserted, not papered over.
"""

import math

import numpy as np
import pytest

from dlab import (
    GapNotCertified,
    InvalidInput,
    LinearSystem,
    NotReducibleHere,
    builtin,
    conjugated_system,
    coppel_similarity,
    fullline_spectrum,
    halfline_spectrum,
    spectral_block_diagonalize,
    subsystem_dichotomies,
)
from dlab.propagate import transition_path
from dlab.spectrum import SpectrumReport

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture(scope="module")
def my():
    return builtin("markus_yamabe")


@pytest.fixture(scope="module")
def my_swapped(my):
    return conjugated_system(my, lambda t: SWAP,
                             lambda t: np.zeros((2, 2)), name="my-swapped")


@pytest.fixture(scope="module")
def grid_c():
    return np.linspace(-2.0, 2.0, 201)


@pytest.fixture(scope="module")
def res_swap(my_swapped, grid_c):
    return coppel_similarity(my_swapped, 1, grid_c)


@pytest.fixture(scope="module")
def a113():
    return builtin("auto_diag_113")


@pytest.fixture(scope="module")
def red113(a113):
    report = fullline_spectrum(a113, 20.0, 4.0)
    return spectral_block_diagonalize(a113, report=report,
                                      grid=np.linspace(-2.0, 2.0, 81))


# ---------------------------------------------------------------- coppel

def test_similarity_norm_bounds(my_swapped, res_swap, grid_c):
    assert res_swap.S_norm_max <= math.sqrt(2.0) * (1.0 + 1e-6)
    assert res_swap.anchor == 0.0
    assert res_swap.block_sizes == (1, 1)
    assert res_swap.rank == 1
    # ||S^-1|| <= sqrt(||XPX^-1||^2 + ||X(I-P)X^-1||^2) per node
    sub = slice(None, None, 25)
    Xs = transition_path(my_swapped, 0.0, grid_c[sub])
    P = np.diag([1.0, 0.0])
    Q = np.eye(2) - P
    for X, Sk in zip(Xs, res_swap.S[sub]):
        Xi = np.linalg.inv(X)
        bound = math.hypot(np.linalg.norm(X @ P @ Xi, 2),
                           np.linalg.norm(X @ Q @ Xi, 2))
        assert np.linalg.norm(np.linalg.inv(Sk), 2) <= bound + 1e-6


def test_similarity_is_identity_at_anchor(res_swap, grid_c):
    k = int(np.argmin(np.abs(grid_c)))
    assert grid_c[k] == 0.0
    assert np.allclose(res_swap.S[k], np.eye(2), atol=1e-9)
    assert np.allclose(res_swap.R[k], np.eye(2), atol=1e-9)


def test_projector_commutation(res_swap):
    assert res_swap.commutation_defect <= 10 * 1e-6


def test_reduced_coefficient_block_diagonal(a113):
    grid = np.linspace(-1.0, 1.0, 101)
    res = coppel_similarity(a113, 2, grid)
    assert res.block_sizes == (2, 1)
    for Bk in res.B:
        assert np.all(Bk[:2, 2:] == 0.0) and np.all(Bk[2:, :2] == 0.0)
    # constant diagonal flow reduces to itself (B carries the O(h^2)
    # central-difference error)
    assert np.allclose(res.B, np.diag([1.0, 1.0, -1.0]), atol=1e-4)
    assert np.allclose(res.S, np.eye(3), atol=1e-9)


def test_similarity_residual_halves(my_swapped, res_swap, grid_c):
    fine = coppel_similarity(my_swapped, 1, np.linspace(-2.0, 2.0, 401))
    ratio = fine.similarity_residual / res_swap.similarity_residual
    assert 0.4 <= ratio <= 0.6
    assert fine.similarity_residual <= 0.05


def test_subsystem_certificates(res_swap, my, grid_c):
    c1, c2 = subsystem_dichotomies(res_swap)
    assert c1.flag == "verified" and c2.flag == "verified"
    assert c1.alpha == pytest.approx(1.0, abs=0.01)
    assert c2.alpha == pytest.approx(0.5, abs=0.01)
    assert max(c1.K, c2.K) <= 1.2
    # unswapped orientation puts the growing direction first: the
    # trivial projectors point the wrong way and both flags say so
    plain = coppel_similarity(my, 1, grid_c)
    d1, d2 = subsystem_dichotomies(plain)
    assert d1.flag == "violated" and d2.flag == "violated"


def test_canonical_projector_validation(my_swapped, grid_c):
    with pytest.raises(InvalidInput):
        coppel_similarity(my_swapped, 5, grid_c)
    with pytest.raises(InvalidInput):
        coppel_similarity(my_swapped, np.diag([0.0, 1.0]), grid_c)
    with pytest.raises(InvalidInput):
        coppel_similarity(my_swapped, 1, grid_c[:4])
    with pytest.raises(InvalidInput):
        coppel_similarity(my_swapped, 1, [-1.0, 0.0, 0.5, 2.0, 3.0])
    # the explicit canonical matrix is accepted
    res = coppel_similarity(my_swapped, np.diag([1.0, 0.0]),
                            np.linspace(-1.0, 1.0, 11))
    assert res.rank == 1


def test_not_reducible_away_from_anchor(my_swapped):
    """Anchoring where diag(1, 0) is not the splitting must refuse."""
    with pytest.raises(NotReducibleHere):
        coppel_similarity(my_swapped, 1, np.linspace(2.0, 7.0, 501))


# -------------------------------------------------------------- spectral

def test_spectral_constant_diagonal(red113):
    assert red113.block_sizes == [1, 2]
    (a0, b0), (a1, b1) = red113.intervals
    assert abs(a0 + 1) <= 0.05 and abs(b0 + 1) <= 0.05
    assert abs(a1 - 1) <= 0.05 and abs(b1 - 1) <= 0.05
    assert all(c.flag == "verified" for c in red113.certificates)
    assert red113.similarity_residual <= 1e-5
    assert red113.S_norm_max <= math.sqrt(2.0) + 1e-6
    k = int(np.argmin(np.abs(red113.grid)))
    assert np.allclose(red113.B_samples[k], np.diag([-1.0, 1.0, 1.0]),
                       atol=1e-6)


def test_spectral_transform_sends_block_to_invariant_direction(red113):
    k = int(np.argmin(np.abs(red113.grid)))
    S0 = red113.S_samples[k]
    assert np.allclose(S0.T @ S0, np.eye(3), atol=1e-6)
    # first reduced coordinate carries the decaying direction e3
    v = S0 @ np.array([1.0, 0.0, 0.0])
    assert abs(abs(v[2]) - 1.0) <= 1e-6


def test_spectral_block_spectrum_matches_assignment(red113):
    blk = LinearSystem(name="blk0", dim=red113.block_sizes[0],
                       coeff=red113.coeff_fns[0], domain="full-line")
    rep = halfline_spectrum(blk, 10.0, 2.0)
    assert len(rep.intervals) == 1
    lo, hi = rep.intervals[0]
    a, b = red113.intervals[0]
    assert a - 0.05 <= lo <= hi <= b + 0.05


def test_spectral_markus_yamabe(my):
    report = fullline_spectrum(my, 20.0, 4.0)
    red = spectral_block_diagonalize(my, report=report,
                                     grid=np.linspace(-2.0, 2.0, 41))
    assert red.block_sizes == [1, 1]
    assert red.intervals[0][0] == pytest.approx(-1.0, abs=0.05)
    assert red.intervals[1][1] == pytest.approx(0.5, abs=0.05)
    k = int(np.argmin(np.abs(red.grid)))
    assert np.allclose(red.B_samples[k], np.diag([-1.0, 0.5]), atol=0.01)
    assert red.similarity_residual <= 0.01
    assert all(c.flag == "verified" for c in red.certificates)


def test_spectral_guards(a113):
    fake = SpectrumReport(intervals=[(-1.0, -1.0), (1.0, 1.0)],
                          multiplicities=[2, 1], gaps=[], horizon=24.0,
                          window=3.0, method="qr-bohl-union")
    with pytest.raises(GapNotCertified) as exc:
        spectral_block_diagonalize(a113, report=fake,
                                   grid=np.linspace(-2.0, 2.0, 41))
    assert exc.value.lam == 0.0
    lin = builtin("scalar_linear_t")
    rep = halfline_spectrum(lin, 40.0, 8.0)
    with pytest.raises(InvalidInput):
        spectral_block_diagonalize(lin, report=rep)
    empty = SpectrumReport(intervals=[], multiplicities=[], gaps=[],
                           horizon=24.0, window=3.0, method="qr-bohl")
    with pytest.raises(InvalidInput):
        spectral_block_diagonalize(a113, report=empty)
