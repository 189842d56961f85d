import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlab.errors import (
    DegenerateBasis,
    InvalidInput,
    NotPositiveDefinite,
    SingularMatrix,
)
from dlab.linalg import (
    canonical_projection,
    gram_schmidt_qr,
    matrix_exp,
    operator_norm_2,
    orth_projector,
    principal_log,
    projection_from_matrix,
    spd_sqrt,
)

from conftest import random_orthogonal, random_spd


def test_operator_norm_of_orthogonal_is_one(rng):
    for n in (1, 2, 3, 5, 8):
        for _ in range(10):
            Q = random_orthogonal(rng, n)
            assert abs(operator_norm_2(Q) - 1.0) <= 1e-10


def test_operator_norm_scaling_and_triangle(rng):
    A = rng.standard_normal((4, 4))
    B = rng.standard_normal((4, 4))
    assert operator_norm_2(3.0 * A) == pytest.approx(3.0 * operator_norm_2(A))
    assert operator_norm_2(A + B) <= operator_norm_2(A) + operator_norm_2(B) + 1e-12


def test_operator_norm_rejects_nonfinite():
    with pytest.raises(InvalidInput):
        operator_norm_2(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_gram_schmidt_qr_factors(rng):
    for n in (2, 3, 6):
        A = random_spd(rng, n) @ random_orthogonal(rng, n)
        Q, R = gram_schmidt_qr(A)
        assert operator_norm_2(Q.T @ Q - np.eye(n)) <= 1e-12
        assert operator_norm_2(Q @ R - A) <= 1e-10 * operator_norm_2(A)
        assert np.all(np.diag(R) > 0)
        assert operator_norm_2(np.tril(R, -1)) <= 1e-12 * operator_norm_2(R)


def test_gram_schmidt_qr_rejects_rank_deficient():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(DegenerateBasis):
        gram_schmidt_qr(A)


def test_spd_sqrt_squares_back(rng):
    for n in (1, 2, 4, 7):
        U = random_spd(rng, n)
        R = spd_sqrt(U)
        assert operator_norm_2(R @ R - U) <= 1e-8 * operator_norm_2(U)
        assert operator_norm_2(R - R.T) <= 1e-12 * operator_norm_2(R)


def test_spd_sqrt_commutes_with_commuting_projection(rng):
    # U built block-diagonal in the projector's eigenbasis commutes with
    # it exactly, and the root must inherit that commutation
    n, r = 5, 2
    Q = random_orthogonal(rng, n)
    P = Q[:, :r] @ Q[:, :r].T
    w = np.exp(rng.uniform(-1, 1, n))
    U = (Q * w) @ Q.T
    assert operator_norm_2(U @ P - P @ U) <= 1e-10
    R = spd_sqrt(U)
    assert operator_norm_2(R @ P - P @ R) <= 1e-8


def test_spd_sqrt_rejects_indefinite_and_asymmetric():
    with pytest.raises(NotPositiveDefinite):
        spd_sqrt(np.diag([1.0, -0.5]))
    with pytest.raises(NotPositiveDefinite):
        spd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_matrix_exp_diagonal_closed_form():
    d = np.array([-2.0, 0.3, 1.7])
    E = matrix_exp(np.diag(d))
    assert np.allclose(E, np.diag(np.exp(d)), rtol=1e-13, atol=1e-13)


def test_matrix_exp_inverse_pairing(rng):
    for _ in range(10):
        A = rng.standard_normal((4, 4))
        E = matrix_exp(A) @ matrix_exp(-A)
        assert operator_norm_2(E - np.eye(4)) <= 1e-10


def test_matrix_exp_handles_defective_blocks():
    # Jordan block: exp has the polynomial superdiagonal
    J = np.array([[0.5, 1.0], [0.0, 0.5]])
    E = matrix_exp(J)
    e = np.exp(0.5)
    assert np.allclose(E, [[e, e], [0.0, e]], rtol=1e-12)


def test_matrix_exp_large_norm_scaling(rng):
    A = rng.standard_normal((3, 3)) * 40.0
    A = A - A.T  # skew: exp is orthogonal regardless of the norm
    E = matrix_exp(A)
    assert operator_norm_2(E.T @ E - np.eye(3)) <= 1e-9


def test_principal_log_round_trip(rng):
    for _ in range(10):
        S = 0.8 * rng.standard_normal((3, 3))
        M = matrix_exp(S)  # eigenvalues stay off the negative real axis
        L = principal_log(M)
        assert operator_norm_2(matrix_exp(L) - M) <= 1e-8 * max(
            1.0, operator_norm_2(M))


def test_principal_log_branch_and_flag():
    M = np.diag([-2.0, 3.0])
    L, info = principal_log(M, with_info=True)
    assert info["negative_axis"]
    assert L[0, 0] == pytest.approx(np.log(2.0) + 1j * np.pi)
    assert abs(L[1, 1] - np.log(3.0)) <= 1e-12


def test_principal_log_rejects_singular():
    with pytest.raises(SingularMatrix):
        principal_log(np.diag([1.0, 0.0]))


def test_principal_log_perturbs_defective_input():
    J = np.array([[1.0, 1.0], [0.0, 1.0]])
    L, info = principal_log(J, with_info=True)
    assert info["perturbation"] > 0
    assert operator_norm_2(matrix_exp(L) - J) <= 1e-6


@given(st.integers(0, 6), st.integers(0, 6))
def test_canonical_projection_shape(r, extra):
    n = r + extra
    P = canonical_projection(r, n)
    assert P.rank == r
    M = P.matrix
    assert np.allclose(M @ M, M)
    assert np.trace(M) == pytest.approx(r)


def test_projection_from_matrix_rank_and_complement(rng):
    Q = random_orthogonal(rng, 4)
    M = Q[:, :3] @ Q[:, :3].T
    P = projection_from_matrix(M)
    assert P.rank == 3
    assert P.complement().rank == 1
    assert P.idempotency_residual <= 1e-12


def test_projection_from_matrix_rejects_non_idempotent():
    with pytest.raises(InvalidInput):
        projection_from_matrix(np.array([[1.0, 0.0], [0.0, 0.5]]))


def test_orth_projector_spans_basis(rng):
    B = rng.standard_normal((5, 2))
    P = orth_projector(B)
    assert P.rank == 2
    assert np.allclose(P.matrix @ B, B, atol=1e-10)
    assert operator_norm_2(P.matrix - P.matrix.T) <= 1e-12


def test_orth_projector_empty_basis():
    P = orth_projector(np.zeros((3, 0)))
    assert P.rank == 0
    assert operator_norm_2(P.matrix) == 0.0


@settings(max_examples=40)
@given(st.integers(0, 5), st.integers(1, 5))
def test_projection_complement_partitions_identity(r, extra):
    n = r + extra
    P = canonical_projection(r, n)
    C = P.complement()
    assert C.rank == n - r
    assert np.allclose(P.matrix + C.matrix, np.eye(n))
    assert np.allclose(P.matrix @ C.matrix, 0.0)
