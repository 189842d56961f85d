"""Dense matrix utilities backing the dynamical-systems modules.

Everything here is small-and-dense: numpy.linalg (LAPACK) does the
eigenwork, this layer adds the contracts the rest of the package relies
on (positive-diagonal QR, guarded SPD square roots, principal logarithms
with a perturbation fallback for defective input).

Default relative tolerance for eigenvalue classification is 1e-12.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DefectiveLog,
    DegenerateBasis,
    InvalidInput,
    NotPositiveDefinite,
    SingularMatrix,
)

EIG_RTOL = 1e-12


def _as_square(M, name="matrix"):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M.real)) or (
        np.iscomplexobj(M) and not np.all(np.isfinite(M.imag))
    ):
        raise InvalidInput(f"{name} has non-finite entries")
    return M


def operator_norm_2(M):
    """Spectral norm ||M||_2 (largest singular value)."""
    M = np.asarray(M)
    if M.ndim != 2:
        raise InvalidInput(f"expected a matrix, got shape {M.shape}")
    if M.size == 0:
        return 0.0
    if not np.all(np.isfinite(M.real)) or (
        np.iscomplexobj(M) and not np.all(np.isfinite(M.imag))
    ):
        raise InvalidInput("matrix has non-finite entries")
    return float(np.linalg.norm(M, 2))


def gram_schmidt_qr(M, rank_tol=1e-12):
    """Modified Gram-Schmidt factorization M = Q R with r_ii > 0.

    The diagonal of R carries the (positive) lengths of the successive
    orthogonalized columns, so Q is uniquely determined.  Raises
    DegenerateBasis when a column's residual length falls below
    rank_tol times the largest column norm.
    """
    M = _as_square(M)
    n = M.shape[0]
    dtype = complex if np.iscomplexobj(M) else float
    Q = np.array(M, dtype=dtype, copy=True)
    R = np.zeros((n, n), dtype=dtype)
    scale = max(np.linalg.norm(M, axis=0).max(), 1.0)
    for j in range(n):
        for i in range(j):
            rij = np.vdot(Q[:, i], Q[:, j])
            R[i, j] = rij
            Q[:, j] -= rij * Q[:, i]
        # second orthogonalization pass: cheap insurance against loss of
        # orthogonality for nearly dependent columns
        for i in range(j):
            c = np.vdot(Q[:, i], Q[:, j])
            R[i, j] += c
            Q[:, j] -= c * Q[:, i]
        rjj = np.linalg.norm(Q[:, j])
        if rjj <= rank_tol * scale:
            raise DegenerateBasis(
                f"column {j} is dependent on its predecessors "
                f"(residual {rjj:.3e}, tol {rank_tol * scale:.3e})"
            )
        R[j, j] = rjj
        Q[:, j] /= rjj
    if not np.iscomplexobj(M):
        Q = Q.real
        R = R.real
    return Q, R


def spd_sqrt(U, floor=0.0, sym_rtol=1e-10):
    """Unique symmetric positive definite square root of U.

    U must be Hermitian within sym_rtol (relative) and have all
    eigenvalues strictly above ``floor``; otherwise NotPositiveDefinite.
    """
    U = _as_square(U)
    scale = max(operator_norm_2(U), 1e-300)
    if operator_norm_2(U - U.conj().T) > sym_rtol * scale:
        raise NotPositiveDefinite("matrix is not Hermitian within tolerance")
    w, V = np.linalg.eigh(U)
    if w.min() <= floor:
        raise NotPositiveDefinite(
            f"eigenvalue {w.min():.6e} at or below floor {floor:.6e}"
        )
    R = (V * np.sqrt(w)) @ V.conj().T
    if not np.iscomplexobj(U):
        R = R.real
    # exact symmetry to keep downstream eigh calls happy
    return 0.5 * (R + R.conj().T)


def matrix_exp(M):
    """Matrix exponential by Pade scaling-and-squaring (Higham 2005,
    degree-13 approximant).  Robust for defective input, unlike the
    eigendecomposition route."""
    M = _as_square(M)
    A = M.astype(complex if np.iscomplexobj(M) else float, copy=True)
    n = A.shape[0]
    mu = np.trace(A) / n  # shift to reduce the norm before scaling
    A -= mu * np.eye(n, dtype=A.dtype)
    nrm = np.linalg.norm(A, 1)
    s = max(0, int(np.ceil(np.log2(nrm / 5.4))) if nrm > 5.4 else 0)
    A /= 2.0**s
    b = [
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ]
    I = np.eye(n, dtype=A.dtype)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A2 @ A4
    U = A @ (
        A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
        + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I
    )
    V = (
        A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
        + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I
    )
    E = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        E = E @ E
    E = E * np.exp(mu)  # undo the trace shift: exp(M) = e^mu exp(M - mu I)
    if not np.iscomplexobj(M) and np.iscomplexobj(E):
        E = E.real
    return E


def principal_log(M, *, perturb=1e-10, cond_cap=1e8, neg_axis_tol=1e-10,
                  seed=0, with_info=False):
    """Principal matrix logarithm via eigendecomposition.

    Eigenvalue logs take the principal branch (imaginary part in
    (-pi, pi]).  Near-singular input raises SingularMatrix.  A defective
    eigenvector matrix triggers one random perturbation of relative size
    ``perturb`` (seeded); if conditioning is still hopeless, DefectiveLog.

    With ``with_info=True`` returns ``(L, info)`` where info records the
    applied perturbation size and whether any eigenvalue sat within
    ``neg_axis_tol`` of the negative real axis (branch-cut proximity).
    """
    M = _as_square(M)
    n = M.shape[0]
    scale = max(operator_norm_2(M), 1e-300)
    smin = np.linalg.svd(M, compute_uv=False).min()
    if smin <= 1e-14 * scale:
        raise SingularMatrix(
            f"smallest singular value {smin:.3e} (scale {scale:.3e})"
        )
    info = {"perturbation": 0.0, "negative_axis": False}
    A = M
    for attempt in range(2):
        w, V = np.linalg.eig(A)
        condV = np.linalg.cond(V)
        if condV <= cond_cap:
            break
        if attempt == 0:
            rng = np.random.default_rng(seed)
            E = rng.standard_normal((n, n))
            A = M + (perturb * scale / operator_norm_2(E)) * E
            info["perturbation"] = perturb * scale
    else:
        raise DefectiveLog(
            f"eigenvector condition {condV:.3e} exceeds {cond_cap:.1e} "
            "even after perturbation"
        )
    if np.any(np.abs(w) <= 1e-14 * scale):
        raise SingularMatrix("zero eigenvalue after decomposition")
    dist_to_cut = np.abs(w.imag) + np.maximum(w.real, 0.0)
    info["negative_axis"] = bool(np.any(dist_to_cut <= neg_axis_tol * scale))
    L = (V * np.log(w.astype(complex))) @ np.linalg.inv(V)
    if with_info:
        return L, info
    return L


@dataclass
class ProjectionMatrix:
    """A (numerically) idempotent matrix with its certified rank.

    rank counts eigenvalues within EIG_RTOL-ish distance of 1;
    idempotency_residual is ||P^2 - P||_2.
    """

    matrix: np.ndarray
    rank: int
    idempotency_residual: float

    @property
    def dim(self):
        return self.matrix.shape[0]

    def complement(self):
        I = np.eye(self.dim)
        return projection_from_matrix(I - self.matrix)


def projection_from_matrix(P, tol=1e-8):
    """Wrap an explicit matrix as a ProjectionMatrix, verifying P^2 ~ P.

    Rank = number of eigenvalues nearer to 1 than to 0.
    """
    P = _as_square(P, "projection")
    res = operator_norm_2(P @ P - P)
    if res > tol * max(1.0, operator_norm_2(P)):
        raise InvalidInput(
            f"idempotency residual {res:.3e} exceeds tolerance"
        )
    w = np.linalg.eigvals(P)
    rank = int(np.sum(np.abs(w - 1.0) < 0.5))
    return ProjectionMatrix(matrix=P, rank=rank, idempotency_residual=float(res))


def canonical_projection(r, n):
    """diag(I_r, 0_{n-r}) as a ProjectionMatrix."""
    if not (isinstance(r, (int, np.integer)) and isinstance(n, (int, np.integer))):
        raise InvalidInput("rank and dimension must be integers")
    if not (0 <= r <= n):
        raise InvalidInput(f"need 0 <= r <= n, got r={r}, n={n}")
    P = np.zeros((n, n))
    P[:r, :r] = np.eye(r)
    return ProjectionMatrix(matrix=P, rank=int(r), idempotency_residual=0.0)


def orth_projector(basis):
    """Orthogonal projector onto the span of the given columns."""
    B = np.asarray(basis, dtype=float)
    if B.ndim != 2:
        raise InvalidInput("basis must be a 2-d array of columns")
    if B.shape[1] == 0:
        return projection_from_matrix(np.zeros((B.shape[0], B.shape[0])))
    Q, _ = np.linalg.qr(B)
    return projection_from_matrix(Q @ Q.T)
