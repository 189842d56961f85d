"""Lyapunov reductions: the polar-type similarity taking a system with
an invariant canonical projector to block-diagonal form with a bounded,
bounded-inverse change of variables, plus the recursive spectral
block-diagonalization built on certified gaps.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    GapNotCertified,
    InvalidInput,
    NotReducibleHere,
    NumericalInconsistency,
)
from .linalg import canonical_projection, operator_norm_2, spd_sqrt
from .propagate import fundamental_trajectory, transition_path
from .system import LinearSystem, eval_coeff, shifted_system
from .dichotomy import (
    _certificate_from_logs,
    _kernel_norm_logs,
    certify,
    estimate_splitting,
    min_principal_angle,
)
from .spectrum import fullline_spectrum


# ------------------------------------------------------------ polar reduction

@dataclass
class ReductionResult:
    """Samples of the bounded similarity S and the reduced coefficient.

    S(t) = X(t) R(t)^{-1} with R the block-diagonal SPD square root of
    P X^T X P + (I-P) X^T X (I-P); the reduced coefficient B = R' R^{-1}
    is block diagonal by construction and is reported at interior nodes
    (central differences).  similarity_residual is the worst forward-
    difference defect of S' = A S - S B and shrinks linearly with the
    grid step.
    """

    grid: np.ndarray
    h: float
    anchor: float
    block_sizes: tuple
    S: np.ndarray
    R: np.ndarray
    b_times: np.ndarray
    B: np.ndarray
    S_norm_max: float
    S_inv_norm_max: float
    similarity_residual: float
    commutation_defect: float

    @property
    def rank(self):
        return self.block_sizes[0]

    def block(self, i, M):
        r = self.block_sizes[0]
        return M[:r, :r] if i == 0 else M[r:, r:]


def _validate_canonical(P, n):
    """Accept a rank int or the matrix diag(I_r, 0); return the rank."""
    if isinstance(P, (int, np.integer)):
        r = int(P)
        if not 0 <= r <= n:
            raise InvalidInput(f"rank {r} out of range for dim {n}")
        return r
    M = np.asarray(getattr(P, "matrix", P), dtype=float)
    if M.shape != (n, n):
        raise InvalidInput(f"projector shape {M.shape} != {(n, n)}")
    r = int(round(np.trace(M)))
    if operator_norm_2(M - canonical_projection(r, n).matrix) > 1e-12:
        raise InvalidInput(
            "projector must be the canonical diag(I_r, 0); conjugate the "
            "system first")
    return r


def _blockwise_sqrt(G, r):
    n = G.shape[0]
    R = np.zeros_like(G)
    if r:
        R[:r, :r] = spd_sqrt(0.5 * (G[:r, :r] + G[:r, :r].T))
    if n - r:
        R[r:, r:] = spd_sqrt(0.5 * (G[r:, r:] + G[r:, r:].T))
    return R


def coppel_similarity(sys, P, grid, growth_cap=0.05, ode_tol=1e-12):
    """Reduce x' = A(t) x to block form along a canonical projector.

    P = diag(I_r, 0) must describe the invariant splitting at the
    anchor time (0 when the grid spans it, else the left endpoint).

    Refuses (NotReducibleHere) when the conjugated projector
    X P X^{-1} grows across the grid, which is exactly when the
    boundedness hypothesis behind the construction fails and S would
    lose its two-sided bound.
    """
    r = _validate_canonical(P, sys.dim)
    n = sys.dim
    grid = np.asarray(sorted(float(t) for t in grid))
    if len(grid) < 5:
        raise InvalidInput("need at least five grid nodes")
    steps = np.diff(grid)
    h = float(steps[0])
    if steps.max() - steps.min() > 1e-9 * max(h, 1.0):
        raise InvalidInput("grid must be uniform")
    # P describes the splitting where the transition is the identity;
    # anchor there, preferring t = 0 when the grid spans it.
    anchor = 0.0 if grid[0] <= 0.0 <= grid[-1] else float(grid[0])
    Xs = transition_path(sys, anchor, grid, tol=ode_tol)
    inv = np.linalg.inv(Xs)
    Pm = canonical_projection(r, n).matrix
    Qm = np.eye(n) - Pm

    span = grid[-1] - grid[0]
    for part, label in ((Pm, "range"), (Qm, "kernel")):
        norms = np.array([operator_norm_2(Xs[k] @ part @ inv[k])
                          for k in range(len(grid))])
        if norms.max() < 1e-14:
            continue
        slope = (math.log(norms[-1]) - math.log(norms[0])) / span
        if slope > growth_cap and norms.max() > 2.0 * norms.min():
            raise NotReducibleHere(
                f"conjugated projector ({label} part) grows at rate "
                f"{slope:.3f} across the grid; the invariant splitting "
                "is not bounded here")

    N = len(grid)
    R = np.empty((N, n, n))
    S = np.empty((N, n, n))
    for k in range(N):
        R[k] = _blockwise_sqrt(Xs[k].T @ Xs[k], r)
        S[k] = np.linalg.solve(R[k].T, Xs[k].T).T
    s_norms = np.array([operator_norm_2(Sk) for Sk in S])
    if s_norms.max() > math.sqrt(2.0) * (1.0 + 1e-6):
        raise NumericalInconsistency(
            f"||S|| reached {s_norms.max():.6f} > sqrt(2); input projector "
            "was not invariant for this system")
    sinv_norms = np.array([operator_norm_2(np.linalg.inv(Sk)) for Sk in S])

    B = np.empty((N - 2, n, n))
    for k in range(1, N - 1):
        Rdot = (R[k + 1] - R[k - 1]) / (2.0 * h)
        Bk = np.zeros((n, n))
        if r:
            Bk[:r, :r] = Rdot[:r, :r] @ np.linalg.inv(R[k][:r, :r])
        if n - r:
            Bk[r:, r:] = Rdot[r:, r:] @ np.linalg.inv(R[k][r:, r:])
        B[k - 1] = Bk

    resid = 0.0
    comm = 0.0
    for k in range(1, N - 1):
        Sdot = (S[k + 1] - S[k]) / h
        A = eval_coeff(sys, grid[k])
        resid = max(resid, operator_norm_2(Sdot - A @ S[k] + S[k] @ B[k - 1]))
        comm = max(comm, operator_norm_2(
            Xs[k] @ Pm @ inv[k] @ S[k] - S[k] @ Pm))
    return ReductionResult(
        grid=grid, h=h, anchor=anchor, block_sizes=(r, n - r), S=S, R=R,
        b_times=grid[1:-1], B=B,
        S_norm_max=float(s_norms.max()),
        S_inv_norm_max=float(sinv_norms.max()),
        similarity_residual=float(resid), commutation_defect=float(comm))


def subsystem_dichotomies(result, alpha=None, alpha_candidates=None,
                          K_cap=1e6, tol=1e-6):
    """Dichotomy certificates for the two reduced blocks.

    The SPD factor R(t) is itself a fundamental matrix of the reduced
    system, so block transitions are R_i(t) R_i(s)^{-1} with no further
    integration: block 1 must contract forward (projector I), block 2
    backward (projector 0).
    """
    r, n2 = result.block_sizes
    grid = result.grid
    interval = (float(grid[0]), float(grid[-1]))
    out = []
    for i, dim in ((0, r), (1, n2)):
        if dim == 0:
            out.append(None)
            continue
        Rb = np.stack([result.block(i, Rk) for Rk in result.R])
        P = canonical_projection(dim if i == 0 else 0, dim)
        Mb = max(operator_norm_2(result.block(i, Bk)) for Bk in result.B)
        logs = _kernel_norm_logs(Rb, grid, P.matrix)
        out.append(_certificate_from_logs(
            P, interval, result.anchor, grid, logs, Mb, "full-line",
            alpha=alpha, alpha_candidates=alpha_candidates, K_cap=K_cap,
            tol=tol))
    return tuple(out)


# ------------------------------------------------- spectral block diagonalization

@dataclass
class SpectralReduction:
    """Composed similarity splitting the system along spectral gaps.

    transform(t) maps reduced coordinates to original ones; coeff_fns
    hold one callable per block (already shifted back, i.e. the block
    spectra match the assigned intervals); B_samples assembles them
    block-diagonally on the grid.
    """

    grid: np.ndarray
    block_sizes: list
    intervals: list
    S_samples: np.ndarray
    B_samples: np.ndarray
    coeff_fns: list
    transform: object
    certificates: list
    similarity_residual: float
    S_norm_max: float
    S_inv_norm_max: float
    warnings: list = field(default_factory=list)


def _constant_conjugate(sys, lam, W, name):
    """Coefficient W^{-1} (A(t) - lam) W as a LinearSystem."""
    Winv = np.linalg.inv(W)
    eye = np.eye(sys.dim)

    def coeff(t, _s=sys, _l=lam, _W=W, _Wi=Winv, _I=eye):
        return _Wi @ (eval_coeff(_s, t) - _l * _I) @ _W

    return LinearSystem(name=name, dim=sys.dim, coeff=coeff,
                        domain=sys.domain, period=None)


_FD_DELTA = 1e-5


def _polar_closures(sys, r, lo, hi, ode_tol):
    """Callables R(t), S(t), B_i(t) from a dense fundamental matrix.

    The fundamental matrix is integrated once over [lo - 2d, hi + 2d]
    so the central-difference coefficient closures stay valid on all of
    [lo, hi]; recursion levels shrink their hull accordingly.
    """
    n = sys.dim
    d = _FD_DELTA
    X = fundamental_trajectory(sys, 0.0, lo - 2 * d, hi + 2 * d, tol=ode_tol)

    def R_of(t):
        Xt = X(t).reshape(n, n)
        return _blockwise_sqrt(Xt.T @ Xt, r)

    def S_of(t):
        Xt = X(t).reshape(n, n)
        return np.linalg.solve(R_of(t).T, Xt.T).T

    def block_coeff(i):
        sl = slice(0, r) if i == 0 else slice(r, n)

        def B_of(t, _sl=sl):
            Rp = R_of(t + d)[_sl, _sl]
            Rm = R_of(t - d)[_sl, _sl]
            R0 = R_of(t)[_sl, _sl]
            return (Rp - Rm) / (2 * d) @ np.linalg.inv(R0)

        return B_of

    return R_of, S_of, block_coeff


def spectral_block_diagonalize(sys, report=None, grid=None, horizon=24.0,
                               window=3.0, split_horizon=10.0, K_cap=1e6,
                               tol=1e-6, ode_tol=1e-10):
    """Split the system into blocks matching its spectral intervals.

    Works down the sorted interval list: each gap midpoint is shifted
    to zero, the shifted dichotomy is certified (else GapNotCertified),
    the polar reduction splits off the top block, and the remaining
    leading block recurses.  The composed transform stays bounded with
    bounded inverse since every factor does.
    """
    if report is None:
        report = fullline_spectrum(sys, horizon, window)
    intervals = list(report.intervals)
    mults = list(report.multiplicities)
    if not intervals:
        raise InvalidInput("empty spectrum report")
    if any(not (math.isfinite(lo) and math.isfinite(hi))
           for lo, hi in intervals):
        raise InvalidInput("spectral intervals must be finite to split")
    if grid is None:
        grid = np.linspace(-4.0, 4.0, 161)
    else:
        grid = np.asarray(sorted(float(t) for t in grid))
    warnings = list(report.warnings)
    certs = []
    hull_lo = min(float(grid[0]), -split_horizon) - 1.0
    hull_hi = max(float(grid[-1]), split_horizon) + 1.0

    def rec(system, ivs, ms, lo, hi):
        n = system.dim
        if len(ivs) == 1:
            def tf(t, _n=n):
                return np.eye(_n)

            def cf(t, _s=system):
                return eval_coeff(_s, t)

            return tf, [(n, ivs[0], cf)]
        gap_lo = ivs[-2][1]
        gap_hi = ivs[-1][0]
        lam = 0.5 * (gap_lo + gap_hi)
        sh = shifted_system(system, lam)
        split = estimate_splitting(sh, split_horizon, tol=ode_tol)
        k = sum(ms[:-1])
        m_top = ms[-1]
        if (split.dim_stable != k or split.dim_unstable != m_top
                or split.fwd_inconclusive or split.bwd_inconclusive):
            raise GapNotCertified(
                f"gap at {lam:g}: splitting found "
                f"{split.dim_stable}+{split.dim_unstable}, expected "
                f"{k}+{m_top}", lam=lam)
        if min_principal_angle(split.stable_basis,
                               split.unstable_basis) <= 1e-3:
            raise GapNotCertified(
                f"gap at {lam:g}: families nearly intersect", lam=lam)
        W = np.hstack([split.stable_basis, split.unstable_basis])
        D = np.zeros((n, n))
        D[:k, :k] = np.eye(k)
        P = W @ D @ np.linalg.inv(W)
        # decay-rate candidates from the gap geometry: the shifted rates
        # clear the gap half-width, so start just under it
        half = 0.5 * (gap_hi - gap_lo)
        cands = [f * half for f in (0.9, 0.75, 0.5, 0.25)]
        cert = certify(sh, P, (-split_horizon, split_horizon),
                       alpha_candidates=cands, K_cap=K_cap, tol=tol,
                       ode_tol=ode_tol)
        if cert.flag != "verified":
            raise GapNotCertified(
                f"gap at {lam:g}: certificate {cert.flag} "
                f"({'; '.join(cert.notes)})", lam=lam)
        certs.append(cert)

        conj = _constant_conjugate(system, lam, W,
                                   f"{system.name}[gap {lam:g}]")
        R_of, S_of, block_coeff = _polar_closures(conj, k, lo, hi, ode_tol)
        B1 = block_coeff(0)
        B2 = block_coeff(1)

        def top_coeff(t, _B2=B2, _l=lam, _m=m_top):
            return _B2(t) + _l * np.eye(_m)

        sub_sys = LinearSystem(
            name=f"{system.name}[lead {lam:g}]", dim=k,
            coeff=lambda t, _B1=B1, _l=lam, _k=k: _B1(t) + _l * np.eye(_k),
            domain="full-line")
        # the child hull shrinks by the parent's finite-difference reach
        sub_tf, sub_blocks = rec(sub_sys, ivs[:-1], ms[:-1],
                                 lo + 4 * _FD_DELTA, hi - 4 * _FD_DELTA)

        def tf(t, _W=W, _S=S_of, _sub=sub_tf, _k=k, _m=m_top):
            T = np.zeros((_k + _m, _k + _m))
            T[:_k, :_k] = _sub(t)
            T[_k:, _k:] = np.eye(_m)
            return _W @ _S(t) @ T

        return tf, sub_blocks + [(m_top, ivs[-1], top_coeff)]

    transform, blocks = rec(sys, intervals, mults, hull_lo, hull_hi)
    n = sys.dim
    sizes = [b[0] for b in blocks]
    if sum(sizes) != n:
        raise NumericalInconsistency(
            f"block sizes {sizes} do not sum to dim {n}")
    N = len(grid)
    S_samples = np.stack([transform(t) for t in grid])
    B_samples = np.zeros((N, n, n))
    coeff_fns = [b[2] for b in blocks]
    offs = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    for j, t in enumerate(grid):
        for i, cf in enumerate(coeff_fns):
            B_samples[j, offs[i]:offs[i + 1], offs[i]:offs[i + 1]] = cf(t)
    h = float(grid[1] - grid[0])
    resid = 0.0
    for j in range(1, N - 1):
        Sdot = (S_samples[j + 1] - S_samples[j - 1]) / (2 * h)
        A = eval_coeff(sys, grid[j])
        resid = max(resid, operator_norm_2(
            Sdot - A @ S_samples[j] + S_samples[j] @ B_samples[j]))
    s_norms = [operator_norm_2(Sk) for Sk in S_samples]
    si_norms = [operator_norm_2(np.linalg.inv(Sk)) for Sk in S_samples]
    return SpectralReduction(
        grid=grid, block_sizes=sizes,
        intervals=[b[1] for b in blocks], S_samples=S_samples,
        B_samples=B_samples, coeff_fns=coeff_fns, transform=transform,
        certificates=certs, similarity_residual=float(resid),
        S_norm_max=float(max(s_norms)), S_inv_norm_max=float(max(si_norms)),
        warnings=warnings)
