"""Exponential dichotomies: splitting estimation, certificate search,
Green-kernel application, perturbation fixed points, noncriticality,
and the full-line criterion built from both half-lines.

Conventions.  A certificate anchors its projector at the first grid
time (at 0 whenever the interval contains it); the time-t projector is
X(t, anchor) P X(anchor, t).  A certificate is 'verified' only when the
stated pair (K, alpha) reproduces every sampled kernel norm within tol
AND shows net contraction across the window, i.e. log K < alpha * span.
Without the second condition any bounded kernel passes on a finite
window with alpha ~ log(K_cap)/span, which certifies nothing.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CertificateRequired,
    DomainError,
    GapViolation,
    IndexUndetermined,
    InvalidInput,
    NoConvergence,
    NumericalInconsistency,
)
from .linalg import (
    ProjectionMatrix,
    operator_norm_2,
    orth_projector,
    projection_from_matrix,
)
from .propagate import (
    adaptive_simpson,
    fundamental_trajectory,
    integrate_ivp,
    simpson_weights,
    transition_path,
)
from .system import eval_coeff


# ----------------------------------------------------------------- splitting

@dataclass
class SubspaceSplit:
    """Numerically estimated stable/unstable families at t = 0.

    Bases are orthonormal columns of right singular vectors of the
    transition matrix over the horizon.  Rates are two-sided log-slopes
    (full horizon and second half); a direction is classified only when
    both slopes clear slope_tol with the same sign.
    """

    horizon: float
    slope_tol: float
    stable_basis: np.ndarray
    unstable_basis: np.ndarray
    stable_rates: np.ndarray
    unstable_rates: np.ndarray
    fwd_inconclusive: int
    bwd_inconclusive: int
    backward_swept: bool
    basis_cond: float

    @property
    def dim_stable(self):
        return self.stable_basis.shape[1]

    @property
    def dim_unstable(self):
        return self.unstable_basis.shape[1]


def _sweep(sys, T, slope_tol, tol):
    """Decaying directions of X(T, 0): (basis, rates, n_inconclusive).

    Negative T sweeps backward; slopes are per unit |T| so decay in the
    sweep direction is always a negative rate.
    """
    Xh, XT = transition_path(sys, 0.0, [T / 2.0, T], tol=tol)
    U, sig, Vt = np.linalg.svd(XT)
    half_norms = np.linalg.norm(Xh @ Vt.T, axis=0)
    Ta = abs(T)
    dec, rates, unclear = [], [], 0
    for i in range(len(sig)):
        s_full = math.log(max(sig[i], 1e-300)) / Ta
        s_half = (math.log(max(sig[i], 1e-300))
                  - math.log(max(half_norms[i], 1e-300))) / (Ta / 2.0)
        if max(s_full, s_half) < -slope_tol:
            dec.append(Vt[i])
            rates.append(s_full)
        elif min(s_full, s_half) > slope_tol:
            pass
        else:
            unclear += 1
    basis = (np.array(dec).T if dec
             else np.zeros((sys.dim, 0)))
    return basis, np.array(rates), unclear


def estimate_splitting(sys, horizon, slope_tol=0.05, tol=1e-10):
    """Stable/unstable splitting from forward and backward sweeps.

    On half-line domains only the forward sweep runs and the unstable
    family is left empty (backward_swept False).
    """
    T = float(horizon)
    if T <= 0:
        raise InvalidInput("horizon must be positive")
    V, vr, f_unclear = _sweep(sys, T, slope_tol, tol)
    if sys.domain == "full-line":
        W, wr, b_unclear = _sweep(sys, -T, slope_tol, tol)
        backward = True
    else:
        W = np.zeros((sys.dim, 0))
        wr = np.zeros(0)
        b_unclear = 0
        backward = False
    n = sys.dim
    if backward and V.shape[1] + W.shape[1] == n and n > 0:
        M = np.hstack([V, W]) if V.size or W.size else np.zeros((n, 0))
        basis_cond = float(np.linalg.cond(M)) if M.shape[1] == n else math.inf
    else:
        basis_cond = math.inf
    return SubspaceSplit(
        horizon=T, slope_tol=slope_tol,
        stable_basis=V, unstable_basis=W,
        stable_rates=vr, unstable_rates=wr,
        fwd_inconclusive=f_unclear, bwd_inconclusive=b_unclear,
        backward_swept=backward, basis_cond=basis_cond,
    )


def min_principal_angle(V, W):
    """Smallest principal angle (radians) between two column spans."""
    if V.shape[1] == 0 or W.shape[1] == 0:
        return math.pi / 2.0
    QV, _ = np.linalg.qr(V)
    QW, _ = np.linalg.qr(W)
    s = np.linalg.svd(QV.T @ QW, compute_uv=False)
    return float(math.acos(min(1.0, float(s.max()))))


# -------------------------------------------------------------- certificates

@dataclass
class DichotomyCertificate:
    projector: ProjectionMatrix
    K: float
    alpha: float
    interval: tuple
    anchor: float
    grid: np.ndarray
    residual: float
    flag: str                      # verified | violated | inconclusive
    domain: str
    K_cap: float
    sup_coeff: float
    notes: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "K": self.K, "alpha": self.alpha,
            "interval": list(self.interval), "anchor": self.anchor,
            "rank": self.projector.rank,
            "projector": self.projector.matrix.tolist(),
            "residual": self.residual, "flag": self.flag,
            "notes": list(self.notes),
        }


def _kernel_norm_logs(Xs, grid, P):
    """Log kernel norms for both inequality families, with time gaps.

    Returns (lf, df, lb, db): forward entries ||X_i P X_j^-1|| for
    t_i >= t_j and backward ||X_i (I-P) X_j^-1|| for t_i <= t_j, as
    flat arrays of logs and nonnegative gaps.
    """
    n = Xs.shape[1]
    inv = np.linalg.inv(Xs)
    Q = np.eye(n) - P
    PR = np.einsum("ab,jbc->jac", P, inv)
    QR = np.einsum("ab,jbc->jac", Q, inv)
    lf, df, lb, db = [], [], [], []
    for i in range(len(grid)):
        Xi = Xs[i]
        for j in range(len(grid)):
            gap = grid[i] - grid[j]
            if gap >= 0:
                nrm = operator_norm_2(Xi @ PR[j])
                lf.append(math.log(max(nrm, 1e-300)))
                df.append(gap)
            if gap <= 0:
                nrm = operator_norm_2(Xi @ QR[j])
                lb.append(math.log(max(nrm, 1e-300)))
                db.append(-gap)
    return (np.array(lf), np.array(df), np.array(lb), np.array(db))


def certify(sys, projector, interval, grid=None, n_grid=49, alpha=None,
            alpha_candidates=None, K_cap=1e6, tol=1e-6, ode_tol=1e-10):
    """Search for dichotomy constants on a finite window.

    alpha fixed > candidate list > bisection on (0, sup||A||]; K is the
    smallest constant making every sampled kernel norm obey
    K exp(-alpha * gap).  Flag rules are described in the module
    docstring; a violated certificate still reports the best (K, alpha)
    found together with the worst residual against K_cap.
    """
    if isinstance(projector, ProjectionMatrix):
        P = projector
    else:
        P = projection_from_matrix(np.asarray(projector, dtype=float))
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise InvalidInput("interval must have positive length")
    if grid is None:
        grid = np.linspace(a, b, int(n_grid))
    else:
        grid = np.asarray(sorted(float(t) for t in grid))
        if len(grid) and (grid[0] < a - 1e-12 or grid[-1] > b + 1e-12):
            raise InvalidInput("grid leaves the stated interval")
    span = b - a
    notes = []
    if len(grid) < 3:
        return DichotomyCertificate(
            projector=P, K=float("nan"), alpha=0.0, interval=(a, b),
            anchor=a, grid=grid, residual=float("nan"),
            flag="inconclusive", domain=sys.domain, K_cap=K_cap,
            sup_coeff=float("nan"), notes=["grid too small"])

    anchor = 0.0 if a <= 0.0 <= b else a
    Xs = transition_path(sys, anchor, grid, tol=ode_tol)
    conds = np.array([np.linalg.cond(X) for X in Xs])
    if conds.max() > 1e13:
        raise NumericalInconsistency(
            f"transition matrices reach condition {conds.max():.2e}; "
            "shrink the interval")
    M = max(operator_norm_2(eval_coeff(sys, t)) for t in grid)
    lf, df, lb, db = _kernel_norm_logs(Xs, grid, P.matrix)
    return _certificate_from_logs(
        P, (a, b), anchor, grid, (lf, df, lb, db), M, sys.domain,
        alpha=alpha, alpha_candidates=alpha_candidates, K_cap=K_cap,
        tol=tol, notes=notes)


def _certificate_from_logs(P, interval, anchor, grid, logs, M, domain,
                           alpha=None, alpha_candidates=None, K_cap=1e6,
                           tol=1e-6, notes=None):
    """Alpha search + flagging from precomputed log kernel norms."""
    lf, df, lb, db = logs
    a, b = interval
    span = b - a
    notes = list(notes or [])

    def K_of(al):
        worst = 0.0
        if len(lf):
            worst = max(worst, float(np.max(lf + al * df)))
        if len(lb):
            worst = max(worst, float(np.max(lb + al * db)))
        return math.exp(worst)

    hi = M * (1.0 + 1e-6)
    if alpha is not None:
        al = float(alpha)
        if al <= 0:
            raise InvalidInput("alpha must be positive")
        if al > hi:
            notes.append(f"alpha {al:g} exceeds sup||A|| = {M:g}")
        K = K_of(al)
        feasible = K <= K_cap
    elif alpha_candidates is not None:
        cands = sorted((float(c) for c in alpha_candidates
                        if 0 < float(c) <= hi), reverse=True)
        dropped = [c for c in alpha_candidates if float(c) > hi]
        if dropped:
            notes.append(f"dropped candidates above sup||A|| = {M:g}")
        if not cands:
            raise InvalidInput("no usable alpha candidates")
        al, K, feasible = cands[-1], None, False
        for c in cands:
            Kc = K_of(c)
            if Kc <= K_cap:
                al, K, feasible = c, Kc, True
                break
        if K is None:
            K = K_of(al)
    else:
        lo = 1e-9 * max(hi, 1.0)
        if K_of(lo) > K_cap:
            al, K, feasible = lo, K_of(lo), False
        elif K_of(hi) <= K_cap:
            al, K, feasible = hi, K_of(hi), True
        else:
            lo_f, hi_f = lo, hi
            for _ in range(60):
                mid = 0.5 * (lo_f + hi_f)
                if K_of(mid) <= K_cap:
                    lo_f = mid
                else:
                    hi_f = mid
            al, K, feasible = lo_f, K_of(lo_f), True

    K_used = K if feasible else min(K, K_cap)
    resid = 0.0
    if len(lf):
        resid = max(resid, float(np.max(np.exp(lf + al * df) / K_used)) - 1.0)
    if len(lb):
        resid = max(resid, float(np.max(np.exp(lb + al * db) / K_used)) - 1.0)
    resid = max(0.0, resid)

    contraction = math.log(max(K_used, 1.0)) <= al * span - 1e-9
    if not feasible:
        notes.append(f"no alpha with K <= K_cap = {K_cap:g}")
        flag = "violated"
    elif resid > tol:
        notes.append(f"residual {resid:.3e} exceeds tol")
        flag = "violated"
    elif not contraction:
        notes.append(
            f"no net contraction: log K = {math.log(max(K_used,1.0)):.3f} "
            f">= alpha * span = {al * span:.3f}")
        flag = "violated"
    else:
        flag = "verified"

    return DichotomyCertificate(
        projector=P, K=float(K_used), alpha=float(al), interval=(a, b),
        anchor=float(anchor), grid=np.asarray(grid), residual=float(resid),
        flag=flag, domain=domain, K_cap=float(K_cap), sup_coeff=float(M),
        notes=notes)


def projector_path_defect(sys, cert, ts, tol=1e-10):
    """Worst invariance defect ||P(t) X(t,s) - X(t,s) P(s)|| over pairs."""
    ts = sorted(float(t) for t in ts)
    Xs = transition_path(sys, cert.anchor, ts, tol=tol)
    inv = np.linalg.inv(Xs)
    P = cert.projector.matrix
    Ps = np.einsum("iab,bc,icd->iad", Xs, P, inv)
    worst = 0.0
    for i in range(1, len(ts)):
        Xts = Xs[i] @ inv[i - 1]
        worst = max(worst, operator_norm_2(Ps[i] @ Xts - Xts @ Ps[i - 1]))
    return worst


# ------------------------------------------------------------- Green kernel

@dataclass
class GreenSample:
    t: float
    value: np.ndarray
    window: tuple
    truncation_bound: float
    quad_tol: float


def _require_verified(cert):
    if cert.flag != "verified":
        raise CertificateRequired(
            f"certificate flag is {cert.flag!r}; Green-kernel operations "
            "need a verified dichotomy")


def green_apply(sys, cert, g, t, window=None, tol=1e-8, cond_cap=1e12,
                ode_tol=1e-10):
    """Bounded-solution value (Green kernel applied to forcing g) at t.

    The integration window is centred at t with width chosen from the
    decay rate so the tail below the reported truncation_bound; it is
    shrunk if the fundamental matrix gets ill-conditioned relative to
    the anchor.  Full-line systems only.
    """
    _require_verified(cert)
    if sys.domain != "full-line":
        raise DomainError("green_apply needs a full-line system")
    t = float(t)
    n = sys.dim
    K, al = cert.K, cert.alpha

    def gv(s):
        out = np.asarray(g(float(s)), dtype=float).reshape(-1)
        if out.shape != (n,):
            raise InvalidInput(f"forcing returned shape {out.shape}")
        return out

    if window is None:
        probe = np.linspace(t - 10, t + 10, 101)
        gs0 = max(np.linalg.norm(gv(s)) for s in probe)
        if gs0 == 0.0:
            return GreenSample(t=t, value=np.zeros(n), window=(t, t),
                               truncation_bound=0.0, quad_tol=tol)
        L = max(1.0, math.log(4.0 * K * gs0 / (al * tol)) / al)
        lo, hi = t - L, t + L
    else:
        lo, hi = float(window[0]), float(window[1])
        if not lo <= t <= hi:
            raise InvalidInput("window must contain the evaluation time")

    anchor = cert.anchor
    hull_lo, hull_hi = min(lo, anchor), max(hi, anchor)
    X = fundamental_trajectory(sys, anchor, hull_lo, hull_hi, tol=ode_tol)
    marks = np.linspace(hull_lo, hull_hi, max(33, int(hull_hi - hull_lo) + 1))
    bad = [m for m in marks
           if np.linalg.cond(X(m).reshape(n, n)) > cond_cap]
    for m in bad:
        if m < t:
            lo = max(lo, m)
        elif m > t:
            hi = min(hi, m)
        else:
            raise InvalidInput(
                "fundamental matrix ill-conditioned at the evaluation time; "
                "choose t nearer the certificate anchor")

    gsup = max(np.linalg.norm(gv(s)) for s in np.linspace(lo, hi, 201))
    Xt = X(t).reshape(n, n)
    Pm = cert.projector.matrix
    Qm = np.eye(n) - Pm
    XtP = Xt @ Pm
    XtQ = Xt @ Qm

    def left(s):
        return XtP @ np.linalg.solve(X(s).reshape(n, n), gv(s))

    def right(s):
        return XtQ @ np.linalg.solve(X(s).reshape(n, n), gv(s))

    val = np.zeros(n)
    if t > lo:
        val = val + adaptive_simpson(left, lo, t, tol=tol / 4)
    if hi > t:
        val = val - adaptive_simpson(right, t, hi, tol=tol / 4)
    trunc = (K * gsup / al) * (math.exp(-al * (t - lo))
                               + math.exp(-al * (hi - t)))
    return GreenSample(t=t, value=val, window=(lo, hi),
                       truncation_bound=float(trunc), quad_tol=tol)


@dataclass
class SupBoundReport:
    ok: bool
    worst_ratio: float
    bound: float
    g_sup: float
    samples: list


def sup_bound_check(sys, cert, g, ts, tol=1e-8, **green_kw):
    """Check |x*(t)| <= (2K/alpha) sup|g| at the requested times."""
    _require_verified(cert)
    samples = [green_apply(sys, cert, g, t, tol=tol, **green_kw) for t in ts]
    lo = min(s.window[0] for s in samples)
    hi = max(s.window[1] for s in samples)
    n = sys.dim
    gsup = max(
        float(np.linalg.norm(np.asarray(g(float(s)), dtype=float).reshape(n)))
        for s in np.linspace(lo, hi, 512))
    bound = 2.0 * cert.K * gsup / cert.alpha
    worst = max(
        (float(np.linalg.norm(s.value)) - s.truncation_bound) / bound
        for s in samples) if bound > 0 else 0.0
    return SupBoundReport(ok=bool(worst <= 1.0 + tol), worst_ratio=worst,
                          bound=bound, g_sup=gsup, samples=samples)


# ------------------------------------------------------- perturbation fixed point

@dataclass
class FixedPointResult:
    times: np.ndarray
    values: np.ndarray
    iterations: int
    sup_change: float
    q: float
    window: tuple
    radius_bound: float


def lipschitz_fixed_point(sys, cert, h, gamma, grid=None, tol=1e-6,
                          node_h=0.02, max_sweeps=200, ode_tol=1e-10):
    """Bounded solution of x' = A(t) x + h(t, x) by contraction sweeps.

    Requires q = 2 K gamma / alpha < 1 (else GapViolation).  The sweep
    applies the Green kernel with precomputed fourth-order quadrature
    weights on a shared node grid aligned with the output grid, so each
    iteration is a single tensor contraction; outside the output grid
    the iterate is extended by its edge values.
    """
    _require_verified(cert)
    if sys.domain != "full-line":
        raise DomainError("lipschitz_fixed_point needs a full-line system")
    K, al = cert.K, cert.alpha
    gamma = float(gamma)
    q = 2.0 * K * gamma / al
    if q >= 1.0:
        raise GapViolation(
            f"q = 2 K gamma / alpha = {q:.4f} >= 1; no contraction")
    n = sys.dim
    a, b = cert.interval
    if grid is None:
        grid = np.linspace(a, b, 41)
    else:
        grid = np.asarray(sorted(float(t) for t in grid))
    N = len(grid)
    steps = np.diff(grid)
    if N < 2 or steps.max() - steps.min() > 1e-9 * max(steps.max(), 1.0):
        raise InvalidInput("output grid must be uniform with >= 2 nodes")
    gh = float(steps[0])

    def hv(s, x):
        out = np.asarray(h(float(s), np.asarray(x, dtype=float)),
                         dtype=float).reshape(-1)
        if out.shape != (n,):
            raise InvalidInput(f"perturbation returned shape {out.shape}")
        return out

    C0 = max(np.linalg.norm(hv(s, np.zeros(n)))
             for s in np.linspace(a - 5, b + 5, 101))
    radius = 2.0 * K / al * C0 / (1.0 - q) if C0 > 0 else 1.0
    h_sup = C0 + gamma * radius
    L = max(1.0, math.log(max(4.0 * K * h_sup / (al * tol), 2.0)) / al)
    L = min(L, 80.0)

    # node grid aligned with the output grid
    sub = max(1, int(math.ceil(gh / node_h)))
    sh = gh / sub
    pad = int(math.ceil(L / sh))
    m = pad + (N - 1) * sub + pad + 1
    s_nodes = (float(grid[0]) - pad * sh) + sh * np.arange(m)
    out_idx = pad + sub * np.arange(N)

    X = fundamental_trajectory(sys, cert.anchor, s_nodes[0], s_nodes[-1],
                               tol=ode_tol)
    Xs = np.stack([X(s).reshape(n, n) for s in s_nodes])
    if max(np.linalg.cond(Xs[0]), np.linalg.cond(Xs[-1])) > 1e13:
        raise NumericalInconsistency(
            "fundamental matrix too ill-conditioned across the padded "
            "window; shrink the interval or loosen tol")
    inv = np.linalg.inv(Xs)
    Pm = cert.projector.matrix
    Qm = np.eye(n) - Pm
    KP = np.einsum("jab,bc,kcd->jkad", Xs[out_idx], Pm, inv)
    KQ = np.einsum("jab,bc,kcd->jkad", Xs[out_idx], Qm, inv)

    T = np.zeros((N, m, n, n))
    for j in range(N):
        k0 = out_idx[j]
        wL = simpson_weights(k0 + 1, sh)
        wR = simpson_weights(m - k0, sh)
        T[j, :k0 + 1] += wL[:, None, None] * KP[j, :k0 + 1]
        T[j, k0:] -= wR[:, None, None] * KQ[j, k0:]

    w = np.zeros((N, n))
    sup_change = math.inf
    sweeps = 0
    target = tol * (1.0 - q)
    bound_sweeps = max_sweeps
    while sup_change > target:
        wn = np.empty((m, n))
        for c in range(n):
            wn[:, c] = np.interp(s_nodes, grid, w[:, c])
        hvec = np.array([hv(s_nodes[k], wn[k]) for k in range(m)])
        w_new = np.einsum("jkab,kb->ja", T, hvec)
        sup_change = float(np.max(np.linalg.norm(w_new - w, axis=1)))
        w = w_new
        sweeps += 1
        if sweeps == 1 and sup_change > 0 and q > 0:
            est = math.log(target / sup_change) / math.log(q)
            bound_sweeps = min(max_sweeps, int(math.ceil(est)) + 3)
        if sweeps >= bound_sweeps and sup_change > target:
            raise NoConvergence(
                f"fixed point not within {tol:g} after {sweeps} sweeps "
                f"(last change {sup_change:.3e}, q = {q:.3f})")
    return FixedPointResult(times=grid, values=w, iterations=sweeps,
                            sup_change=sup_change, q=q,
                            window=(float(s_nodes[0]), float(s_nodes[-1])),
                            radius_bound=float(radius))


# ---------------------------------------------------------- noncriticality

@dataclass
class NoncriticalityReport:
    ok: bool
    margin: float
    theta: float
    T: float
    worst: tuple


def noncriticality_threshold(K, alpha, T):
    """Psi(T) = e^{alpha T}/K - K e^{-alpha T}; noncritical when >= 2/theta."""
    return math.exp(alpha * T) / K - K * math.exp(-alpha * T)


def noncriticality_test(sys, T, theta, grid, probes=8, seed=0,
                        sub_nodes=129, ode_tol=1e-10):
    """Empirical (T, theta)-noncriticality over probe solutions.

    For every seeded unit initial vector and every grid time t the peak
    of |x| over [t-T, t+T] must dominate |x(t)| / theta.
    """
    T = float(T)
    theta = float(theta)
    if T <= 0 or theta <= 0:
        raise InvalidInput("T and theta must be positive")
    grid = sorted(float(t) for t in grid)
    lo, hi = grid[0] - T, grid[-1] + T
    dom_lo, dom_hi = sys.domain_interval()
    if lo < dom_lo or hi > dom_hi:
        raise DomainError("test window leaves the system domain")
    rng = np.random.default_rng(seed)
    n = sys.dim
    margin = 0.0
    worst = (grid[0], 0)
    for p in range(int(probes)):
        xi = rng.normal(size=n)
        xi /= np.linalg.norm(xi)
        traj = integrate_ivp(sys, xi, lo, hi, tol=ode_tol)
        for t in grid:
            us = np.linspace(t - T, t + T, sub_nodes)
            vals = np.linalg.norm(traj.sample(us), axis=1)
            here = np.linalg.norm(traj(t))
            ratio = here / max(float(vals.max()), 1e-300)
            if ratio > margin:
                margin = ratio
                worst = (t, p)
    return NoncriticalityReport(ok=bool(margin <= theta), margin=margin,
                                theta=theta, T=T, worst=worst)


# ------------------------------------------------------------ index, full line

def dichotomy_index(sys, horizon, slope_tol=0.05, tol=1e-10):
    """dim(stable) + dim(unstable) - n from the two-sided splitting."""
    if sys.domain != "full-line":
        raise DomainError("the index needs both half-lines")
    split = estimate_splitting(sys, horizon, slope_tol=slope_tol, tol=tol)
    if split.fwd_inconclusive or split.bwd_inconclusive:
        raise IndexUndetermined(
            f"{split.fwd_inconclusive} forward / {split.bwd_inconclusive} "
            f"backward directions have slopes within {slope_tol:g} of zero")
    return split.dim_stable + split.dim_unstable - sys.dim


@dataclass
class FullLineReport:
    ok: bool
    index: int
    angle: float
    cert_plus: DichotomyCertificate
    cert_minus: DichotomyCertificate
    split: SubspaceSplit
    reasons: list


def full_line_criterion(sys, horizon, slope_tol=0.05, angle_tol=1e-3,
                        K_cap=1e6, tol=1e-6, ode_tol=1e-10):
    """Full-line dichotomy test: both half-lines + trivial intersection
    + index zero."""
    if sys.domain != "full-line":
        raise DomainError("full_line_criterion needs a full-line system")
    split = estimate_splitting(sys, horizon, slope_tol=slope_tol, tol=ode_tol)
    if split.fwd_inconclusive or split.bwd_inconclusive:
        raise IndexUndetermined(
            "slopes too close to zero to classify every direction")
    index = split.dim_stable + split.dim_unstable - sys.dim
    angle = min_principal_angle(split.stable_basis, split.unstable_basis)
    n = sys.dim
    P_plus = orth_projector(split.stable_basis)
    P_minus = np.eye(n) - orth_projector(split.unstable_basis).matrix
    cert_p = certify(sys, P_plus, (0.0, horizon), K_cap=K_cap, tol=tol,
                     ode_tol=ode_tol)
    cert_m = certify(sys, P_minus, (-horizon, 0.0), K_cap=K_cap, tol=tol,
                     ode_tol=ode_tol)
    reasons = []
    if cert_p.flag != "verified":
        reasons.append("forward half-line certificate " + cert_p.flag)
    if cert_m.flag != "verified":
        reasons.append("backward half-line certificate " + cert_m.flag)
    if angle <= angle_tol:
        reasons.append(
            f"stable/unstable families meet at angle {angle:.2e} rad")
    if index != 0:
        reasons.append(f"index {index} != 0")
    return FullLineReport(ok=not reasons, index=index, angle=angle,
                          cert_plus=cert_p, cert_minus=cert_m, split=split,
                          reasons=reasons)
