"""Topological conjugacy between a dichotomic linear system and its
Lipschitz perturbation.

Given x' = A(t) x with a verified dichotomy certificate and the
perturbed system y' = A(t) y + f(t, y) with |f| <= mu and Lipschitz
constant gamma, the maps

    G(t, eta) = eta - integral of kernel(t, s) f(s, y(s; t, eta)) ds
    H(t, xi)  = xi  + z*(t),   z* the fixed point of
                z(c) = integral of kernel(c, s) f(s, x(s; t, xi) + z(s)) ds

are mutually inverse homeomorphisms carrying solutions of one system
onto the other whenever 2 K gamma < alpha.  Two windowings are
implemented: ``full-line`` splits the kernel by the dichotomy projector
over [t - L, t + L], ``half-line-plus`` uses the causal kernel over
[0, t] and requires the identity projector.

The fixed-point unknown lives on Chebyshev nodes of the window with
barycentric interpolation in between.  Kernel integrals are never
discretised on a fixed grid: backward orbits grow like e^{alpha(t-s)},
so f(s, y(s)) can oscillate arbitrarily fast near the window edges and
any fixed spacing aliases.  Instead each integral is integrated as the
driven linear ODE it solves (w' = A w + projected drive), stable part
forward and unstable part backward, re-projecting onto the certified
invariant bundles at the Chebyshev junctions so neither sweep ever
integrates against its contracting direction.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    CertificateRequired,
    DomainError,
    GapViolation,
    InvalidInput,
    NoConvergence,
    NumericalInconsistency,
    ProjectorMismatch,
)
from .propagate import fundamental_trajectory, integrate_ivp, transition_matrix, transition_path
from .system import QuasilinearSystem, eval_coeff, is_autonomous

_COND_CAP = 1e12
_ODE_TOL = 1e-10


@dataclass(eq=False)
class LinearizationContext:
    """Frozen constants and systems for one conjugacy construction."""

    quasi: QuasilinearSystem
    cert: object
    eps: float
    mode: str                   # full-line | half-line-plus
    gap_factor: float           # q = 2 K gamma / alpha
    L: float                    # truncation half-width L(eps)
    K: float
    alpha: float
    mu: float
    gamma: float
    sup_coeff: float
    A_of: object = None         # fast coefficient closure (constant folded)

    @property
    def linear(self):
        return self.quasi.linear


@dataclass
class MapEvaluation:
    """One evaluated point of H or G with convergence diagnostics."""

    t: float
    point: np.ndarray
    value: np.ndarray
    iterations: int
    residual: float
    window: tuple = None
    window_capped: bool = False
    sup_changes: list = field(default_factory=list)


def make_context(quasi, cert, eps=1e-6, mode="full-line"):
    """Validate the hypotheses and freeze the constants.

    Rejects q = 2 K gamma / alpha >= 1 (no contraction), non-verified
    certificates, and, in half-line-plus mode, any projector other than
    the identity (the causal window formula integrates from 0 and has
    no unstable part to split off).
    """
    if not isinstance(quasi, QuasilinearSystem):
        raise InvalidInput("make_context needs a QuasilinearSystem")
    if mode not in ("full-line", "half-line-plus"):
        raise InvalidInput(f"unknown mode {mode!r}")
    if cert.flag != "verified":
        raise CertificateRequired(
            f"certificate flag is {cert.flag!r}; linearization constants "
            "are only meaningful under a verified dichotomy")
    K = float(cert.K)
    alpha = float(cert.alpha)
    mu = float(quasi.mu)
    gamma = float(quasi.gamma)
    q = 2.0 * K * gamma / alpha
    if q >= 1.0:
        raise GapViolation(
            f"2 K gamma / alpha = {q:.4g} >= 1: the fixed-point operator "
            "is not a contraction for the declared constants")
    n = quasi.dim
    lo_dom, hi_dom = quasi.linear.domain_interval()
    if mode == "half-line-plus":
        P = cert.projector.matrix
        if np.abs(P - np.eye(n)).max() > 1e-9:
            raise ProjectorMismatch(
                "half-line-plus mode needs the identity projector "
                "(every solution decaying forward)")
        if lo_dom > 0 or not math.isinf(hi_dom):
            raise DomainError("system domain must cover [0, inf)")
    else:
        if quasi.linear.domain != "full-line":
            raise DomainError("full-line mode needs a full-line system")
    if mu > 0:
        L = max(0.0, math.log(2.0 * mu * K / (alpha * eps)) / alpha)
    else:
        L = 0.0
    if is_autonomous(quasi.linear):
        A0 = eval_coeff(quasi.linear, max(0.0, lo_dom))
        A_of = lambda s, _A=A0: _A
    else:
        A_of = lambda s, _sys=quasi.linear: eval_coeff(_sys, s)
    return LinearizationContext(
        quasi=quasi, cert=cert, eps=float(eps), mode=mode, gap_factor=q,
        L=L, K=K, alpha=alpha, mu=mu, gamma=gamma,
        sup_coeff=float(cert.sup_coeff), A_of=A_of)


def continuity_constant(ctx):
    """Modulus-of-continuity coefficient for eta -> G(t, eta).

    Gronwall across the window gives |y(s) - y'(s)| <=
    e^{(M + gamma)|s - t|} |eta - eta'|; folding in the kernel bound
    K e^{-alpha |t - s|} leaves D = K gamma e^{(M+gamma)L}(1 - e^{-aL})/a
    per window side, so |G(t,eta) - G(t,eta')| <= Theta |eta - eta'|
    with Theta = 1 + D (causal window) or 1 + 2D (two-sided).
    """
    M = ctx.sup_coeff
    L = ctx.L
    D = (ctx.K * ctx.gamma * math.exp((M + ctx.gamma) * L)
         * (1.0 - math.exp(-ctx.alpha * L)) / ctx.alpha)
    sides = 2.0 if ctx.mode == "full-line" else 1.0
    return 1.0 + sides * D


# ------------------------------------------------------------ window plumbing

def _cheb_nodes(lo, hi, m):
    x = np.cos(np.pi * np.arange(m) / (m - 1))[::-1]
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * x


def _bary_weights(m):
    w = np.ones(m)
    w[1::2] = -1.0
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _bary_eval(nodes, w, vals, s):
    """Barycentric value of the interpolant through (nodes, vals) at s."""
    d = s - nodes
    hit = np.nonzero(d == 0.0)[0]
    if hit.size:
        return vals[hit[0]]
    c = w / d
    return (c @ vals) / c.sum()


@dataclass(eq=False)
class _Window:
    degenerate: bool
    lo: float = 0.0
    hi: float = 0.0
    capped: bool = False
    cheb: np.ndarray = None
    bw: np.ndarray = None        # barycentric weights for cheb
    junctions: np.ndarray = None  # cheb plus the evaluation time t
    idx_t: int = 0               # position of t among the junctions
    cheb_pos: np.ndarray = None  # positions of cheb nodes among junctions
    Xfun: object = None          # dense fundamental matrix, anchored at t
    proj: object = None          # s -> invariant projector path (full-line)
    trunc: float = 0.0


def _build_window(ctx, t, lo, hi, capped):
    n = ctx.quasi.dim
    span = hi - lo
    if span < 1e-12:
        return _Window(degenerate=True, lo=lo, hi=hi)
    m = int(min(65, max(9, math.ceil(1.8 * span) + 9)))
    cheb = _cheb_nodes(lo, hi, m)
    junctions = np.unique(np.concatenate([cheb, [t]]))
    idx_t = int(np.searchsorted(junctions, t))
    cheb_pos = np.searchsorted(junctions, cheb)

    proj = None
    Xfun = None
    if ctx.mode == "full-line":
        Xfun = fundamental_trajectory(ctx.linear, t, lo, hi, tol=_ODE_TOL)
        if not capped:
            conds = np.array([np.linalg.cond(Xfun(s).reshape(n, n))
                              for s in junctions])
            ok = conds <= _COND_CAP
            if not ok.all():
                j = idx_t
                while j > 0 and ok[j - 1]:
                    j -= 1
                k = idx_t
                while k < len(junctions) - 1 and ok[k + 1]:
                    k += 1
                return _build_window(ctx, t, float(junctions[j]),
                                     float(junctions[k]), capped=True)
        c0 = ctx.cert.anchor
        if abs(t - c0) < 1e-12:
            T0 = np.eye(n)
        else:
            T0 = transition_matrix(ctx.linear, t, c0, tol=_ODE_TOL).X
        if np.linalg.cond(T0) > _COND_CAP:
            raise NumericalInconsistency(
                f"propagating the projector from t = {c0:g} to t = {t:g} "
                f"exceeds the conditioning cap {_COND_CAP:g}")
        P_t = T0 @ ctx.cert.projector.matrix @ np.linalg.inv(T0)

        def proj(s, _X=Xfun, _P=P_t, _n=n):
            Xs = _X(s).reshape(_n, _n)
            return Xs @ _P @ np.linalg.inv(Xs)

        scale = 2.0 * ctx.mu * ctx.K / ctx.alpha
        trunc = scale * (math.exp(-ctx.alpha * (t - lo))
                         + math.exp(-ctx.alpha * (hi - t)))
    else:
        trunc = 0.0
    return _Window(degenerate=False, lo=lo, hi=hi, capped=capped,
                   cheb=cheb, bw=_bary_weights(m), junctions=junctions,
                   idx_t=idx_t, cheb_pos=cheb_pos, Xfun=Xfun, proj=proj,
                   trunc=trunc)


@lru_cache(maxsize=64)
def _window(ctx, t):
    if ctx.mode == "half-line-plus":
        if t < 0:
            raise DomainError("half-line-plus mode evaluates at t >= 0")
        return _build_window(ctx, t, 0.0, float(t), capped=False)
    # pad so each truncated tail spends at most a quarter of eps
    pad = ctx.L + math.log(4.0) / ctx.alpha if ctx.mu > 0 else 1.0
    return _build_window(ctx, t, t - pad, t + pad, capped=False)


# ------------------------------------------------- kernel integrals as ODEs

def _fine_tol(ctx):
    """Sweep tolerance for the final iterations, tied to eps."""
    return max(1e-12, min(1e-8, ctx.eps * 3e-3))


def _causal_sweep(ctx, nodes, carried0, extra_rhs, tol):
    """One forward pass of the fused system over the half-line window.

    Integrates [carried; w] leg by leg between the nodes, where the
    carried block evolves by its own field (the frozen linear orbit for
    H, the perturbed orbit for G) and w' = A w + f(s, carried + shift);
    ``extra_rhs`` supplies (carried', drive) per call.  Node values of w
    are exact integration endpoints, never dense-output interpolants;
    backward orbits grow like e^{alpha(t-s)} so the drive can oscillate
    fast near s = 0 and the adaptive steps resolve it where it matters.

    Returns (w at every node, carried at the last node, damped error):
    local error tallies are discounted by e^{-alpha (t - s)} since the
    kernel contracts old errors at that rate.
    """
    n = ctx.quasi.dim
    A_of = ctx.A_of

    def rhs(s, state):
        c = state[:n]
        w = state[n:]
        dc, g = extra_rhs(s, c)
        return np.concatenate([dc, A_of(s) @ w + g])

    state = np.concatenate([carried0, np.zeros(n)])
    w_nodes = np.zeros((len(nodes), n))
    c_nodes = np.zeros((len(nodes), n))
    c_nodes[0] = carried0
    err = 0.0
    t_end = nodes[-1]
    for k in range(len(nodes) - 1):
        traj = integrate_ivp(rhs, state, nodes[k], nodes[k + 1], tol=tol)
        state = traj(nodes[k + 1])
        c_nodes[k + 1] = state[:n]
        w_nodes[k + 1] = state[n:]
        err += traj.err_accum * math.exp(-ctx.alpha * (t_end - nodes[k + 1]))
    return w_nodes, c_nodes, err


def _split_sweep(ctx, w, drive, stops, tol):
    """Kernel-split integral of ``drive`` at the requested junctions.

    Stable part: u' = A u + proj(s) drive(s), u(lo) = 0, swept forward;
    unstable part: v' = A v - (I - proj(s)) drive(s), v(hi) = 0, swept
    backward.  Each leg runs between consecutive junctions and the
    state is re-projected onto its bundle there, so the sweep never
    integrates a growing mode long enough to matter.  Returns the dict
    {junction index: u + v} over ``stops`` and the error tally.
    """
    n = ctx.quasi.dim
    J = w.junctions
    N = len(J)
    want = set(int(i) for i in stops)
    A = ctx.A_of

    def rhs_u(s, u):
        return A(s) @ u + w.proj(s) @ drive(s)

    def rhs_v(s, v):
        Pi = w.proj(s)
        return A(s) @ v + (np.eye(n) - Pi) @ drive(s)

    err = 0.0
    u_vals = {}
    u = np.zeros(n)
    u_vals[0] = u
    for k in range(N - 1):
        traj = integrate_ivp(rhs_u, u, J[k], J[k + 1], tol=tol)
        err += traj.err_accum
        u = w.proj(J[k + 1]) @ traj(J[k + 1])
        u_vals[k + 1] = u
    v_vals = {}
    v = np.zeros(n)
    v_vals[N - 1] = v
    eye = np.eye(n)
    for k in range(N - 1, 0, -1):
        traj = integrate_ivp(rhs_v, v, J[k], J[k - 1], tol=tol)
        err += traj.err_accum
        v = (eye - w.proj(J[k - 1])) @ traj(J[k - 1])
        v_vals[k - 1] = v
    # v was integrated from hi backward, so it already carries the
    # Green-function minus sign on the unstable side
    out = {k: u_vals[k] + v_vals[k] for k in want}
    return out, err


def _alias_estimate(ctx, nodes, orbit_nodes, t):
    """Conservative bound on the unresolvable part of the fixed point.

    The displacement z inherits an oscillation of frequency ~ |x'(s)|
    from f's composition with the frozen orbit; once the total phase
    across the window exceeds what the node polynomial can track, the
    iteration converges to the smoothed fixed point instead of the true
    one.  The bound weighs the standing displacement scale by the
    kernel decay from the nearest node whose phase rate passes pi.
    (Phase through explicit t-dependence of f is not counted.)
    """
    A_of = ctx.A_of
    rho = np.array([float(np.linalg.norm(A_of(c) @ x))
                    for c, x in zip(nodes, orbit_nodes)])
    total_phase = float(np.trapezoid(rho, nodes))
    if total_phase <= 0.6 * len(nodes):
        return 0.0
    fast = rho >= math.pi
    if not fast.any():
        return 0.0
    w = np.exp(-ctx.alpha * np.abs(t - nodes[fast])).max()
    return 2.0 * ctx.mu * ctx.K * ctx.gamma / ctx.alpha ** 2 * float(w)


def _nonlinear_drive(ctx, t, eta, w):
    """s -> f(s, y(s; t, eta)) from dense perturbed legs through (t, eta)."""
    legs = []
    if w.hi > t:
        legs.append(integrate_ivp(ctx.quasi, eta, t, w.hi, tol=_ODE_TOL))
    if w.lo < t:
        legs.append(integrate_ivp(ctx.quasi, eta, t, w.lo, tol=_ODE_TOL))

    def y_at(s):
        for leg in legs:
            if leg.times[0] - 1e-9 <= s <= leg.times[-1] + 1e-9:
                return leg(s)
        return eta

    return lambda s: ctx.quasi.f(s, y_at(s))


# ------------------------------------------------------------------ the maps

def eval_G(ctx, t, eta):
    """Map a perturbed state back to the linear frame.

    Integrates the perturbed solution through (t, eta) across the
    window once (it does not depend on the map), then removes its
    kernel-weighted nonlinearity.
    """
    t = float(t)
    n = ctx.quasi.dim
    eta = np.asarray(eta, dtype=float).reshape(n)
    w = _window(ctx, t)
    if w.degenerate:
        return MapEvaluation(t=t, point=eta, value=eta.copy(), iterations=1,
                             residual=0.0, window=(w.lo, w.hi))
    if ctx.mode == "half-line-plus":
        # carry the perturbed orbit itself: from its time-0 state the
        # forward fused pass recovers y(s) exactly where f samples it
        y0 = integrate_ivp(ctx.quasi, eta, t, 0.0, tol=_ODE_TOL)(0.0)
        quasi_f = ctx.quasi.f
        A_of = ctx.A_of

        def extra(s, y):
            g = quasi_f(s, y)
            return A_of(s) @ y + g, g

        w_nodes, y_nodes, err = _causal_sweep(ctx, w.cheb, y0, extra,
                                              _fine_tol(ctx))
        wt = w_nodes[-1]
        err += float(np.linalg.norm(y_nodes[-1] - eta))  # round-trip defect
    else:
        drive = _nonlinear_drive(ctx, t, eta, w)
        vals, err = _split_sweep(ctx, w, drive, [w.idx_t], _fine_tol(ctx))
        wt = vals[w.idx_t]
    value = eta - wt
    return MapEvaluation(t=t, point=eta, value=value, iterations=1,
                         residual=w.trunc + err, window=(w.lo, w.hi),
                         window_capped=w.capped)


def eval_H(ctx, t, xi):
    """Map a linear state into the perturbed frame by Picard iteration.

    The displacement z lives on the window's Chebyshev nodes
    (barycentric in between); each sweep integrates the kernel-split
    image of f(s, x(s) + z(s)) along the frozen linear solution
    x(s; t, xi) and reads the next z off at the nodes.  ``iterations``
    counts productive sweeps (those that moved z by more than the
    stopping tolerance).
    """
    t = float(t)
    n = ctx.quasi.dim
    xi = np.asarray(xi, dtype=float).reshape(n)
    w = _window(ctx, t)
    if w.degenerate:
        return MapEvaluation(t=t, point=xi, value=xi.copy(), iterations=1,
                             residual=0.0, window=(w.lo, w.hi))
    q = ctx.gap_factor
    stop = ctx.eps * (1.0 - q)
    fine = _fine_tol(ctx)
    quasi_f = ctx.quasi.f
    A_of = ctx.A_of
    nodes = w.cheb
    bw = w.bw
    if ctx.mode == "half-line-plus":
        x0 = integrate_ivp(ctx.linear, xi, t, 0.0, tol=_ODE_TOL)(0.0)
    else:
        Xfun = w.Xfun

        def x_at(s, _X=Xfun, _xi=xi, _n=n):
            return _X(s).reshape(_n, _n) @ _xi

    z = np.zeros((len(nodes), n))
    changes = []
    cap = None
    err = 0.0
    z_t = np.zeros(n)
    while True:
        # early sweeps run at a coarse tolerance: their Picard error
        # dominates whatever the integrator leaves behind; switch to
        # the fine tolerance once the forecast puts the next change
        # within two decades of the stopping threshold
        if changes and changes[-1] * q <= 100.0 * stop:
            tol = fine
        else:
            tol = max(fine, 1e-6)
        if ctx.mode == "half-line-plus":
            def extra(s, x, _z=z):
                g = quasi_f(s, x + _bary_eval(nodes, bw, _z, s))
                return A_of(s) @ x, g

            z_new, orbit_nodes, err = _causal_sweep(ctx, nodes, x0, extra,
                                                    tol)
            z_t = z_new[-1]
        else:
            def drive(s, _z=z):
                return quasi_f(s, x_at(s) + _bary_eval(nodes, bw, _z, s))

            stops = list(w.cheb_pos) + [w.idx_t]
            vals, err = _split_sweep(ctx, w, drive, stops, tol)
            z_new = np.stack([vals[k] for k in w.cheb_pos])
            z_t = vals[w.idx_t]
            orbit_nodes = np.stack([x_at(c) for c in nodes])
        change = float(np.linalg.norm(z_new - z, axis=1).max())
        changes.append(change)
        z = z_new
        if change <= stop:
            break
        if cap is None:
            z1 = max(change, 1e-300)
            if stop >= z1:
                cap = 1
            else:
                cap = math.ceil(math.log(stop / z1)
                                / math.log(max(q, 1e-6))) + 1
        if len(changes) > cap + 3:
            raise NoConvergence(
                f"Picard sweeps exceeded the contraction forecast "
                f"({cap} from q = {q:.3g}); declared mu/gamma are "
                "likely violated by f")
    value = xi + z_t
    tail = changes[-1] * q / (1.0 - q)
    alias = _alias_estimate(ctx, nodes, orbit_nodes, t)
    productive = sum(1 for c in changes if c > stop)
    return MapEvaluation(t=t, point=xi, value=value,
                         iterations=max(1, productive),
                         residual=w.trunc + tail + err + alias,
                         window=(w.lo, w.hi), window_capped=w.capped,
                         sup_changes=changes)


def inverse_residual(ctx, t, point):
    """max of |G(t, H(t, p)) - p| and |H(t, G(t, p)) - p|."""
    p = np.asarray(point, dtype=float).reshape(ctx.quasi.dim)
    gh = eval_G(ctx, t, eval_H(ctx, t, p).value).value
    hg = eval_H(ctx, t, eval_G(ctx, t, p).value).value
    return float(max(np.linalg.norm(gh - p), np.linalg.norm(hg - p)))


def conjugacy_residual(ctx, tau, xi, horizon, n_checks=9):
    """How far H strays from intertwining the two flows.

    Starts the perturbed system from H(tau, xi) and compares its values
    against H applied to the linear flow of xi at sample times across
    the horizon; returns the largest gap.
    """
    tau = float(tau)
    xi = np.asarray(xi, dtype=float).reshape(ctx.quasi.dim)
    y0 = eval_H(ctx, tau, xi).value
    times = np.linspace(tau, tau + float(horizon), int(n_checks))
    ytraj = integrate_ivp(ctx.quasi, y0, tau, times[-1], tol=_ODE_TOL)
    Xp = transition_path(ctx.linear, tau, times, tol=_ODE_TOL)
    worst = 0.0
    for tk, Xk in zip(times, Xp):
        hk = eval_H(ctx, tk, Xk @ xi).value
        worst = max(worst, float(np.linalg.norm(ytraj(tk) - hk)))
    return worst


def _fd_jacobian(ctx, s, y):
    n = ctx.quasi.dim
    J = np.empty((n, n))
    d = 1e-6 * max(1.0, float(np.abs(y).max()))
    for j in range(n):
        e = np.zeros(n)
        e[j] = d
        J[:, j] = (ctx.quasi.f(s, y + e) - ctx.quasi.f(s, y - e)) / (2 * d)
    return J


def G_jacobian(ctx, t, eta):
    """d G / d eta on the half-line, with its (positive) determinant.

    On [0, t] the map factorizes through the backward perturbed flow,
    G(t, eta) = X(t, 0) y(0; t, eta), so the Jacobian is X(t, 0) times
    the variational solution of the perturbed system integrated from t
    down to 0.  Liouville makes the determinant positive; a nonpositive
    computed value means the integration lost the Jacobian.
    """
    if ctx.mode != "half-line-plus":
        raise DomainError("G_jacobian is defined for half-line-plus mode")
    t = float(t)
    if t < 0:
        raise DomainError("half-line-plus mode evaluates at t >= 0")
    n = ctx.quasi.dim
    eta = np.asarray(eta, dtype=float).reshape(n)
    if t == 0.0:
        return np.eye(n), 1.0

    def rhs(s, u, _n=n):
        y = u[:_n]
        V = u[_n:].reshape(_n, _n)
        A = eval_coeff(ctx.linear, s)
        dy = A @ y + ctx.quasi.f(s, y)
        dV = (A + _fd_jacobian(ctx, s, y)) @ V
        return np.concatenate([dy, dV.ravel()])

    u0 = np.concatenate([eta, np.eye(n).ravel()])
    traj = integrate_ivp(rhs, u0, t, 0.0, tol=1e-11)
    V0 = traj(0.0)[n:].reshape(n, n)
    Xt0 = transition_matrix(ctx.linear, t, 0.0, tol=1e-11).X
    DG = Xt0 @ V0
    det = float(np.linalg.det(DG))
    if det <= 1e-12:
        raise NumericalInconsistency(
            f"Jacobian determinant {det:.3g} is not positive; the "
            "variational integration is inconsistent")
    return DG, det


def evaluations_to_csv(evals):
    """One line per MapEvaluation: t, inputs, outputs, iterations, residual."""
    lines = []
    for e in evals:
        cells = ([f"{e.t:.17g}"]
                 + [f"{v:.17g}" for v in np.atleast_1d(e.point)]
                 + [f"{v:.17g}" for v in np.atleast_1d(e.value)]
                 + [str(e.iterations), f"{e.residual:.17g}"])
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
