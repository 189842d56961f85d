"""Numerical propagation: embedded RK5(4) with PI step control, transition
matrices, and the classical flow identities (Liouville, adjoint, cocycle).

The integrator is self-contained (Dormand-Prince coefficients, cubic
Hermite dense output).  Backward runs negate the vector field instead of
stepping with negative h, so the controller logic stays one-directional.
Matrix initial value problems are column-stacked into vectors.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import Blowup, InvalidInput, StiffnessFailure
from .linalg import operator_norm_2
from .system import LinearSystem, QuasilinearSystem, eval_coeff

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_ERR = np.array([
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
])

_MAX_STEPS = 5_000_000
_BLOWUP_NORM = 1e150


def _rhs_of(sys):
    """Vector field of a system object or passthrough for callables."""
    if isinstance(sys, LinearSystem):
        def f(t, x, _s=sys):
            return eval_coeff(_s, t) @ x
        return f
    if isinstance(sys, QuasilinearSystem):
        def f(t, x, _s=sys):
            return eval_coeff(_s.linear, t) @ x + _s.f(t, x)
        return f
    if callable(sys):
        return sys
    raise InvalidInput(f"cannot interpret {type(sys).__name__} as a vector field")


@dataclass
class Trajectory:
    """Accepted integration nodes with cubic Hermite dense output.

    times is always ascending regardless of integration direction;
    interpolation order is 3 between nodes.
    """

    times: np.ndarray
    states: np.ndarray          # (N, m) flattened states
    derivs: np.ndarray          # (N, m) flattened derivatives
    shape: tuple                # original state shape
    tol: float
    err_accum: float            # summed norms of local error estimates
    order: int = 3

    def _segment(self, t):
        times = self.times
        if t < times[0] - 1e-9 * max(1.0, abs(times[0])) or \
           t > times[-1] + 1e-9 * max(1.0, abs(times[-1])):
            raise InvalidInput(
                f"t={t} outside trajectory range [{times[0]}, {times[-1]}]"
            )
        k = int(np.searchsorted(times, t, side="right")) - 1
        return min(max(k, 0), len(times) - 2)

    def __call__(self, t):
        t = float(t)
        k = self._segment(t)
        t0, t1 = self.times[k], self.times[k + 1]
        h = t1 - t0
        if h == 0:
            return self.states[k].reshape(self.shape)
        s = (t - t0) / h
        y0, y1 = self.states[k], self.states[k + 1]
        d0, d1 = self.derivs[k] * h, self.derivs[k + 1] * h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        out = h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1
        return out.reshape(self.shape)

    def sample(self, ts):
        """Vectorized dense evaluation at many times."""
        ts = np.asarray(ts, dtype=float)
        ks = np.clip(np.searchsorted(self.times, ts, side="right") - 1,
                     0, len(self.times) - 2)
        t0 = self.times[ks]
        h = self.times[ks + 1] - t0
        s = np.where(h > 0, (ts - t0) / np.where(h == 0, 1, h), 0.0)[:, None]
        y0, y1 = self.states[ks], self.states[ks + 1]
        d0 = self.derivs[ks] * h[:, None]
        d1 = self.derivs[ks + 1] * h[:, None]
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        out = h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1
        return out.reshape((len(ts),) + self.shape)

    def state_at_node(self, t, rtol=1e-12):
        """State at a node time (exact hit expected, e.g. from t_eval)."""
        k = int(np.searchsorted(self.times, t))
        for i in (k - 1, k, k + 1):
            if 0 <= i < len(self.times) and \
               abs(self.times[i] - t) <= rtol * max(1.0, abs(t)):
                return self.states[i].reshape(self.shape)
        raise InvalidInput(f"t={t} is not a trajectory node")


def _initial_step(f, t0, y0, f0, direction, tol, span):
    scale = tol + tol * np.abs(y0)
    d0 = np.linalg.norm(y0 / scale) / math.sqrt(y0.size)
    d1 = np.linalg.norm(f0 / scale) / math.sqrt(y0.size)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * direction * f0
    f1 = f(t0 + h0 * direction, y1)
    d2 = np.linalg.norm((f1 - f0) / scale) / math.sqrt(y0.size) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def integrate_ivp(sys, x0, t0, t1, tol=1e-9, t_eval=None, max_step=math.inf):
    """Integrate x' = f(t, x) from (t0, x0) to t1.

    sys may be a LinearSystem, QuasilinearSystem, or callable f(t, x).
    x0 may be a vector or matrix (matrix problems are column-stacked).
    Local error per step is controlled to ~tol (mixed abs/rel).  Times in
    t_eval are hit exactly and recorded as nodes.  Raises Blowup when the
    state leaves the finite range and StiffnessFailure when the step size
    underflows; both carry last_valid_time.
    """
    f_raw = _rhs_of(sys)
    x0 = np.asarray(x0, dtype=float)
    shape = x0.shape
    t0 = float(t0)
    t1 = float(t1)
    if not np.all(np.isfinite(x0)):
        raise InvalidInput("initial state has non-finite entries")
    if tol <= 0:
        raise InvalidInput("tol must be positive")
    dim = getattr(sys, "dim", None)
    if dim is not None and (x0.ndim == 0 or x0.shape[0] != dim):
        raise InvalidInput(
            f"initial state shape {shape} does not match dim {dim}")

    def f_flat(t, yflat):
        return np.asarray(f_raw(t, yflat.reshape(shape)), dtype=float).ravel()

    if t1 == t0:
        d0 = f_flat(t0, x0.ravel())
        return Trajectory(
            times=np.array([t0]), states=x0.ravel()[None, :].copy(),
            derivs=d0[None, :], shape=shape, tol=tol, err_accum=0.0,
        )

    direction = 1.0 if t1 > t0 else -1.0
    # backward runs use the reversed field g(tau, x) = -f(-tau, x)
    if direction > 0:
        f = f_flat
        a, b = t0, t1
    else:
        def f(tau, y):
            return -f_flat(-tau, y)
        a, b = -t0, -t1

    evals = []
    if t_eval is not None:
        evals = sorted(float(direction * te) for te in t_eval)
        for te in evals:
            if te < a - 1e-12 or te > b + 1e-12:
                raise InvalidInput("t_eval point outside integration range")

    t = a
    y = x0.ravel().copy()
    try:
        k1 = f(t, y)
    except OverflowError:
        raise Blowup("vector field overflowed at the initial time",
                     last_valid_time=t0)
    times = [t]
    states = [y.copy()]
    derivs = [k1.copy()]
    err_accum = 0.0
    h = min(_initial_step(f, t, y, k1, 1.0, tol, b - a), max_step)
    err_prev = 1.0
    eval_idx = 0
    while eval_idx < len(evals) and evals[eval_idx] <= t + 1e-14 * max(1, abs(t)):
        eval_idx += 1
    n_steps = 0
    hmin_rejections = 0

    while t < b:
        if n_steps > _MAX_STEPS:
            raise StiffnessFailure(
                f"step budget exhausted at t={direction * t}",
                last_valid_time=direction * t,
            )
        hmin = 16 * np.finfo(float).eps * max(abs(t), 1.0)
        h = max(h, hmin)
        h = min(h, b - t, max_step)
        hit_eval = False
        if eval_idx < len(evals) and t + h >= evals[eval_idx] - 1e-14:
            h = evals[eval_idx] - t
            hit_eval = True
            if h <= hmin:
                # duplicate/ultra-close eval point: snap to current node
                times.append(evals[eval_idx])
                states.append(y.copy())
                derivs.append(k1.copy())
                t = evals[eval_idx]
                eval_idx += 1
                continue
        ks = [k1]
        try:
            for i in range(1, 7):
                yi = y + h * (np.stack(ks, axis=0).T @ _A[i])
                ks.append(f(t + _C[i] * h, yi))
        except OverflowError:
            raise Blowup(f"vector field overflowed near t={direction * t}",
                         last_valid_time=direction * t)
        K = np.stack(ks, axis=0)
        y_new = y + h * (K.T @ _B5)
        err_vec = h * (K.T @ _ERR)
        if not np.all(np.isfinite(y_new)):
            raise Blowup(f"state became non-finite near t={direction * t}",
                         last_valid_time=direction * t)
        sc = tol + tol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.linalg.norm(err_vec / sc) / math.sqrt(y.size)
        if err <= 1.0:
            n_steps += 1
            hmin_rejections = 0
            t_new = evals[eval_idx] if hit_eval else t + h
            k_new = K[6]  # FSAL
            times.append(t_new)
            states.append(y_new.copy())
            derivs.append(k_new.copy())
            err_accum += float(np.linalg.norm(err_vec))
            if np.linalg.norm(y_new) > _BLOWUP_NORM:
                raise Blowup(
                    f"state norm exceeded {_BLOWUP_NORM:.1e} at "
                    f"t={direction * t_new}",
                    last_valid_time=direction * t_new,
                )
            t = t_new
            y = y_new
            k1 = k_new
            if hit_eval:
                eval_idx += 1
            # PI controller (Gustafsson): history-weighted growth
            fac = 0.9 * err ** -0.14 * err_prev ** 0.08 if err > 0 else 5.0
            h *= min(5.0, max(0.2, fac))
            err_prev = max(err, 1e-10)
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
            h *= fac
            if h <= hmin:
                hmin_rejections += 1
                if hmin_rejections > 10:
                    raise StiffnessFailure(
                        f"step size underflow at t={direction * t}",
                        last_valid_time=direction * t,
                    )

    times = np.asarray(times)
    states = np.asarray(states)
    derivs = np.asarray(derivs)
    if direction < 0:
        times = -times[::-1]
        states = states[::-1]
        derivs = -derivs[::-1]  # d/dt = -d/dtau
    return Trajectory(times=times, states=states, derivs=derivs, shape=shape,
                      tol=tol, err_accum=err_accum)


@dataclass
class TransitionSample:
    """One evaluated transition matrix X(t, s) with its error estimate."""

    t: float
    s: float
    X: np.ndarray
    tol: float
    err_est: float


def matrix_rhs(sys):
    """Matrix vector field M' = A(t) M for a linear system."""
    def f(t, M, _s=sys):
        return eval_coeff(_s, t) @ M
    return f


def transition_matrix(sys, t, s, tol=1e-10):
    """X(t, s): solution of X' = A(t) X, X(s) = I, evaluated at t."""
    n = sys.dim
    traj = integrate_ivp(matrix_rhs(sys), np.eye(n), s, t, tol=tol)
    X = traj.states[-1 if t >= s else 0].reshape((n, n))
    return TransitionSample(t=float(t), s=float(s), X=X, tol=tol,
                            err_est=traj.err_accum)


def transition_path(sys, anchor, times, tol=1e-10):
    """X(t_i, anchor) for every requested time, hit exactly as nodes.

    One forward and one backward integration from the anchor; returns an
    array of shape (len(times), n, n) in the order given.
    """
    n = sys.dim
    times = [float(t) for t in times]
    fwd = sorted(t for t in times if t > anchor)
    bwd = sorted((t for t in times if t < anchor), reverse=True)
    out = {anchor: np.eye(n)}
    if fwd:
        traj = integrate_ivp(matrix_rhs(sys), np.eye(n), anchor, fwd[-1],
                             tol=tol, t_eval=fwd)
        for t in fwd:
            out[t] = traj.state_at_node(t)
    if bwd:
        traj = integrate_ivp(matrix_rhs(sys), np.eye(n), anchor, bwd[-1],
                             tol=tol, t_eval=bwd)
        for t in bwd:
            out[t] = traj.state_at_node(t)
    return np.array([out[t] for t in times])


def fundamental_trajectory(sys, anchor, lo, hi, tol=1e-10):
    """Dense trajectories of X(., anchor) covering [lo, hi].

    Returns a callable X(t) stitched from the forward/backward legs.
    """
    n = sys.dim
    legs = []
    if hi > anchor:
        legs.append(integrate_ivp(matrix_rhs(sys), np.eye(n), anchor, hi, tol=tol))
    if lo < anchor:
        legs.append(integrate_ivp(matrix_rhs(sys), np.eye(n), anchor, lo, tol=tol))

    def X(t):
        t = float(t)
        for leg in legs:
            if leg.times[0] - 1e-9 <= t <= leg.times[-1] + 1e-9:
                return leg(t)
        if abs(t - anchor) < 1e-12:
            return np.eye(n)
        raise InvalidInput(f"t={t} outside covered range [{lo}, {hi}]")

    X.legs = legs
    return X


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=48):
    """Adaptive Simpson quadrature for scalar- or vector-valued f.

    Smooth integrands assumed; on depth exhaustion the current estimate
    is accepted (the callers control their integrands).
    """
    a = float(a)
    b = float(b)
    if a == b:
        return np.zeros_like(np.asarray(f(a), dtype=float)) * 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    fa = np.asarray(f(a), dtype=float)
    fb = np.asarray(f(b), dtype=float)
    m = 0.5 * (a + b)
    fm = np.asarray(f(m), dtype=float)
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm = np.asarray(f(lm), dtype=float)
        frm = np.asarray(f(rm), dtype=float)
        left = (m - a) / 6.0 * (fa + 4 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4 * frm + fb)
        delta = left + right - whole
        if depth <= 0 or np.max(np.abs(delta)) <= 15 * tol:
            return left + right + delta / 15.0
        return (rec(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    return sign * rec(a, b, fa, fm, fb, whole, tol, max_depth)


@dataclass
class LiouvilleCheck:
    det_numeric: float
    det_formula: float
    rel_err: float


def liouville_check(sys, t0, t1, tol=1e-10):
    """det X(t1, t0) against exp(integral of trace A)."""
    X = transition_matrix(sys, t1, t0, tol=tol).X
    det_numeric = float(np.linalg.det(X))
    tr = adaptive_simpson(lambda s: np.trace(eval_coeff(sys, s)), t0, t1,
                          tol=tol)
    det_formula = float(np.exp(tr))
    rel = abs(det_numeric - det_formula) / max(abs(det_formula), 1e-300)
    return LiouvilleCheck(det_numeric=det_numeric, det_formula=det_formula,
                          rel_err=float(rel))


def adjoint_check(sys, grid, tol=1e-10):
    """Worst defect of Y(t)^T X(t) = const for the adjoint flow.

    X solves x' = A x and Y solves y' = -A(t)^T y, both normalized to I
    at the first grid time, so the conserved product is the identity.
    """
    grid = sorted(float(t) for t in grid)
    if len(grid) < 2:
        raise InvalidInput("need at least two grid times")
    anchor = grid[0]
    Xs = transition_path(sys, anchor, grid, tol=tol)

    adj = LinearSystem(
        name=f"{sys.name}_adjoint", dim=sys.dim,
        coeff=lambda t, _s=sys: -eval_coeff(_s, t).T,
        domain=sys.domain, period=sys.period,
    )
    Ys = transition_path(adj, anchor, grid, tol=tol)
    I = np.eye(sys.dim)
    return max(operator_norm_2(Y.T @ X - I) for X, Y in zip(Xs, Ys))


def sylvester_flow(A_sys, B_sys, F, Q0, s, t, tol=1e-10):
    """Solve Q' = A(t) Q - Q B(t) + F(t) from Q(s) = Q0 to time t.

    A_sys/B_sys may be LinearSystems, constant matrices, or callables;
    F may be a callable, a constant matrix, or None.
    """
    Q0 = np.atleast_2d(np.asarray(Q0, dtype=float))

    def as_map(obj, name):
        if obj is None:
            return None
        if isinstance(obj, LinearSystem):
            return lambda t, _s=obj: eval_coeff(_s, t)
        if callable(obj):
            return lambda t, _f=obj: np.atleast_2d(np.asarray(_f(t), dtype=float))
        M = np.atleast_2d(np.asarray(obj, dtype=float))
        return lambda t, _M=M: _M

    Am = as_map(A_sys, "A")
    Bm = as_map(B_sys, "B")
    Fm = as_map(F, "F")

    def rhs(t, Q):
        out = Am(t) @ Q - Q @ Bm(t)
        if Fm is not None:
            out = out + Fm(t)
        return out

    traj = integrate_ivp(rhs, Q0, s, t, tol=tol)
    return traj.states[-1 if t >= s else 0].reshape(Q0.shape)


@dataclass
class GrowthFit:
    """Log-linear envelope fit of transition norms.

    K >= 1 and alpha are the tightest constants with
    ||X(t,s)|| <= K e^{alpha tau} on the grid (tau per mode); uniform is
    False when the fitted rate grows materially from the first
    half-window to the full window, the finite-horizon signature of a
    system without bounded growth.
    """

    K: float
    alpha: float
    worst_pair: tuple
    uniform: bool
    mode: str


def _envelope_alpha(taus, logs):
    """Least-squares slope of the upper envelope of (tau, log norm)."""
    env = {}
    for tau, l in zip(taus, logs):
        key = round(tau, 9)
        if key not in env or l > env[key]:
            env[key] = l
    ts = np.array(sorted(env))
    ls = np.array([env[k] for k in ts])
    if len(ts) < 2:
        return 0.0
    ts = np.concatenate([[0.0], ts]) if ts[0] > 0 else ts
    ls = np.concatenate([[0.0], ls]) if len(ls) < len(ts) else ls
    A = np.vstack([ts, np.ones_like(ts)]).T
    slope, _ = np.linalg.lstsq(A, ls, rcond=None)[0]
    return float(slope)


def bounded_growth_fit(sys, interval, n_grid=41, mode="growth", tol=1e-10):
    """Fit ||X(t,s)|| <= K e^{alpha tau} over a uniform grid.

    mode 'growth' uses ordered pairs t >= s (tau = t - s), 'decay' uses
    t <= s (tau = s - t), 'both' uses all pairs (tau = |t - s|).
    """
    if mode not in ("growth", "decay", "both"):
        raise InvalidInput(f"unknown mode {mode!r}")
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise InvalidInput("interval must have positive length")
    grid = np.linspace(a, b, n_grid)
    anchor = grid[0]
    Xs = transition_path(sys, anchor, grid, tol=tol)
    inv = np.array([np.linalg.inv(X) for X in Xs])

    def pairs(idx):
        taus, logs, labels = [], [], []
        for i in idx:
            for j in idx:
                ti, tj = grid[i], grid[j]
                if mode == "growth" and ti < tj:
                    continue
                if mode == "decay" and ti > tj:
                    continue
                if i == j:
                    continue
                nrm = operator_norm_2(Xs[i] @ inv[j])
                taus.append(abs(ti - tj))
                logs.append(math.log(max(nrm, 1e-300)))
                labels.append((float(ti), float(tj)))
        return np.array(taus), np.array(logs), labels

    all_idx = range(n_grid)
    half_idx = range(n_grid // 2 + 1)
    taus, logs, labels = pairs(all_idx)
    h_taus, h_logs, _ = pairs(half_idx)
    alpha = _envelope_alpha(taus, logs)
    alpha_half = _envelope_alpha(h_taus, h_logs)
    uniform = alpha <= alpha_half + max(0.1, 0.2 * abs(alpha_half))
    slack = logs - alpha * taus
    kidx = int(np.argmax(slack))
    K = max(1.0, float(np.exp(slack[kidx])))
    return GrowthFit(K=K, alpha=alpha, worst_pair=labels[kidx],
                     uniform=bool(uniform), mode=mode)


def simpson_weights(m, h):
    """Fourth-order composite quadrature weights for m uniform nodes.

    Odd m uses plain composite Simpson; even m >= 4 closes the last
    four nodes with the 3/8 rule so the order is kept; m == 2 falls
    back to the trapezoid, m == 1 gives a zero weight.
    """
    m = int(m)
    if m < 1:
        raise InvalidInput("need at least one node")
    if m == 1:
        return np.zeros(1)
    if m == 2:
        return np.array([0.5 * h, 0.5 * h])
    w = np.zeros(m)
    if m % 2 == 1:
        w[0] = w[-1] = h / 3.0
        w[1:-1:2] = 4.0 * h / 3.0
        w[2:-1:2] = 2.0 * h / 3.0
        return w
    head = m - 3
    if head >= 3:
        w[0] = h / 3.0
        w[1:head - 1:2] = 4.0 * h / 3.0
        w[2:head - 1:2] = 2.0 * h / 3.0
        w[head - 1] += h / 3.0
    w[m - 4] += 3.0 * h / 8.0
    w[m - 3] += 9.0 * h / 8.0
    w[m - 2] += 9.0 * h / 8.0
    w[m - 1] += 3.0 * h / 8.0
    return w


def trajectory_to_csv(traj, labels=None):
    """CSV text of a trajectory's nodes, 17 significant digits."""
    m = traj.states.shape[1]
    if labels is None:
        labels = [f"x{i + 1}" for i in range(m)]
    lines = ["t, " + ", ".join(labels)]
    for t, row in zip(traj.times, traj.states):
        lines.append(", ".join(f"{v:.17g}" for v in [t, *row]))
    return "\n".join(lines) + "\n"
