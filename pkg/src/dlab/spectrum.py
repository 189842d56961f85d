"""Exponential/Bohl spectra via sequential QR triangularization.

The coefficient is conjugated to upper-triangular form by the
orthogonal factor of a step-by-step QR sweep of the fundamental matrix.
Diagonal growth of the triangular factor gives per-direction Bohl
window averages; spectral intervals are merged clusters of the
resulting (beta_minus, beta_plus) pairs.  Half-line reports come from
one forward sweep, full-line reports from the union with the mirrored
sweep of the time-reversed system (a surrogate that can miss spectrum
in gaps where the two half-line ranks disagree; see fullline_spectrum).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    HorizonTooShort,
    InvalidInput,
    NumericalInconsistency,
    UnboundedCoefficients,
)
from .linalg import gram_schmidt_qr, operator_norm_2
from .propagate import integrate_ivp, matrix_rhs
from .system import eval_coeff, reversed_system, shifted_system
from .dichotomy import certify, estimate_splitting, min_principal_angle


# ----------------------------------------------------------- triangularization

@dataclass
class TriangularReduction:
    """Orthogonal change of frame making the coefficient upper-triangular.

    log_diag[k, i] is the accumulated log of the i-th diagonal of the
    triangular fundamental factor at grid[k] (zero at the start), so
    differences over a window are exact window growth integrals.
    B_nodes holds the triangularized coefficient sampled at the nodes.
    """

    grid: np.ndarray
    Q: np.ndarray            # (N, n, n) orthogonal frames
    R_steps: np.ndarray      # (N-1, n, n) per-step triangular factors
    log_diag: np.ndarray     # (N, n) cumulative log growth per direction
    step_rates: np.ndarray   # (N-1, n)
    B_nodes: np.ndarray      # (N, n, n) triangular coefficient samples
    offdiag_bound: float
    coeff_bound: float


def perron_triangularize(sys, t0, t1, h=None, n_steps=None, tol=1e-12,
                         Q0=None):
    """Sweep [t0, t1] with steps of size ~h (default 0.05).

    Q0 picks the starting frame.  Tracking is numerically stable only
    when the flag spanned by the leading columns is the dominant one
    (perturbations of a subdominant flag grow and eventually swap the
    tracked labels), so callers doing long sweeps should pre-order the
    columns by observed growth; see halfline_spectrum.
    """
    t0, t1 = float(t0), float(t1)
    if not t1 > t0:
        raise InvalidInput("need t1 > t0")
    n = sys.dim
    if n_steps is None:
        n_steps = max(2, int(math.ceil((t1 - t0) / (h or 0.05))))
    grid = np.linspace(t0, t1, n_steps + 1)
    rhs = matrix_rhs(sys)

    Q = np.empty((n_steps + 1, n, n))
    Rs = np.empty((n_steps, n, n))
    log_diag = np.zeros((n_steps + 1, n))
    rates = np.empty((n_steps, n))
    if Q0 is None:
        Q[0] = np.eye(n)
    else:
        Q0 = np.asarray(Q0, dtype=float)
        if Q0.shape != (n, n):
            raise InvalidInput("Q0 must be n x n")
        if operator_norm_2(Q0.T @ Q0 - np.eye(n)) > 1e-10:
            raise InvalidInput("Q0 must be orthogonal")
        Q[0] = Q0
    for k in range(n_steps):
        traj = integrate_ivp(rhs, Q[k], grid[k], grid[k + 1], tol=tol)
        Z = traj.states[-1].reshape(n, n)
        Qn, R = gram_schmidt_qr(Z)
        Q[k + 1] = Qn
        Rs[k] = R
        d = np.log(np.diag(R))
        log_diag[k + 1] = log_diag[k] + d
        rates[k] = d / (grid[k + 1] - grid[k])

    B = np.empty((n_steps + 1, n, n))
    off = 0.0
    bnd = 0.0
    for k in range(n_steps + 1):
        C = Q[k].T @ eval_coeff(sys, grid[k]) @ Q[k]
        Bk = np.triu(C) + np.triu(C.T, 1)
        B[k] = Bk
        off = max(off, operator_norm_2(Bk - np.diag(np.diag(Bk))))
        bnd = max(bnd, operator_norm_2(Bk))
    return TriangularReduction(grid=grid, Q=Q, R_steps=Rs,
                               log_diag=log_diag, step_rates=rates,
                               B_nodes=B, offdiag_bound=float(off),
                               coeff_bound=float(bnd))


# ------------------------------------------------------------- Bohl windows

@dataclass
class BohlPair:
    beta_minus: float
    beta_plus: float
    window: float
    start_range: tuple
    unbounded: str | None = None   # '+inf' | '-inf' | None
    starts: np.ndarray = None
    averages: np.ndarray = None


def scalar_bohl(times, values, L, cumulative=False, burn_in=None,
                cap=1e3, drift_tol=1.0):
    """Window growth averages of one scalar direction.

    values are either rate samples a(t_k) (integrated by trapezoid) or,
    with cumulative=True, the integral I(t_k) itself.  Window averages
    (I(s+L) - I(s))/L are taken for starts s in [burn_in, T - L]
    (burn_in defaults to the midpoint, discarding transients).  A
    drifting or capped average marks the direction unbounded instead of
    returning a meaningless finite pair.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or times.shape != values.shape:
        raise InvalidInput("times and values must be matching 1-d arrays")
    if len(times) < 3:
        raise InvalidInput("need at least three samples")
    L = float(L)
    if L <= 0:
        raise InvalidInput("window length must be positive")
    T0, T1 = float(times[0]), float(times[-1])
    if cumulative:
        I = values
    else:
        steps = np.diff(times)
        I = np.concatenate(
            [[0.0], np.cumsum(0.5 * steps * (values[1:] + values[:-1]))])
    if burn_in is None:
        burn_in = T0 + 0.5 * (T1 - T0)
    starts = times[(times >= burn_in - 1e-12) & (times <= T1 - L + 1e-12)]
    if len(starts) == 0:
        raise HorizonTooShort(
            f"no window starts in [{burn_in:g}, {T1 - L:g}]; "
            "need horizon >= 2 * window past burn-in")
    avg = (np.interp(starts + L, times, I) - np.interp(starts, times, I)) / L
    b_minus = float(avg.min())
    b_plus = float(avg.max())
    drift = float(avg[-1] - avg[0])
    unbounded = None
    if drift > drift_tol or b_plus > cap:
        unbounded = "+inf"
    elif drift < -drift_tol or b_minus < -cap:
        unbounded = "-inf"
    return BohlPair(beta_minus=b_minus, beta_plus=b_plus, window=L,
                    start_range=(float(starts[0]), float(starts[-1])),
                    unbounded=unbounded, starts=starts, averages=avg)


def _exchange_rescue(pairs):
    """Undo numerical direction relabeling in a drifting sweep.

    A QR sweep started on a subdominant flag loses it to rounding after
    roughly log(1/eps)/spread time units: two diagonal slots exchange
    their growth rates, which the drift detector then reads as
    unbounded spectrum.  The signature of an exchange, as opposed to
    genuine drift, is that the multiset of first-window averages equals
    the multiset of last-window averages.  When that holds, each
    direction is re-averaged over its leading plateau (the initial run
    of windows staying near the first value) and the markers cleared.
    Returns (new_pairs, note) or (pairs, None) when no rescue applies.
    """
    if not any(p.unbounded for p in pairs):
        return pairs, None
    first = sorted(float(p.averages[0]) for p in pairs)
    last = sorted(float(p.averages[-1]) for p in pairs)
    spread = max(first[-1] - first[0], 1e-12)
    atol = max(0.1, 0.05 * max(abs(v) for v in first + last))
    if any(abs(a - b) > atol for a, b in zip(first, last)):
        return pairs, None
    def common_cut(ptol):
        cut = min(len(p.averages) for p in pairs)
        for p in pairs:
            off = np.abs(p.averages - p.averages[0])
            bad = np.nonzero(off > ptol)[0]
            if len(bad):
                cut = min(cut, int(bad[0]))
        return cut

    # the onset of an exchange is sharp, so prefer a tight plateau and
    # only fall back to a loose one when too few windows survive
    cut = common_cut(max(0.02, 0.02 * spread))
    if cut < 3:
        cut = common_cut(max(0.1, 0.25 * spread))
    if cut < 3:
        return pairs, None
    out = []
    for p in pairs:
        a = p.averages[:cut]
        out.append(BohlPair(
            beta_minus=float(a.min()), beta_plus=float(a.max()),
            window=p.window,
            start_range=(float(p.starts[0]), float(p.starts[cut - 1])),
            unbounded=None, starts=p.starts[:cut], averages=a))
    note = ("direction relabeling detected in the sweep; window averages "
            f"restricted to starts before t = {out[0].start_range[1]:g}")
    return out, note


# ------------------------------------------------------------------ reports

@dataclass
class SpectrumReport:
    intervals: list            # [(lo, hi)] sorted, may contain +-inf
    multiplicities: list
    gaps: list                 # [(lo, hi, rank)]
    horizon: float
    window: float
    method: str
    unbounded_left: bool = False
    unbounded_right: bool = False
    warnings: list = field(default_factory=list)
    pairs: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "intervals": [[lo, hi] for lo, hi in self.intervals],
            "multiplicities": list(self.multiplicities),
            "gaps": [[lo, hi, r] for lo, hi, r in self.gaps],
            "horizon": self.horizon, "window": self.window,
            "method": self.method,
            "unbounded_left": self.unbounded_left,
            "unbounded_right": self.unbounded_right,
            "warnings": list(self.warnings),
        }


def _merge_pairs(pairs, eps):
    """Cluster finite (lo, hi) pairs closer than eps into intervals."""
    order = sorted(range(len(pairs)), key=lambda i: pairs[i][0])
    intervals, mult = [], []
    for i in order:
        lo, hi = pairs[i]
        if intervals and lo <= intervals[-1][1] + eps:
            intervals[-1][1] = max(intervals[-1][1], hi)
            mult[-1] += 1
        else:
            intervals.append([lo, hi])
            mult.append(1)
    return [tuple(iv) for iv in intervals], mult


def _gaps_from(intervals, mult, n, unbounded_left, unbounded_right):
    gaps = []
    rank = 0
    if not unbounded_left:
        lo0 = intervals[0][0] if intervals else math.inf
        gaps.append((-math.inf, lo0, 0))
    for i in range(len(intervals)):
        rank += mult[i]
        if i + 1 < len(intervals):
            gaps.append((intervals[i][1], intervals[i + 1][0], rank))
    if not unbounded_right:
        hi0 = intervals[-1][1] if intervals else -math.inf
        gaps.append((hi0, math.inf, n))
    return gaps


def halfline_spectrum(sys, horizon, window, h=None, merge_eps=None,
                      tol=1e-12):
    """Spectral intervals over [0, horizon] from one forward sweep.

    Refuses (UnboundedCoefficients) multi-dimensional systems whose
    triangularized coefficient keeps growing across the horizon, since
    window averages then say nothing about asymptotics.
    """
    T = float(horizon)
    L = float(window)
    lo_dom, hi_dom = sys.domain_interval()
    if lo_dom > 0 or hi_dom < T:
        raise DomainError("domain does not cover [0, horizon]")
    if T < 2 * L:
        raise HorizonTooShort("need horizon >= 2 * window")
    n = sys.dim
    step = h or min(0.05, L / 20.0)
    # The triangularized coefficient Q^T A Q has the same norm as A, so
    # growth across the horizon can be refused from coefficient samples
    # alone, before paying for any integration (a growing rotation rate
    # also makes the sweep arbitrarily expensive).
    if n >= 2:
        samp = np.linspace(0.0, T, 201)
        norms = np.array([operator_norm_2(eval_coeff(sys, tk))
                          for tk in samp])
        m1 = float(norms[:100].max())
        m2 = float(norms[100:].max())
        if m2 > 2.0 * m1 + 1.0:
            raise UnboundedCoefficients(
                f"coefficient norm grows across the horizon "
                f"({m1:.3g} -> {m2:.3g}); triangularized window averages "
                "are not representative")
    # Short pre-sweep to order the starting frame dominant-first; a
    # subdominant leading flag is unstable under roundoff and swaps its
    # tracked labels once the error has grown by ~1/eps_mach.
    Q0 = None
    if n >= 2:
        pre_T = min(T, max(2.0 * L, 6.0))
        pre = perron_triangularize(sys, 0.0, pre_T, h=step, tol=tol)
        rates = pre.log_diag[-1] / pre_T
        order = np.argsort(-rates, kind="stable")
        if not np.array_equal(order, np.arange(n)):
            Q0 = np.eye(n)[:, order]
    red = perron_triangularize(sys, 0.0, T, h=step, tol=tol, Q0=Q0)
    warnings = []
    pairs = [scalar_bohl(red.grid, red.log_diag[:, i], L, cumulative=True)
             for i in range(n)]
    pairs, rescue_note = _exchange_rescue(pairs)
    if rescue_note:
        warnings.append(rescue_note)
    finite = [(p.beta_minus, p.beta_plus) for p in pairs if p.unbounded is None]
    up = [p for p in pairs if p.unbounded == "+inf"]
    dn = [p for p in pairs if p.unbounded == "-inf"]
    eps = merge_eps if merge_eps is not None else 2.0 / L
    intervals, mult = _merge_pairs(finite, eps)
    unbounded_left = bool(dn)
    unbounded_right = bool(up)
    if up:
        intervals.append((min(p.beta_minus for p in up), math.inf))
        mult.append(len(up))
        warnings.append(
            f"{len(up)} direction(s) drift upward: spectrum marked "
            "unbounded to the right")
    if dn:
        intervals.insert(0, (-math.inf, max(p.beta_plus for p in dn)))
        mult.insert(0, len(dn))
        warnings.append(
            f"{len(dn)} direction(s) drift downward: spectrum marked "
            "unbounded to the left")
    gaps = _gaps_from(intervals, mult, n, unbounded_left, unbounded_right)
    return SpectrumReport(intervals=intervals, multiplicities=mult,
                          gaps=gaps, horizon=T, window=L, method="qr-bohl",
                          unbounded_left=unbounded_left,
                          unbounded_right=unbounded_right,
                          warnings=warnings, pairs=pairs)


def fullline_spectrum(sys, horizon, window, h=None, merge_eps=None,
                      tol=1e-12):
    """Union of the forward spectrum and the mirrored reversed-time one.

    This is a surrogate for the genuine full-line spectrum: a value in
    a gap of both half-line spectra can still be spectral when the two
    half-line ranks disagree there (no index-zero dichotomy); compare
    gap ranks or run shifted_dichotomy_test when that matters.
    """
    if sys.domain != "full-line":
        raise DomainError("fullline_spectrum needs a full-line system")
    fwd = halfline_spectrum(sys, horizon, window, h=h,
                            merge_eps=merge_eps, tol=tol)
    rev = halfline_spectrum(reversed_system(sys), horizon, window, h=h,
                            merge_eps=merge_eps, tol=tol)
    mirrored = [(-hi, -lo) for lo, hi in rev.intervals][::-1]
    mir_mult = list(rev.multiplicities)[::-1]
    eps = merge_eps if merge_eps is not None else 2.0 / float(window)

    n = sys.dim
    items = sorted(
        list(zip(fwd.intervals, fwd.multiplicities))
        + list(zip(mirrored, mir_mult)), key=lambda p: p[0][0])
    intervals, mult = [], []
    for (lo, hi), m in items:
        if intervals and lo <= intervals[-1][1] + eps:
            intervals[-1][1] = max(intervals[-1][1], hi)
            mult[-1] = min(n, max(mult[-1], m))
        else:
            intervals.append([lo, hi])
            mult.append(min(n, m))
    intervals = [tuple(iv) for iv in intervals]
    unbounded_left = fwd.unbounded_left or rev.unbounded_right
    unbounded_right = fwd.unbounded_right or rev.unbounded_left
    gaps = _gaps_from(intervals, mult, n, unbounded_left, unbounded_right)
    warnings = list(dict.fromkeys(fwd.warnings + rev.warnings))
    warnings.append(
        "full-line report is the union of half-line spectra; gap ranks "
        "are taken from the forward sweep")
    return SpectrumReport(intervals=intervals, multiplicities=mult,
                          gaps=gaps, horizon=float(horizon),
                          window=float(window), method="qr-bohl-union",
                          unbounded_left=unbounded_left,
                          unbounded_right=unbounded_right,
                          warnings=warnings, pairs=fwd.pairs + rev.pairs)


# ----------------------------------------------------------- shifted tests

@dataclass
class ShiftVerdict:
    lam: float
    verdict: str               # in-resolvent | in-spectrum | inconclusive
    rank: int | None
    split: object
    cert: object = None
    note: str = ""


def shifted_dichotomy_test(sys, lam, horizon, slope_tol=0.05, K_cap=1e6,
                           tol=1e-6, ode_tol=1e-10):
    """Does x' = (A(t) - lam) x admit a full-line dichotomy?

    in-resolvent verdicts carry the stable rank of the shifted system;
    in-spectrum means some direction refuses to separate at slope_tol
    (or the two families overlap / miscount); inconclusive means the
    split looked clean but no certificate passed.
    """
    if sys.domain != "full-line":
        raise DomainError("shifted tests need a full-line system")
    sh = shifted_system(sys, lam)
    split = estimate_splitting(sh, horizon, slope_tol=slope_tol, tol=ode_tol)
    n = sys.dim
    if split.fwd_inconclusive or split.bwd_inconclusive:
        return ShiftVerdict(lam=float(lam), verdict="in-spectrum", rank=None,
                            split=split,
                            note="directions with near-zero growth")
    k, m = split.dim_stable, split.dim_unstable
    if k + m != n:
        return ShiftVerdict(lam=float(lam), verdict="in-spectrum", rank=None,
                            split=split,
                            note=f"family dimensions {k}+{m} != {n}")
    if k and m and min_principal_angle(split.stable_basis,
                                       split.unstable_basis) <= 1e-3:
        return ShiftVerdict(lam=float(lam), verdict="in-spectrum", rank=None,
                            split=split, note="families nearly intersect")
    M = np.hstack([split.stable_basis, split.unstable_basis])
    D = np.zeros((n, n))
    D[:k, :k] = np.eye(k)
    P = M @ D @ np.linalg.inv(M)
    try:
        cert = certify(sh, P, (-horizon, horizon), K_cap=K_cap, tol=tol,
                       ode_tol=ode_tol)
    except NumericalInconsistency as e:
        return ShiftVerdict(lam=float(lam), verdict="inconclusive", rank=None,
                            split=split, note=str(e))
    if cert.flag == "verified":
        return ShiftVerdict(lam=float(lam), verdict="in-resolvent", rank=k,
                            split=split, cert=cert)
    return ShiftVerdict(lam=float(lam), verdict="inconclusive", rank=None,
                        split=split, cert=cert,
                        note="; ".join(cert.notes))


@dataclass
class RankScan:
    rows: list
    monotone: bool
    inconsistencies: list


def rank_step_function(sys, lambdas, horizon, **kw):
    """Shifted verdicts over a sorted grid of shifts, with rank checks.

    The stable rank must be a nondecreasing step function of the shift;
    violations are reported, never raised.
    """
    rows = [shifted_dichotomy_test(sys, lam, horizon, **kw)
            for lam in sorted(float(x) for x in lambdas)]
    probs = []
    last = None
    for r in rows:
        if r.verdict != "in-resolvent":
            continue
        if last is not None and r.rank < last.rank:
            probs.append(
                f"rank falls from {last.rank} at {last.lam:g} "
                f"to {r.rank} at {r.lam:g}")
        last = r
    return RankScan(rows=rows, monotone=not probs, inconsistencies=probs)
