"""Floquet theory for periodic linear systems: monodromy, multipliers,
logarithm of the period map, periodic factorization, forced periodic
solutions.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidInput,
    NotPeriodic,
    NumericalInconsistency,
    ResonantForcing,
)
from .linalg import matrix_exp, operator_norm_2, principal_log
from .propagate import (
    adaptive_simpson,
    integrate_ivp,
    matrix_rhs,
    transition_matrix,
)
from .system import check_periodicity, eval_coeff


@dataclass
class FloquetData:
    """Monodromy analysis of one period.

    D is stored complex always; d_is_real records whether its imaginary
    part is negligible (below 1e-10 relative).  unit_circle_margin is
    min_i | |rho_i| - 1 |; det_rel_err compares the multiplier product
    against exp(integral of trace A) over one period.
    """

    omega: float
    monodromy: np.ndarray
    multipliers: np.ndarray
    D: np.ndarray
    d_is_real: bool
    unit_circle_margin: float
    det_rel_err: float
    log_info: dict = field(default_factory=dict)


def _require_period(sys, tol=1e-10):
    if sys.period is None:
        raise NotPeriodic(f"system {sys.name!r} declares no period")
    defect = check_periodicity(sys, tol=tol)
    if defect > tol:
        raise NotPeriodic(
            f"sampled periodicity defect {defect:.3e} exceeds {tol:.1e}"
        )
    return float(sys.period)


def monodromy(sys, tol=1e-10):
    """FloquetData for one period [0, omega]."""
    omega = _require_period(sys)
    B = transition_matrix(sys, omega, 0.0, tol=tol).X
    multipliers = np.linalg.eigvals(B)
    L, info = principal_log(B, with_info=True)
    D = L / omega
    scale = max(operator_norm_2(D), 1e-300)
    d_is_real = bool(operator_norm_2(np.imag(D)) <= 1e-10 * max(1.0, scale))
    # reconstruction check: exp(omega D) must return the monodromy
    recon = matrix_exp(omega * D)
    defect = operator_norm_2(recon - B) / max(1.0, operator_norm_2(B))
    if defect > max(1e3 * tol, 1e-9) and not info["perturbation"]:
        raise NumericalInconsistency(
            f"exp(omega D) misses the monodromy by {defect:.3e}"
        )
    margin = float(np.min(np.abs(np.abs(multipliers) - 1.0)))
    tr = adaptive_simpson(lambda s: np.trace(eval_coeff(sys, s)), 0.0, omega,
                          tol=tol)
    det_formula = np.exp(float(tr))
    prod = complex(np.prod(multipliers))
    det_rel = abs(prod - det_formula) / max(abs(det_formula), 1e-300)
    return FloquetData(
        omega=omega, monodromy=B, multipliers=multipliers, D=D,
        d_is_real=d_is_real, unit_circle_margin=margin,
        det_rel_err=float(det_rel), log_info=info,
    )


def floquet_factor(sys, t, data=None, tol=1e-10):
    """(Q(t), D) with X(t, 0) = Q(t) exp(D t), Q periodic, Q(0) = I."""
    if data is None:
        data = monodromy(sys, tol=tol)
    X = transition_matrix(sys, float(t), 0.0, tol=tol).X
    Q = X @ matrix_exp(-data.D * float(t))
    if data.d_is_real:
        Q = np.real(Q)
    return Q, data.D


def floquet_factor_path(sys, ts, data=None, tol=1e-10):
    """Q(t) at many times via one integration pass per direction."""
    from .propagate import transition_path

    if data is None:
        data = monodromy(sys, tol=tol)
    Xs = transition_path(sys, 0.0, ts, tol=tol)
    out = []
    for t, X in zip(ts, Xs):
        Q = X @ matrix_exp(-data.D * float(t))
        out.append(np.real(Q) if data.d_is_real else Q)
    return out, data.D


def periodic_hyperbolic(sys, tol=1e-9):
    """(is_hyperbolic, margin): no multiplier within tol of the unit circle."""
    data = monodromy(sys, tol=min(tol, 1e-10))
    return bool(data.unit_circle_margin > tol), data.unit_circle_margin


@dataclass
class PeriodicSolution:
    x0: np.ndarray
    trajectory: object
    return_defect: float
    data: FloquetData


def periodic_solution(sys, g, tol=1e-10, n_nodes=201):
    """Unique periodic solution of x' = A(t) x + g(t) for hyperbolic sys.

    x*(0) solves (I - X(omega,0)) x0 = integral_0^omega X(omega,s) g(s) ds;
    the integral reuses the dense output of a single forward integration
    of the fundamental matrix.  Raises ResonantForcing when I - B is
    (numerically) singular, InvalidInput when g fails its periodicity
    sampling.
    """
    data = monodromy(sys, tol=tol)
    omega = data.omega
    n = sys.dim

    def gv(s):
        out = np.asarray(g(float(s)), dtype=float).reshape(-1)
        if out.shape != (n,):
            raise InvalidInput(f"forcing returned shape {out.shape}")
        return out

    for s in np.linspace(0.1 * omega, 0.9 * omega, 7):
        if np.linalg.norm(gv(s + omega) - gv(s)) > 1e-8 * (1 + np.linalg.norm(gv(s))):
            raise InvalidInput("forcing is not periodic with the system period")

    I = np.eye(n)
    B = data.monodromy
    smin = np.linalg.svd(I - B, compute_uv=False).min()
    # the multiplier carries the integrator's error, so "singular" must
    # be judged at that scale, not at machine precision
    if smin <= max(1e-12, 100.0 * tol) * max(1.0, operator_norm_2(B)):
        raise ResonantForcing(
            f"I - X(omega,0) nearly singular (sigma_min = {smin:.3e})"
        )

    Xtraj = integrate_ivp(matrix_rhs(sys), I, 0.0, omega, tol=tol)

    def integrand(s):
        Xs = Xtraj(s).reshape((n, n))
        return B @ np.linalg.solve(Xs, gv(s))

    rhs = adaptive_simpson(integrand, 0.0, omega, tol=tol)
    x0 = np.linalg.solve(I - B, rhs)

    def forced(t, x):
        return eval_coeff(sys, t) @ x + gv(t)

    grid = list(np.linspace(0.0, omega, n_nodes))
    traj = integrate_ivp(forced, x0, 0.0, omega, tol=tol, t_eval=grid[1:-1])
    defect = float(np.linalg.norm(traj.states[-1].reshape(-1) - x0))
    return PeriodicSolution(x0=x0, trajectory=traj, return_defect=defect,
                            data=data)
