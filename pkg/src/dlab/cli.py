"""Command-line front end: analysis subcommands with CSV/JSON reports.

Each subcommand wraps one analysis module and writes its tables and
reports into an output directory together with a run manifest:

    transition   transition-matrix samples + Liouville / adjoint audit
    floquet      monodromy data and one-period factor samples
    dichotomy    exponential-dichotomy certificate search
    spectrum     Bohl interval report and gap ranks
    reduce       bounded similarity to block-diagonal form
    linearize    conjugacy maps evaluated on probes, residual table
    catalog      list the built-in systems

Exit codes: 0 success, 2 bad usage or config parse failure, 3 numerical
failure (messages name the violated invariant).  All floats print with
17 significant digits.  Reports embed their manifest without the wall
clock, so identical arguments reproduce byte-identical files; timing is
confined to the standalone manifest.json.  Probe batches draw from a
generator seeded by --seed (default 0), echoed in the manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys as _stdlib_sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import dichotomy as dich
from . import floquet as floq
from . import linearize as linz
from . import propagate as prop
from . import reduce as redu
from . import spectrum as spec
from . import system as sysmod
from .errors import (
    DlabError,
    DomainError,
    HorizonTooShort,
    InvalidInput,
    NotInCatalog,
    NotPeriodic,
    NumericalInconsistency,
    ParseError,
    ShapeError,
)
from .linalg import projection_from_matrix

# Raised by bad arguments or unparseable configs -> exit 2; every other
# DlabError means the requested computation failed -> exit 3.
_USAGE_ERRORS = (ParseError, NotInCatalog, InvalidInput, ShapeError,
                 DomainError, HorizonTooShort, NotPeriodic)


def _fmt(v):
    return f"{float(v):.17g}"


def _jsonable(obj):
    """Recursively convert to JSON-safe types; non-finite floats become
    strings so the output stays standard JSON."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


class _Run:
    """Collects report payloads, then writes everything at the end.

    Deferring the writes lets the embedded manifest list the complete
    set of output paths while each file still has a single writer.
    """

    def __init__(self, args, command, system_name=None, system_hash=None,
                 parameters=None):
        out = os.environ.get("DLAB_OUT") or args.out_dir
        self.dir = Path(out)
        self.want_json = args.json or not args.csv
        self.want_csv = args.csv or not args.json
        self.command = command
        self.system_name = system_name
        self.system_hash = system_hash
        self.parameters = parameters or {}
        self.seed = args.seed
        self._json = {}
        self._csv = {}
        self._t0 = time.perf_counter()

    def add_json(self, stem, payload):
        if self.want_json:
            self._json[stem + ".json"] = payload

    def add_csv(self, stem, text):
        if self.want_csv:
            self._csv[stem + ".csv"] = text

    def _manifest(self, names):
        return {
            "command": self.command,
            "system": self.system_name,
            "system_hash": self.system_hash,
            "parameters": self.parameters,
            "seed": self.seed,
            "versions": {
                "dlab": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
            "outputs": sorted(names),
        }

    def finish(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        names = sorted(self._json) + sorted(self._csv) + ["manifest.json"]
        manifest = self._manifest(names)
        for name, payload in self._json.items():
            obj = dict(payload)
            obj["manifest"] = manifest
            (self.dir / name).write_text(
                json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
        for name, text in self._csv.items():
            (self.dir / name).write_text(text)
        top = dict(manifest)
        top["wall_clock_s"] = time.perf_counter() - self._t0
        (self.dir / "manifest.json").write_text(
            json.dumps(_jsonable(top), indent=2, sort_keys=True) + "\n")
        for name in names:
            print(f"wrote {self.dir / name}")


# ----------------------------------------------------------- system loading


def _load_system(spec_str):
    """Catalog name (param form allowed) or path to a config file."""
    p = Path(spec_str)
    if p.is_file():
        return sysmod.parse_system(p.read_text())
    return sysmod.builtin(spec_str)


def _system_hash(sys):
    try:
        text = sysmod.format_system(sys)
    except InvalidInput:
        text = getattr(sys, "source", None) or sys.name
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _linear_part(sys):
    if isinstance(sys, sysmod.QuasilinearSystem):
        return sys.linear
    return sys


def _lin_grid(spec):
    lo, hi, n = spec
    n = int(round(n))
    if n < 2 or not hi > lo:
        raise InvalidInput(f"bad grid {spec}; need lo < hi and n >= 2")
    return np.linspace(float(lo), float(hi), n)


def _parse_matrix(text, n):
    rows = [r for r in text.split(";") if r.strip()]
    try:
        M = np.array([[float(v) for v in r.split(",")] for r in rows])
    except ValueError:
        raise InvalidInput(f"bad matrix literal {text!r}")
    if M.shape != (n, n):
        raise ShapeError(f"projector shape {M.shape}, system dim {n}")
    return M


def _matrix_header(prefix, n):
    return [f"{prefix}{i + 1}{j + 1}" for i in range(n) for j in range(n)]


def _csv_table(header, rows):
    lines = [", ".join(header)]
    for row in rows:
        lines.append(", ".join(
            c if isinstance(c, str) else _fmt(c) for c in row))
    return "\n".join(lines) + "\n"


def _estimate_split(lin, interval, ode_tol):
    span = interval[1] - interval[0]
    horizon = min(8.0, max(2.0, 0.5 * span))
    return dich.estimate_splitting(lin, horizon, tol=ode_tol)


def _split_projector(split, n):
    """Projector onto the estimated stable family (along the unstable
    one when both sweep directions classified cleanly)."""
    r = split.dim_stable
    if split.fwd_inconclusive or split.bwd_inconclusive:
        raise NumericalInconsistency(
            "splitting estimate is inconclusive; pass --projector or "
            "--alpha explicitly")
    if split.backward_swept and r + split.dim_unstable == n:
        M = np.hstack([split.stable_basis, split.unstable_basis])
        D = np.zeros((n, n))
        D[:r, :r] = np.eye(r)
        return M @ D @ np.linalg.inv(M), r
    V = split.stable_basis
    return V @ V.T, r


def _rate_candidates(split):
    """Alpha candidates scaled off the slowest measured decay slope."""
    rates = []
    if split.dim_stable:
        rates.append(float(np.min(np.abs(split.stable_rates))))
    if split.dim_unstable:
        rates.append(float(np.min(np.abs(split.unstable_rates))))
    r = min(rates) if rates else 0.0
    if r <= 0.0:
        return None
    return [f * r for f in (1.0, 0.9, 0.75, 0.5, 0.25)]


# --------------------------------------------------------------- subcommands


def cmd_transition(args, parser):
    sys = _linear_part(_load_system(args.system))
    tol = args.tol or 1e-10
    s = args.s
    if args.grid:
        ts = list(_lin_grid(args.grid))
    elif args.t is not None:
        ts = [args.t]
    else:
        parser.error("need --t or --grid")
    run = _Run(args, "transition", sys.name, _system_hash(sys),
               {"t": args.t, "s": s, "grid": args.grid, "tol": tol})
    Xs = prop.transition_path(sys, s, ts, tol=tol)
    t_far = max(ts, key=lambda t: abs(t - s))
    lious = prop.liouville_check(sys, s, t_far, tol=tol)
    check_ts = np.linspace(s, t_far, 9) if t_far != s else [s, t_far + 1.0]
    adj = prop.adjoint_check(sys, check_ts, tol=tol)

    header = ["t", "s"] + _matrix_header("X", sys.dim)
    rows = [[t, s, *X.ravel()] for t, X in zip(ts, Xs)]
    run.add_csv("transition_samples", _csv_table(header, rows))
    run.add_json("transition_report", {
        "times": ts, "base_time": s,
        "samples": [X.tolist() for X in Xs],
        "liouville": {"det_numeric": lious.det_numeric,
                      "det_formula": lious.det_formula,
                      "rel_err": lious.rel_err},
        "adjoint_defect": adj,
    })
    print(f"X(t, s) sampled at {len(ts)} time(s), base s = {_fmt(s)}")
    print(f"liouville rel_err = {lious.rel_err:.3e}   "
          f"adjoint defect = {adj:.3e}")
    run.finish()


def cmd_floquet(args, parser):
    sys = _linear_part(_load_system(args.system))
    tol = args.tol or 1e-10
    run = _Run(args, "floquet", sys.name, _system_hash(sys),
               {"tol": tol, "n_samples": args.n_samples})
    data = floq.monodromy(sys, tol=tol)
    ts = np.linspace(0.0, data.omega, args.n_samples)
    Qs, _ = floq.floquet_factor_path(sys, ts, data=data, tol=tol)
    Qs = np.asarray(Qs)
    if data.d_is_real:
        header = ["t"] + _matrix_header("Q", sys.dim)
        rows = [[t, *Q.real.ravel()] for t, Q in zip(ts, Qs)]
    else:
        header = (["t"] + _matrix_header("Qre", sys.dim)
                  + _matrix_header("Qim", sys.dim))
        rows = [[t, *Q.real.ravel(), *Q.imag.ravel()]
                for t, Q in zip(ts, Qs)]
    run.add_csv("floquet_factor", _csv_table(header, rows))
    run.add_json("floquet_report", {
        "omega": data.omega,
        "multipliers": list(data.multipliers),
        "monodromy": data.monodromy.tolist(),
        "D": data.D.tolist(),
        "d_is_real": data.d_is_real,
        "unit_circle_margin": data.unit_circle_margin,
        "det_rel_err": data.det_rel_err,
        "hyperbolic": bool(data.unit_circle_margin > 1e-9),
    })
    mags = ", ".join(f"{abs(r):.6g}" for r in data.multipliers)
    print(f"omega = {_fmt(data.omega)}   |multipliers| = {mags}")
    print(f"unit-circle margin = {data.unit_circle_margin:.3e}   "
          f"det rel_err = {data.det_rel_err:.3e}")
    run.finish()


def cmd_dichotomy(args, parser):
    sys = _linear_part(_load_system(args.system))
    ode_tol = args.tol or 1e-10
    lo_dom, hi_dom = sys.domain_interval()
    if args.interval:
        interval = (args.interval[0], args.interval[1])
    else:
        interval = (max(lo_dom, -10.0), min(hi_dom, 10.0))
    split = None
    if args.projector:
        P = _parse_matrix(args.projector, sys.dim)
        origin = "explicit"
    else:
        split = _estimate_split(sys, interval, ode_tol)
        P, r = _split_projector(split, sys.dim)
        if args.rank is not None and r != args.rank:
            raise NumericalInconsistency(
                f"requested rank {args.rank} but the splitting estimate "
                f"finds {r} stable direction(s)")
        origin = "estimated"
    cands = None
    if args.alpha is None:
        if split is None:
            try:
                split = _estimate_split(sys, interval, ode_tol)
            except DlabError:
                split = None
        if split is not None:
            cands = _rate_candidates(split)
    run = _Run(args, "dichotomy", sys.name, _system_hash(sys),
               {"interval": list(interval), "n_grid": args.n_grid,
                "alpha": args.alpha, "K_cap": args.K_cap, "ode_tol": ode_tol})
    cert = dich.certify(sys, P, interval, n_grid=args.n_grid,
                        alpha=args.alpha, alpha_candidates=cands,
                        K_cap=args.K_cap, ode_tol=ode_tol)
    payload = cert.to_json_dict()
    payload["projector_origin"] = origin
    run.add_json("dichotomy_certificate", payload)
    ts = cert.grid[:: max(1, len(cert.grid) // 13)]
    defect = dich.projector_path_defect(sys, cert, ts, tol=ode_tol)
    run.add_csv("dichotomy_projector", _csv_table(
        ["t"] + _matrix_header("P", sys.dim),
        [[t, *np.asarray(prow).ravel()] for t, prow in zip(
            ts, _projector_path(sys, cert, ts, ode_tol))]))
    print(f"flag = {cert.flag}   K = {_fmt(cert.K)}   "
          f"alpha = {_fmt(cert.alpha)}   rank = {cert.projector.rank}")
    print(f"kernel residual = {cert.residual:.3e}   "
          f"invariance defect = {defect:.3e}")
    for note in cert.notes:
        print(f"note: {note}", file=_stdlib_sys.stderr)
    run.finish()


def _projector_path(sys, cert, ts, tol):
    Xs = prop.transition_path(sys, cert.anchor, ts, tol=tol)
    inv = np.linalg.inv(Xs)
    P = cert.projector.matrix
    return [X @ P @ Xi for X, Xi in zip(Xs, inv)]


def cmd_spectrum(args, parser):
    sys = _linear_part(_load_system(args.system))
    if args.L <= 0:
        parser.error("--L must be positive")
    if args.T <= 0:
        parser.error("--T must be positive")
    tol = args.tol or 1e-12
    run = _Run(args, "spectrum", sys.name, _system_hash(sys),
               {"T": args.T, "L": args.L, "h": args.h,
                "merge_eps": args.merge_eps, "tol": tol,
                "full_line": args.full_line})
    fn = spec.fullline_spectrum if args.full_line else spec.halfline_spectrum
    report = fn(sys, args.T, args.L, h=args.h, merge_eps=args.merge_eps,
                tol=tol)
    run.add_json("spectrum_report", report.to_json_dict())
    run.add_csv("spectrum_gaps", _csv_table(
        ["gap_lo", "gap_hi", "rank"],
        [[lo, hi, str(r)] for lo, hi, r in report.gaps]))
    for lo, hi in report.intervals:
        print(f"interval [{_fmt(lo)}, {_fmt(hi)}]")
    for w in report.warnings:
        print(f"warning: {w}", file=_stdlib_sys.stderr)
    run.finish()


def cmd_reduce(args, parser):
    sys = _linear_part(_load_system(args.system))
    ode_tol = args.tol or 1e-10
    if args.mode == "coppel":
        if args.rank is None:
            parser.error("coppel mode needs --rank")
        grid = _lin_grid(args.grid) if args.grid else \
            np.linspace(-4.0, 4.0, 161)
        run = _Run(args, "reduce", sys.name, _system_hash(sys),
                   {"mode": "coppel", "rank": args.rank,
                    "grid": [float(grid[0]), float(grid[-1]), len(grid)],
                    "ode_tol": ode_tol})
        res = redu.coppel_similarity(sys, args.rank, grid,
                                     ode_tol=min(ode_tol, 1e-12))
        n = sys.dim
        run.add_csv("reduce_similarity", _csv_table(
            ["t"] + _matrix_header("S", n),
            [[t, *S.ravel()] for t, S in zip(res.grid, res.S)]))
        run.add_csv("reduce_coefficient", _csv_table(
            ["t"] + _matrix_header("B", n),
            [[t, *B.ravel()] for t, B in zip(res.b_times, res.B)]))
        run.add_json("reduce_report", {
            "mode": "coppel", "rank": res.rank,
            "block_sizes": list(res.block_sizes),
            "S_norm_max": res.S_norm_max,
            "S_inv_norm_max": res.S_inv_norm_max,
            "similarity_residual": res.similarity_residual,
            "commutation_defect": res.commutation_defect,
            "anchor": res.anchor, "h": res.h,
        })
        print(f"blocks {res.block_sizes}   |S| <= {_fmt(res.S_norm_max)}   "
              f"|S^-1| <= {_fmt(res.S_inv_norm_max)}")
        print(f"similarity residual = {res.similarity_residual:.3e} "
              f"(first-order in the grid step)")
    else:
        grid = _lin_grid(args.grid) if args.grid else None
        run = _Run(args, "reduce", sys.name, _system_hash(sys),
                   {"mode": "spectral", "T": args.T, "L": args.L,
                    "ode_tol": ode_tol})
        res = redu.spectral_block_diagonalize(
            sys, grid=grid, horizon=args.T, window=args.L, ode_tol=ode_tol)
        n = sys.dim
        run.add_csv("reduce_similarity", _csv_table(
            ["t"] + _matrix_header("S", n),
            [[t, *S.ravel()] for t, S in zip(res.grid, res.S_samples)]))
        run.add_csv("reduce_coefficient", _csv_table(
            ["t"] + _matrix_header("B", n),
            [[t, *B.ravel()] for t, B in zip(res.grid, res.B_samples)]))
        run.add_json("reduce_report", {
            "mode": "spectral",
            "block_sizes": list(res.block_sizes),
            "intervals": [list(iv) for iv in res.intervals],
            "S_norm_max": res.S_norm_max,
            "S_inv_norm_max": res.S_inv_norm_max,
            "similarity_residual": res.similarity_residual,
            "certificates": [c.to_json_dict() for c in res.certificates],
            "warnings": list(res.warnings),
        })
        print(f"blocks {res.block_sizes} on intervals "
              + ", ".join(f"[{_fmt(lo)}, {_fmt(hi)}]"
                          for lo, hi in res.intervals))
        print(f"similarity residual = {res.similarity_residual:.3e}")
        for w in res.warnings:
            print(f"warning: {w}", file=_stdlib_sys.stderr)
    run.finish()


def _parse_probe(text, dim):
    t_str, _, p_str = text.partition(":")
    try:
        t = float(t_str)
        point = np.array([float(v) for v in p_str.split(",")])
    except ValueError:
        raise InvalidInput(f"bad probe {text!r}; expected t:x1,x2,...")
    if point.shape != (dim,):
        raise ShapeError(f"probe point has {point.size} component(s), "
                         f"system dim {dim}")
    return t, point


def cmd_linearize(args, parser):
    sys = _load_system(args.system)
    if not isinstance(sys, sysmod.QuasilinearSystem):
        raise InvalidInput(
            "linearize needs a quasilinear config (keys f, mu, gamma)")
    lin = sys.linear
    ode_tol = args.tol or 1e-10
    lo_dom, hi_dom = lin.domain_interval()
    mode = args.mode
    if args.interval:
        interval = (args.interval[0], args.interval[1])
    elif mode == "half-line-plus":
        interval = (0.0, min(hi_dom, 20.0))
    else:
        interval = (max(lo_dom, -10.0), min(hi_dom, 10.0))

    split = _estimate_split(lin, interval, ode_tol)
    if mode == "half-line-plus":
        P = np.eye(lin.dim)
    else:
        P, _ = _split_projector(split, lin.dim)
    cands = _rate_candidates(split) if args.alpha is None else None
    cert = dich.certify(lin, P, interval, alpha=args.alpha,
                        alpha_candidates=cands, K_cap=args.K_cap,
                        ode_tol=ode_tol)
    ctx = linz.make_context(sys, cert, eps=args.eps, mode=mode)

    rng = np.random.default_rng(args.seed)
    probes = [_parse_probe(p, lin.dim) for p in args.probe or []]
    if args.probes:
        if args.t_range:
            t_lo, t_hi = args.t_range
        else:
            t_lo, t_hi = interval
        ts = rng.uniform(t_lo, t_hi, args.probes)
        pts = rng.uniform(-args.radius, args.radius,
                          (args.probes, lin.dim))
        probes += [(float(t), p) for t, p in zip(ts, pts)]
    if not probes:
        parser.error("need --probe and/or --probes")

    run = _Run(args, "linearize", sys.name, _system_hash(sys),
               {"eps": args.eps, "mode": mode, "interval": list(interval),
                "probes": args.probes, "t_range": args.t_range,
                "radius": args.radius, "K": cert.K, "alpha": cert.alpha,
                "ode_tol": ode_tol})
    evals, inv_res = [], []
    for t, point in probes:
        ev = linz.eval_H(ctx, t, point)
        evals.append(ev)
        inv_res.append(linz.inverse_residual(ctx, t, point))

    n = lin.dim
    header = (["t"] + [f"p{i + 1}" for i in range(n)]
              + [f"out{i + 1}" for i in range(n)]
              + ["iterations", "residual"])
    run.add_csv("linearize_residuals",
                ", ".join(header) + "\n" + linz.evaluations_to_csv(evals))
    theta = linz.continuity_constant(ctx)
    rows = [{
        "t": ev.t, "point": list(np.atleast_1d(ev.point)),
        "H": list(np.atleast_1d(ev.value)),
        "iterations": ev.iterations, "residual": ev.residual,
        "inverse_residual": float(r),
    } for ev, r in zip(evals, inv_res)]
    run.add_json("linearize_report", {
        "mode": mode, "eps": args.eps,
        "K": cert.K, "alpha": cert.alpha,
        "q": 2.0 * cert.K * sys.gamma / cert.alpha,
        "window_halfwidth": ctx.L,
        "continuity_constant": theta,
        "max_residual": max(e.residual for e in evals),
        "max_inverse_residual": max(inv_res),
        "probes": rows,
    })
    print(f"{'t':>10}  {'|point|':>10}  {'iters':>5}  "
          f"{'residual':>12}  {'inverse':>12}")
    for ev, r in zip(evals, inv_res):
        print(f"{ev.t:>10.4g}  {np.linalg.norm(ev.point):>10.4g}  "
              f"{ev.iterations:>5d}  {ev.residual:>12.4e}  {r:>12.4e}")
    print(f"q = {2.0 * cert.K * sys.gamma / cert.alpha:.6g}   "
          f"window L = {ctx.L:.6g}   theta = {theta:.6g}")
    run.finish()


def cmd_catalog(args, parser):
    rows = sysmod.catalog_entries()
    run = _Run(args, "catalog", None, None, {})
    run.add_csv("catalog", _csv_table(
        ["name", "dim", "domain", "description"],
        [[name, str(d), dom, desc] for name, d, dom, desc in rows]))
    run.add_json("catalog", {"entries": [
        {"name": name, "dim": d, "domain": dom, "description": desc}
        for name, d, dom, desc in rows]})
    width = max(len(r[0]) for r in rows)
    for name, d, dom, desc in rows:
        print(f"{name:<{width}}  dim {d}  {dom:<11}  {desc}")
    run.finish()


# --------------------------------------------------------------------- main


def _build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--system", metavar="NAME|FILE",
                        help="catalog name or path to a config file")
    shared.add_argument("--tol", type=float, default=None,
                        help="integration tolerance override")
    shared.add_argument("--out-dir", default="dlab_out",
                        help="report directory (env DLAB_OUT overrides)")
    shared.add_argument("--seed", type=int, default=0,
                        help="generator seed for probe batches")
    shared.add_argument("--json", action="store_true",
                        help="emit JSON reports only")
    shared.add_argument("--csv", action="store_true",
                        help="emit CSV tables only")

    ap = argparse.ArgumentParser(
        prog="dlab",
        description="linear-system dichotomy and linearization toolbox")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transition", parents=[shared],
                       help="sample X(t, s) with Liouville/adjoint audit")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--grid", type=float, nargs=3, metavar=("LO", "HI", "N"),
                   help="sample times (overrides --t)")
    p.set_defaults(fn=cmd_transition, needs_system=True)

    p = sub.add_parser("floquet", parents=[shared],
                       help="monodromy and periodic factor")
    p.add_argument("--n-samples", type=int, default=33,
                   help="factor samples across one period")
    p.set_defaults(fn=cmd_floquet, needs_system=True)

    p = sub.add_parser("dichotomy", parents=[shared],
                       help="certify an exponential dichotomy")
    p.add_argument("--interval", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--rank", type=int, default=None,
                   help="expected stable rank (cross-checked)")
    p.add_argument("--projector", metavar="'a,b;c,d'",
                   help="explicit projector matrix")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--K-cap", type=float, default=1e6)
    p.add_argument("--n-grid", type=int, default=49)
    p.set_defaults(fn=cmd_dichotomy, needs_system=True)

    p = sub.add_parser("spectrum", parents=[shared],
                       help="Bohl interval report")
    p.add_argument("--T", type=float, default=40.0, help="sweep horizon")
    p.add_argument("--L", type=float, default=8.0, help="averaging window")
    p.add_argument("--h", type=float, default=None, help="sweep step")
    p.add_argument("--merge-eps", type=float, default=None)
    p.add_argument("--full-line", action="store_true",
                   help="union with the reversed-time sweep")
    p.set_defaults(fn=cmd_spectrum, needs_system=True)

    p = sub.add_parser("reduce", parents=[shared],
                       help="block-diagonalizing bounded similarity")
    p.add_argument("--mode", choices=["coppel", "spectral"],
                   default="coppel")
    p.add_argument("--rank", type=int, default=None,
                   help="leading block size (coppel mode)")
    p.add_argument("--grid", type=float, nargs=3, metavar=("LO", "HI", "N"))
    p.add_argument("--T", type=float, default=24.0,
                   help="spectrum horizon (spectral mode)")
    p.add_argument("--L", type=float, default=3.0,
                   help="spectrum window (spectral mode)")
    p.set_defaults(fn=cmd_reduce, needs_system=True)

    p = sub.add_parser("linearize", parents=[shared],
                       help="conjugacy maps on probe points")
    p.add_argument("--probe", action="append", metavar="T:X1,X2,...",
                   help="explicit probe (repeatable)")
    p.add_argument("--probes", type=int, default=None,
                   help="number of seeded random probes")
    p.add_argument("--t-range", type=float, nargs=2, metavar=("LO", "HI"),
                   help="time range for random probes")
    p.add_argument("--radius", type=float, default=0.5,
                   help="sup-norm radius for random probe points")
    p.add_argument("--eps", type=float, default=1e-6,
                   help="target accuracy of the fixed-point maps")
    p.add_argument("--mode", choices=["half-line-plus", "full-line"],
                   default="half-line-plus",
                   help="windowing of the kernel integrals")
    p.add_argument("--interval", type=float, nargs=2, metavar=("LO", "HI"),
                   help="certification interval")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--K-cap", type=float, default=1e6)
    p.set_defaults(fn=cmd_linearize, needs_system=True)

    p = sub.add_parser("catalog", parents=[shared],
                       help="list built-in systems")
    p.set_defaults(fn=cmd_catalog, needs_system=False)
    return ap


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.needs_system and not args.system:
        parser.error(f"{args.command} requires --system")
    try:
        args.fn(args, parser)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=_stdlib_sys.stderr)
        return 2
    except DlabError as exc:
        print(f"error: {type(exc).__name__}: {exc}",
              file=_stdlib_sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    _stdlib_sys.exit(main())
