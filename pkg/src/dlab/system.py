"""System definitions: coefficient parsing, config files, builtin catalog.

A linear system is x' = A(t) x with A given entrywise by closed-form
expressions in t; a quasilinear system adds a perturbation f(t, y) with
declared bounds |f| <= mu and Lip_y(f) <= gamma (validated by sampling,
never trusted blindly).

Config format (UTF-8, line oriented, ``#`` comments)::

    name = my_system
    dim = 2
    domain = full-line
    period = 3.141592653589793
    A = -1+1.5*cos(t)^2, 1-1.5*sin(t)*cos(t); -1-1.5*sin(t)*cos(t), -1+1.5*sin(t)^2
    f = 0.1*sin(y1), 0
    mu = 0.1
    gamma = 0.1

Rows of A are separated by ``;``, entries by ``,``.  Expressions use infix
arithmetic (+ - * / ^) with standard precedence, the reserved variable t,
state variables y1..yn (only inside f), and the functions sin, cos, exp,
log, tanh, atan, sqrt, abs.  No implicit multiplication.
"""

import math
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    InvalidInput,
    NotInCatalog,
    ParseError,
    ShapeError,
)

DOMAINS = ("full-line", "half-line-plus", "half-line-minus")

FUNCTIONS = {
    "sin": "math.sin", "cos": "math.cos", "exp": "math.exp",
    "log": "math.log", "tanh": "math.tanh", "atan": "math.atan",
    "sqrt": "math.sqrt", "abs": "abs",
}

# ---------------------------------------------------------------------------
# expression tokenizer / recursive-descent parser
# AST nodes: ('num', v) ('t',) ('y', k) ('neg', a)
#            ('+', a, b) ('-', a, b) ('*', a, b) ('/', a, b) ('^', a, b)
#            ('call', name, a)
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?"
    r"|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text, line=None, col0=0):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            tail = text[pos:].lstrip()
            if not tail:
                break
            raise ParseError(
                f"unexpected character {tail[0]!r}", line,
                col0 + pos + (len(text[pos:]) - len(tail)) + 1,
            )
        col = col0 + m.start(m.lastgroup) + 1
        tokens.append((m.lastgroup, m.group(m.lastgroup), col))
        pos = m.end()
    tokens.append(("end", "", col0 + len(text) + 1))
    return tokens


class _ExprParser:
    def __init__(self, tokens, line=None):
        self.toks = tokens
        self.i = 0
        self.line = line

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        raise ParseError(msg, self.line, tok[2])

    def parse(self):
        node = self.expr()
        kind, val, _ = self.peek()
        if kind != "end":
            self.fail(f"unexpected token {val!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.next()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.next()[1]
            node = (op, node, self.unary())
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if val == "-":
            self.next()
            return ("neg", self.unary())
        if val == "+":
            self.next()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.next()
            return ("^", base, self.unary())  # right associative, signed ok
        return base

    def atom(self):
        kind, val, col = self.next()
        if kind == "num":
            return ("num", float(val))
        if kind == "ident":
            if val == "t":
                return ("t",)
            m = re.fullmatch(r"y(\d+)", val)
            if m:
                k = int(m.group(1))
                if k < 1:
                    raise ParseError("state variables start at y1", self.line, col)
                return ("y", k)
            if val in FUNCTIONS:
                if self.peek()[1] != "(":
                    self.fail(f"function {val!r} needs parentheses")
                self.next()
                arg = self.expr()
                if self.peek()[1] != ")":
                    self.fail("expected ')'")
                self.next()
                return ("call", val, arg)
            raise ParseError(f"unknown identifier {val!r}", self.line, col)
        if val == "(":
            node = self.expr()
            if self.peek()[1] != ")":
                self.fail("expected ')'")
            self.next()
            return node
        raise ParseError(
            "expected a number, variable, function, or '('", self.line, col
        )


def parse_expr(text, line=None, col0=0):
    """Parse one expression; returns its AST."""
    return _ExprParser(_tokenize(text, line, col0), line).parse()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def format_expr(node):
    """Pretty-print an AST so that parse_expr(format_expr(a)) == a."""

    def go(n, parent_prec, right_side=False):
        kind = n[0]
        if kind == "num":
            v = n[1]
            s = repr(v) if v != int(v) else str(int(v))
            return s
        if kind == "t":
            return "t"
        if kind == "y":
            return f"y{n[1]}"
        if kind == "call":
            return f"{n[1]}({go(n[2], 0)})"
        if kind == "neg":
            inner = go(n[1], _PREC["neg"])
            s = f"-{inner}"
            return f"({s})" if parent_prec > _PREC["neg"] or right_side else s
        op = kind
        p = _PREC[op]
        # left-assoc except ^; parenthesize right child at equal precedence
        left = go(n[1], p)
        right = go(n[2], p + (0 if op == "^" else 1))
        if op == "^":
            left = go(n[1], p + 1)
            right = go(n[2], p)
        s = f"{left}{op}{right}"
        if parent_prec > p or (right_side and parent_prec == p):
            return f"({s})"
        return s

    return go(node, 0)


def _collect_y(node, acc):
    if node[0] == "y":
        acc.add(node[1])
    for child in node[1:]:
        if isinstance(child, tuple):
            _collect_y(child, acc)


def _emit(node):
    kind = node[0]
    if kind == "num":
        return repr(node[1])
    if kind == "t":
        return "t"
    if kind == "y":
        return f"y[{node[1] - 1}]"
    if kind == "neg":
        return f"(-{_emit(node[1])})"
    if kind == "call":
        return f"{FUNCTIONS[node[1]]}({_emit(node[2])})"
    op = "**" if kind == "^" else kind
    return f"({_emit(node[1])}{op}{_emit(node[2])})"


def compile_expr(node):
    """Compile an AST into a fast python callable f(t, y)."""
    code = compile(f"lambda t, y=None: {_emit(node)}", "<expr>", "eval")
    return eval(code, {"math": math})


# ---------------------------------------------------------------------------
# system types
# ---------------------------------------------------------------------------


@dataclass
class LinearSystem:
    """x' = A(t) x on the tagged domain."""

    name: str
    dim: int
    coeff: object  # callable t -> (dim, dim) ndarray
    domain: str = "full-line"
    period: float | None = None
    coeff_exprs: list | None = None
    source: str | None = None

    def domain_interval(self):
        if self.domain == "half-line-plus":
            return (0.0, math.inf)
        if self.domain == "half-line-minus":
            return (-math.inf, 0.0)
        return (-math.inf, math.inf)

    def contains(self, t):
        lo, hi = self.domain_interval()
        return lo <= t <= hi

    def A(self, t):
        return eval_coeff(self, t)

    def sup_norm(self, grid):
        """Sampled sup_t ||A(t)||_2 over the given times."""
        from .linalg import operator_norm_2

        return max(operator_norm_2(eval_coeff(self, t)) for t in grid)


def is_autonomous(sys):
    """True when every coefficient entry is provably time-free.

    Decided by walking the parsed entry ASTs; systems built from bare
    callables (no coeff_exprs) cannot be certified and report False.
    """
    if sys.coeff_exprs is None:
        return False

    def free(node):
        if node[0] == "t":
            return False
        return all(free(c) for c in node[1:] if isinstance(c, tuple))

    return all(free(e) for row in sys.coeff_exprs for e in row)


def eval_coeff(sys, t):
    """A(t) with domain checking; deterministic for fixed t."""
    t = float(t)
    if not sys.contains(t):
        raise DomainError(
            f"t={t} outside domain {sys.domain!r} of system {sys.name!r}"
        )
    A = np.asarray(sys.coeff(t), dtype=float)
    if A.shape != (sys.dim, sys.dim):
        raise ShapeError(
            f"coefficient returned shape {A.shape}, expected {(sys.dim, sys.dim)}"
        )
    if not np.all(np.isfinite(A)):
        raise InvalidInput(f"coefficient has non-finite entries at t={t}")
    return A


@dataclass
class QuasilinearSystem:
    """x' = A(t) x + f(t, x) with sampled bound/Lipschitz validation."""

    linear: LinearSystem
    perturbation: object  # callable (t, y ndarray) -> ndarray
    mu: float
    gamma: float
    f_exprs: list | None = None
    validation: dict = field(default_factory=dict)

    @property
    def name(self):
        return self.linear.name

    @property
    def dim(self):
        return self.linear.dim

    def f(self, t, y):
        y = np.asarray(y, dtype=float)
        out = np.asarray(self.perturbation(float(t), y), dtype=float)
        if out.shape != (self.dim,):
            raise ShapeError(
                f"perturbation returned shape {out.shape}, expected ({self.dim},)"
            )
        return out

    def validate_bounds(self, seed=0, n_samples=200, t_span=10.0, y_scale=3.0,
                        slack=0.05):
        """Sample |f| <= mu and Lipschitz quotients <= gamma*(1+slack).

        Violations warn and set flags; they never raise (declared bounds
        are hypotheses to audit, not preconditions to enforce).
        """
        rng = np.random.default_rng(seed)
        lo, hi = self.linear.domain_interval()
        lo = max(lo, -t_span)
        hi = min(hi, t_span)
        ts = rng.uniform(lo, hi, n_samples)
        worst_mu = 0.0
        worst_gamma = 0.0
        for t in ts:
            y1 = rng.uniform(-y_scale, y_scale, self.dim)
            y2 = rng.uniform(-y_scale, y_scale, self.dim)
            f1 = self.f(t, y1)
            f2 = self.f(t, y2)
            worst_mu = max(worst_mu, np.linalg.norm(f1), np.linalg.norm(f2))
            dy = np.linalg.norm(y1 - y2)
            if dy > 1e-9:
                worst_gamma = max(worst_gamma, np.linalg.norm(f1 - f2) / dy)
        mu_ok = worst_mu <= self.mu * (1 + slack) + 1e-15
        gamma_ok = worst_gamma <= self.gamma * (1 + slack) + 1e-15
        if not mu_ok:
            warnings.warn(
                f"sampled |f| = {worst_mu:.4g} exceeds declared mu = {self.mu}",
                stacklevel=2,
            )
        if not gamma_ok:
            warnings.warn(
                f"sampled Lipschitz quotient {worst_gamma:.4g} exceeds "
                f"declared gamma = {self.gamma}",
                stacklevel=2,
            )
        self.validation = {
            "mu_ok": bool(mu_ok),
            "gamma_ok": bool(gamma_ok),
            "worst_mu": float(worst_mu),
            "worst_gamma": float(worst_gamma),
        }
        return self.validation


def check_periodicity(sys, tol=1e-10, n_samples=64, seed=0):
    """Sampled test of A(t + omega) = A(t).  Returns worst relative defect."""
    if sys.period is None:
        raise InvalidInput("system declares no period")
    from .linalg import operator_norm_2

    omega = sys.period
    rng = np.random.default_rng(seed)
    lo, hi = sys.domain_interval()
    lo = max(lo, -3 * omega)
    hi = min(hi, 3 * omega) - omega
    worst = 0.0
    for t in rng.uniform(lo, hi, n_samples):
        A0 = eval_coeff(sys, t)
        A1 = eval_coeff(sys, t + omega)
        scale = max(1.0, operator_norm_2(A0))
        worst = max(worst, operator_norm_2(A1 - A0) / scale)
    return worst


def shifted_system(sys, lam, name=None):
    """x' = (A(t) - lam I) x; growth rates shift down by lam."""
    lam = float(lam)
    eye = np.eye(sys.dim)

    def coeff(t, _s=sys, _l=lam, _I=eye):
        return eval_coeff(_s, t) - _l * _I

    return LinearSystem(
        name=name or f"{sys.name}[shift {lam:g}]", dim=sys.dim, coeff=coeff,
        domain=sys.domain, period=sys.period)


def conjugated_system(sys, Q, Qdot, name=None):
    """Coefficient of y where x = Q(t) y: Q^{-1} (A Q - Q').

    Q and Qdot are callables returning (n, n) arrays; the caller is
    responsible for Qdot actually being the derivative of Q.
    """

    def coeff(t, _s=sys, _Q=Q, _D=Qdot):
        Qt = np.asarray(_Q(t), dtype=float)
        Dt = np.asarray(_D(t), dtype=float)
        return np.linalg.solve(Qt, eval_coeff(_s, t) @ Qt - Dt)

    return LinearSystem(
        name=name or f"{sys.name}[conj]", dim=sys.dim, coeff=coeff,
        domain=sys.domain, period=None)


def reversed_system(sys, name=None):
    """Time reversal tau -> -t: coefficient -A(-tau).

    Solutions of the reversed system are t -> x(-t); forward behaviour
    of the reversal mirrors backward behaviour of the original.
    """
    if sys.domain == "half-line-plus":
        domain = "half-line-minus"
    elif sys.domain == "half-line-minus":
        domain = "half-line-plus"
    else:
        domain = "full-line"

    def coeff(t, _s=sys):
        return -eval_coeff(_s, -t)

    return LinearSystem(
        name=name or f"{sys.name}[reversed]", dim=sys.dim, coeff=coeff,
        domain=domain, period=sys.period)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def _strip_comment(line):
    out = []
    for ch in line:
        if ch == "#":
            break
        out.append(ch)
    return "".join(out)


def parse_system(text, name=None):
    """Parse a config text into a LinearSystem or QuasilinearSystem."""
    raw = {}
    lines = text.splitlines()
    for lineno, line in enumerate(lines, start=1):
        stripped = _strip_comment(line)
        if not stripped.strip():
            continue
        if "=" not in stripped:
            raise ParseError("expected 'key = value'", lineno,
                             len(line) - len(line.lstrip()) + 1)
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in raw:
            raise ParseError(f"duplicate key {key!r}", lineno, 1)
        raw[key] = (value.strip(), lineno, stripped.index("=") + 2)

    known = {"name", "dim", "domain", "period", "A", "f", "mu", "gamma"}
    for key, (_, lineno, col) in raw.items():
        if key not in known:
            raise ParseError(f"unknown key {key!r}", lineno, 1)
    for key in ("dim", "A"):
        if key not in raw:
            raise ParseError(f"missing required key {key!r}",
                             len(lines) or 1, 1)

    def scalar(key, conv, default=None):
        if key not in raw:
            return default
        value, lineno, col = raw[key]
        try:
            return conv(value)
        except ValueError as exc:
            raise ParseError(f"bad value for {key!r}: {exc}", lineno, col)

    dim = scalar("dim", int)
    if dim < 1:
        raise ParseError("dim must be >= 1", raw["dim"][1], raw["dim"][2])
    sys_name = scalar("name", str, name or "unnamed")
    domain = scalar("domain", str, "full-line")
    if domain not in DOMAINS:
        raise ParseError(
            f"domain must be one of {DOMAINS}", raw["domain"][1],
            raw["domain"][2],
        )
    period = scalar("period", float)
    if period is not None and period <= 0:
        raise ParseError("period must be positive", raw["period"][1],
                         raw["period"][2])

    value, lineno, col = raw["A"]
    rows = value.split(";")
    if len(rows) != dim:
        raise ShapeError(
            f"A has {len(rows)} rows, dim = {dim} (line {lineno})"
        )
    coeff_exprs = []
    offset = col
    for row in rows:
        entries = row.split(",")
        if len(entries) != dim:
            raise ShapeError(
                f"A row has {len(entries)} entries, dim = {dim} (line {lineno})"
            )
        row_asts = []
        for entry in entries:
            ast = parse_expr(entry, line=lineno, col0=offset)
            used = set()
            _collect_y(ast, used)
            if used:
                raise ParseError(
                    "coefficient entries may not reference state variables",
                    lineno, offset + 1,
                )
            row_asts.append(ast)
            offset += len(entry) + 1
        coeff_exprs.append(row_asts)
        offset += len(row) - sum(len(e) + 1 for e in entries) + 1

    entry_fns = [[compile_expr(a) for a in row] for row in coeff_exprs]

    def coeff(t, _fns=entry_fns, _n=dim):
        return np.array([[f(t) for f in row] for row in _fns])

    linear = LinearSystem(
        name=sys_name, dim=dim, coeff=coeff, domain=domain, period=period,
        coeff_exprs=coeff_exprs, source=text,
    )
    if period is not None:
        defect = check_periodicity(linear)
        if defect > 1e-10:
            raise InvalidInput(
                f"declared period {period} fails sampling "
                f"(defect {defect:.3e})"
            )

    if "f" not in raw:
        for key in ("mu", "gamma"):
            if key in raw:
                raise ParseError(f"{key!r} given without 'f'", raw[key][1], 1)
        return linear

    value, lineno, col = raw["f"]
    entries = value.split(",")
    if len(entries) != dim:
        raise ShapeError(
            f"f has {len(entries)} entries, dim = {dim} (line {lineno})"
        )
    f_exprs = []
    offset = col
    for entry in entries:
        ast = parse_expr(entry, line=lineno, col0=offset)
        used = set()
        _collect_y(ast, used)
        if used and max(used) > dim:
            raise ShapeError(
                f"f references y{max(used)} but dim = {dim} (line {lineno})"
            )
        f_exprs.append(ast)
        offset += len(entry) + 1
    f_fns = [compile_expr(a) for a in f_exprs]

    def perturbation(t, y, _fns=f_fns):
        return np.array([f(t, y) for f in _fns])

    mu = scalar("mu", float, 0.0)
    gamma = scalar("gamma", float, 0.0)
    if mu < 0 or gamma < 0:
        raise ParseError("mu and gamma must be nonnegative",
                         raw.get("mu", raw.get("gamma"))[1], 1)
    quasi = QuasilinearSystem(
        linear=linear, perturbation=perturbation, mu=mu, gamma=gamma,
        f_exprs=f_exprs,
    )
    quasi.validate_bounds()
    return quasi


def format_system(sys):
    """Regenerate a config text from a parsed system (round-trips ASTs)."""
    linear = sys.linear if isinstance(sys, QuasilinearSystem) else sys
    if linear.coeff_exprs is None:
        raise InvalidInput("system carries no expression ASTs")
    out = [f"name = {linear.name}", f"dim = {linear.dim}",
           f"domain = {linear.domain}"]
    if linear.period is not None:
        out.append(f"period = {linear.period!r}")
    rows = [", ".join(format_expr(a) for a in row)
            for row in linear.coeff_exprs]
    out.append("A = " + "; ".join(rows))
    if isinstance(sys, QuasilinearSystem):
        out.append("f = " + ", ".join(format_expr(a) for a in sys.f_exprs))
        out.append(f"mu = {sys.mu!r}")
        out.append(f"gamma = {sys.gamma!r}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# builtin catalog
# ---------------------------------------------------------------------------

_PI = repr(math.pi)
_TWO_PI = repr(2 * math.pi)


def _cfg_markus_yamabe():
    return f"""
name = markus_yamabe
dim = 2
domain = full-line
period = {_PI}
A = -1+1.5*cos(t)^2, 1-1.5*sin(t)*cos(t); -1-1.5*sin(t)*cos(t), -1+1.5*sin(t)^2
"""


def _cfg_antisym_exp():
    return """
name = antisym_exp
dim = 2
domain = full-line
A = 0, exp(t); -exp(t), 0
"""


def _cfg_scalar_arctan():
    return """
name = scalar_arctan
dim = 1
domain = full-line
A = 1/(1+t^2)
"""


def _cfg_scalar_linear_t():
    return """
name = scalar_linear_t
dim = 1
domain = full-line
A = t
"""


def _cfg_auto_diag_113():
    return """
name = auto_diag_113
dim = 3
domain = full-line
A = 1, 0, 0; 0, 1, 0; 0, 0, -1
"""


def _cfg_coppel_counterexample():
    return """
name = coppel_counterexample
dim = 2
domain = full-line
A = -1, exp(2*t); 0, 1
"""


def _cfg_periodic_scalar(c=0.3):
    return f"""
name = periodic_scalar
dim = 1
domain = full-line
period = {_TWO_PI}
A = {c!r}+cos(t)
"""


def _cfg_palmer_demo():
    return """
name = palmer_demo
dim = 1
domain = full-line
A = -1
f = 0.1*sin(y1)
mu = 0.1
gamma = 0.1
"""


def _cfg_scalar_switch():
    return """
name = scalar_switch
dim = 1
domain = full-line
A = -tanh(t)
"""


CATALOG = {
    "markus_yamabe": (
        "2-d periodic coefficient whose frozen-time eigenvalues are stable "
        "while one solution direction grows like e^(t/2)",
        _cfg_markus_yamabe,
    ),
    "antisym_exp": (
        "antisymmetric coefficient with e^t rate: orthogonal flow, "
        "norm-preserving rotations of rapidly increasing speed",
        _cfg_antisym_exp,
    ),
    "scalar_arctan": (
        "scalar a(t) = 1/(1+t^2): integrable coefficient, bounded "
        "non-decaying flow, spectrum {0}",
        _cfg_scalar_arctan,
    ),
    "scalar_linear_t": (
        "scalar a(t) = t: unbounded coefficient, no exponential bound, "
        "unbounded spectrum",
        _cfg_scalar_linear_t,
    ),
    "auto_diag_113": (
        "constant diag(1, 1, -1): saddle with rates {1, 1, -1}",
        _cfg_auto_diag_113,
    ),
    "coppel_counterexample": (
        "triangular system whose two dichotomy inequalities hold while the "
        "third (projected cross term) fails",
        _cfg_coppel_counterexample,
    ),
    "periodic_scalar": (
        "scalar a(t) = c + cos(t), period 2*pi (parameter c, default 0.3)",
        _cfg_periodic_scalar,
    ),
    "palmer_demo": (
        "scalar x' = -x + 0.1*sin(x): contraction plus small Lipschitz "
        "perturbation, the standard linearization demo",
        _cfg_palmer_demo,
    ),
    "scalar_switch": (
        "scalar a(t) = -tanh(t): stable on both half-lines separately, "
        "index 1, no full-line dichotomy",
        _cfg_scalar_switch,
    ),
}

_NAME_ARG_RE = re.compile(r"^([A-Za-z_][A-Za-z_0-9]*)\s*\(\s*([^)]*)\s*\)$")


def builtin(name, **params):
    """Instantiate a catalog system.  Accepts ``periodic_scalar(0.7)``-style
    names for parametrized entries."""
    m = _NAME_ARG_RE.match(name.strip())
    if m:
        name = m.group(1)
        arg = m.group(2)
        if arg:
            try:
                params.setdefault("c", float(arg))
            except ValueError:
                raise NotInCatalog(f"bad parameter {arg!r} for {name!r}")
    if name not in CATALOG:
        raise NotInCatalog(
            f"{name!r} not in catalog; known: {', '.join(sorted(CATALOG))}"
        )
    _, factory = CATALOG[name]
    try:
        cfg = factory(**params)
    except TypeError:
        raise InvalidInput(
            f"builtin {name!r} does not accept parameters {sorted(params)}"
        )
    return parse_system(cfg)


def catalog_entries():
    """(name, dim, domain, description) rows for every builtin."""
    rows = []
    for name in sorted(CATALOG):
        desc, factory = CATALOG[name]
        sys = parse_system(factory())
        sys = sys.linear if isinstance(sys, QuasilinearSystem) else sys
        rows.append((name, sys.dim, sys.domain, desc))
    return rows
