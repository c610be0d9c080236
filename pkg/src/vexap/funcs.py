"""Scalar functions given as expression strings, catalog entries or samples.

Expressions are parsed by a small recursive-descent parser over +, -, *, /, ^
and the functions sin, cos, exp, ln, sqrt, abs, sign, with numeric literals
and the constants pi and e.  Evaluation is vectorized over numpy arrays and
pure, so parsed functions are safe to share between threads.

sign(0) evaluates to 0 exactly; there is no tolerance band around zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


class ParseError(ValueError):
    def __init__(self, message, position):
        super().__init__(f"{message} (offset {position})")
        self.position = position


class DomainError(ValueError):
    pass


class EvaluationError(ArithmeticError):
    pass


_FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt", "abs", "sign")
_CONSTANTS = {"pi": math.pi, "e": math.e}


# ---------------------------------------------------------------------------
# expression trees

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Bin:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _to_source(node, parent_prec=0, right_of_minus=False):
    if isinstance(node, Num):
        v = node.value
        s = repr(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(v)
        return s
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({_to_source(node.arg)})"
    if isinstance(node, Neg):
        inner = _to_source(node.arg, _PRECEDENCE["neg"])
        s = f"-{inner}"
        return f"({s})" if parent_prec > _PRECEDENCE["neg"] or right_of_minus else s
    if isinstance(node, Bin):
        prec = _PRECEDENCE[node.op]
        ls = _to_source(node.left, prec)
        # - and / are left-associative, ^ is right-associative
        if node.op in ("+", "-", "*", "/"):
            rs = _to_source(node.right, prec + 1, right_of_minus=False)
        else:
            rs = _to_source(node.right, prec, right_of_minus=False)
        s = f"{ls}{node.op}{rs}"
        return f"({s})" if prec < parent_prec or (right_of_minus and prec <= _PRECEDENCE["-"]) else s
    raise TypeError(f"unknown node {node!r}")


class _Tokenizer:
    def __init__(self, source):
        self.source = source
        self.pos = 0

    def next_token(self):
        s, i = self.source, self.pos
        while i < len(s) and s[i].isspace():
            i += 1
        self.pos = i
        if i >= len(s):
            return ("end", None, i)
        ch = s[i]
        if ch in "+-*/^(),":
            self.pos = i + 1
            return ("op", ch, i)
        if ch.isdigit() or ch == ".":
            j = i
            seen_dot = False
            while j < len(s) and (s[j].isdigit() or (s[j] == "." and not seen_dot)):
                seen_dot = seen_dot or s[j] == "."
                j += 1
            if j < len(s) and s[j] in "eE":
                k = j + 1
                if k < len(s) and s[k] in "+-":
                    k += 1
                if k < len(s) and s[k].isdigit():
                    while k < len(s) and s[k].isdigit():
                        k += 1
                    j = k
            try:
                val = float(s[i:j])
            except ValueError:
                raise ParseError("malformed number", i)
            self.pos = j
            return ("num", val, i)
        if ch.isalpha() or ch == "_":
            j = i
            while j < len(s) and (s[j].isalnum() or s[j] == "_"):
                j += 1
            self.pos = j
            return ("ident", s[i:j], i)
        raise ParseError(f"unexpected character {ch!r}", i)


class _Parser:
    def __init__(self, source, variables):
        self.tok = _Tokenizer(source)
        self.variables = tuple(variables)
        self.current = self.tok.next_token()

    def _advance(self):
        self.current = self.tok.next_token()

    def _expect_op(self, symbol):
        kind, val, pos = self.current
        if kind != "op" or val != symbol:
            raise ParseError(f"expected {symbol!r}", pos)
        self._advance()

    def parse(self):
        node = self.expr()
        kind, _, pos = self.current
        if kind != "end":
            raise ParseError("trailing input", pos)
        return node

    def expr(self):
        node = self.term()
        while self.current[0] == "op" and self.current[1] in "+-":
            op = self.current[1]
            self._advance()
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.current[0] == "op" and self.current[1] in "*/":
            op = self.current[1]
            self._advance()
            node = Bin(op, node, self.unary())
        return node

    def unary(self):
        if self.current[0] == "op" and self.current[1] == "-":
            self._advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.current[0] == "op" and self.current[1] == "^":
            self._advance()
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.current
        if kind == "num":
            self._advance()
            return Num(val)
        if kind == "op" and val == "(":
            self._advance()
            node = self.expr()
            self._expect_op(")")
            return node
        if kind == "ident":
            self._advance()
            if self.current[0] == "op" and self.current[1] == "(":
                if val not in _FUNCTIONS:
                    raise ParseError(f"unknown function {val!r}", pos)
                self._advance()
                arg = self.expr()
                if self.current[0] == "op" and self.current[1] == ",":
                    raise ParseError(f"{val} takes a single argument", self.current[2])
                self._expect_op(")")
                return Call(val, arg)
            if val in self.variables:
                return Var(val)
            if val in _CONSTANTS:
                return Const(val)
            raise ParseError(f"unknown identifier {val!r}", pos)
        raise ParseError("expected a value", pos)


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(f"nonfinite intermediate in {what}")


def _eval_node(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Const):
        return _CONSTANTS[node.name]
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval_node(node.arg, env)
    if isinstance(node, Bin):
        lv = _eval_node(node.left, env)
        rv = _eval_node(node.right, env)
        if node.op == "+":
            return lv + rv
        if node.op == "-":
            return lv - rv
        if node.op == "*":
            return lv * rv
        if node.op == "/":
            if np.any(rv == 0):
                raise DomainError("division by zero")
            return lv / rv
        if node.op == "^":
            with np.errstate(over="ignore", invalid="ignore"):
                out = np.power(lv, rv)
            _check_finite(out, "power")
            return out
    if isinstance(node, Call):
        av = _eval_node(node.arg, env)
        if node.func == "sin":
            return np.sin(av)
        if node.func == "cos":
            return np.cos(av)
        if node.func == "exp":
            with np.errstate(over="ignore"):
                out = np.exp(av)
            _check_finite(out, "exp")
            return out
        if node.func == "ln":
            if np.any(av <= 0):
                raise DomainError("ln of a nonpositive argument")
            return np.log(av)
        if node.func == "sqrt":
            if np.any(av < 0):
                raise DomainError("sqrt of a negative argument")
            return np.sqrt(av)
        if node.func == "abs":
            return np.abs(av)
        if node.func == "sign":
            return np.sign(av)
    raise TypeError(f"unknown node {node!r}")


def _collect_kink_args(node, out):
    """Arguments of sign/abs nodes: their roots are integrand breakpoints."""
    if isinstance(node, Call):
        if node.func in ("sign", "abs"):
            out.append(node.arg)
        _collect_kink_args(node.arg, out)
    elif isinstance(node, Neg):
        _collect_kink_args(node.arg, out)
    elif isinstance(node, Bin):
        _collect_kink_args(node.left, out)
        _collect_kink_args(node.right, out)


@dataclass(frozen=True)
class FuncExpr:
    """A parsed expression together with its source text."""

    source: str
    ast: object
    variables: tuple = ("x",)

    def __str__(self):
        return self.print_source()

    def print_source(self) -> str:
        return _to_source(self.ast)

    def eval(self, **env):
        arrs = {k: np.asarray(v, dtype=float) for k, v in env.items()}
        missing = set(self.variables) - set(arrs)
        if missing:
            raise KeyError(f"missing variables {sorted(missing)}")
        out = _eval_node(self.ast, arrs)
        shape = np.broadcast_shapes(*(a.shape for a in arrs.values())) if arrs else ()
        out = np.broadcast_to(np.asarray(out, dtype=float), shape).copy() if shape else float(out)
        return out


def parse_expr(source: str, variables=("x",)) -> FuncExpr:
    """Parse an expression over the given variables (default: x)."""
    if not source or not source.strip():
        raise ParseError("empty expression", 0)
    ast = _Parser(source, variables).parse()
    return FuncExpr(source=source, ast=ast, variables=tuple(variables))


# ---------------------------------------------------------------------------
# root scanning for breakpoints of sign/abs compositions

def _scan_roots(fn, lo, hi, n=4096):
    """Roots of a scalar vectorized function located by scan + bisection."""
    if hi <= lo:
        return np.array([])
    xs = np.linspace(lo, hi, n + 1)
    vals = fn(xs)
    roots = list(xs[vals == 0])
    sign_change = np.where(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    for i in sign_change:
        a, b = xs[i], xs[i + 1]
        fa, fb = vals[i], vals[i + 1]
        for _ in range(80):
            m = 0.5 * (a + b)
            fm = fn(np.array([m]))[0]
            if fm == 0:
                a = b = m
                break
            if fa * fm < 0:
                b, fb = m, fm
            else:
                a, fa = m, fm
            if b - a < 1e-14 * max(1.0, abs(a)):
                break
        roots.append(0.5 * (a + b))
    return np.unique(np.asarray(roots))


# ---------------------------------------------------------------------------
# ScalarFunction

class ScalarFunction:
    """A function of one real variable: expression, catalog entry or samples.

    Immutable after construction; evaluation is pure.  Sampled functions
    refuse any query outside their grid rather than extrapolating.
    """

    def __init__(self, kind, domain, *, expr=None, catalog_id=None, fn=None,
                 grid=None, samples=None, interpolation="linear", label=None):
        self.kind = kind
        self.domain = (float(domain[0]), float(domain[1]))
        self.expr = expr
        self.catalog_id = catalog_id
        self._fn = fn
        self.grid = grid
        self.samples = samples
        self.interpolation = interpolation
        self.label = label or catalog_id or (expr.source if expr is not None else kind)
        self._kink_args = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_expression(cls, source, domain=(-np.inf, np.inf)):
        return cls("expression", domain, expr=parse_expr(source))

    @classmethod
    def from_catalog(cls, name):
        try:
            spec = CATALOG[name]
        except KeyError:
            raise KeyError(f"unknown catalog function {name!r}; "
                           f"available: {sorted(CATALOG)}") from None
        return cls("catalog", spec["domain"], fn=spec["fn"], catalog_id=name)

    @classmethod
    def from_samples(cls, grid, samples, interpolation="linear"):
        grid = np.asarray(grid, dtype=float)
        samples = np.asarray(samples, dtype=float)
        if grid.ndim != 1 or len(grid) < 2:
            raise ValueError("sample grid needs at least two points")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("sample grid must be strictly increasing")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if interpolation != "linear":
            raise ValueError("only linear interpolation is supported")
        return cls("sampled", (grid[0], grid[-1]), grid=grid, samples=samples)

    # -- evaluation ----------------------------------------------------------

    def _check_domain(self, x):
        lo, hi = self.domain
        if np.any(x < lo) or np.any(x > hi):
            raise DomainError(f"argument outside domain [{lo:g}, {hi:g}] of {self.label}")

    def __call__(self, x):
        scalar = np.isscalar(x)
        xa = np.asarray(x, dtype=float)
        self._check_domain(xa)
        if self.kind == "expression":
            out = self.expr.eval(x=xa)
        elif self.kind == "catalog":
            out = self._fn(xa)
        else:
            if self.samples.ndim == 1:
                out = np.interp(xa, self.grid, self.samples)
            else:
                out = np.stack([np.interp(xa, self.grid, col)
                                for col in self.samples.T], axis=-1)
        if scalar and (self.kind != "sampled" or self.samples.ndim == 1):
            return float(np.asarray(out).reshape(()))
        return np.asarray(out)

    eval = __call__

    @property
    def vector_dim(self):
        if self.kind == "sampled" and self.samples.ndim == 2:
            return self.samples.shape[1]
        return 1

    # -- metadata for quadrature ----------------------------------------------

    def breakpoints(self, lo, hi):
        """Points in [lo, hi] where the function may jump or kink."""
        if self.kind == "catalog":
            bp = CATALOG[self.catalog_id].get("breakpoints")
            return bp(lo, hi) if bp else np.array([])
        if self.kind == "expression":
            if self._kink_args is None:
                args = []
                _collect_kink_args(self.expr.ast, args)
                self._kink_args = args
            pts = [_scan_roots(lambda xs, a=a: np.asarray(_eval_node(a, {"x": xs})),
                               lo, hi)
                   for a in self._kink_args]
            return np.unique(np.concatenate(pts)) if pts else np.array([])
        return self.grid[(self.grid > lo) & (self.grid < hi)]


def eval_func(f: ScalarFunction, x):
    """Evaluate f at x (scalar or array), enforcing domain and finiteness."""
    out = f(x)
    if not np.all(np.isfinite(out)):
        raise EvaluationError(f"nonfinite value of {f.label}")
    return out


# ---------------------------------------------------------------------------
# catalog

def _sin_sqrt2(x):
    return np.sin(x) + np.sin(np.sqrt(2.0) * x)


def _pi_multiples(lo, hi):
    k0 = math.ceil(lo / math.pi)
    k1 = math.floor(hi / math.pi)
    return np.arange(k0, k1 + 1) * math.pi


CATALOG = {
    "sin": {"fn": np.sin, "domain": (-np.inf, np.inf)},
    "cos": {"fn": np.cos, "domain": (-np.inf, np.inf)},
    "exp_decay": {"fn": lambda x: np.exp(-x), "domain": (-np.inf, np.inf)},
    "sin_plus_sin_sqrt2": {"fn": _sin_sqrt2, "domain": (-np.inf, np.inf)},
    "sign_sin": {
        "fn": lambda x: np.sign(np.sin(x)),
        "domain": (-np.inf, np.inf),
        "breakpoints": _pi_multiples,
    },
    "sign_sin_plus_sin_sqrt2": {
        "fn": lambda x: np.sign(_sin_sqrt2(x)),
        "domain": (-np.inf, np.inf),
        "breakpoints": lambda lo, hi: _scan_roots(_sin_sqrt2, lo, hi,
                                                  n=max(64, int((hi - lo) * 64))),
    },
    "one_minus_ln": {
        "fn": lambda x: 1.0 - np.log(x),
        "domain": (0.0, 1.0),
    },
}


# ---------------------------------------------------------------------------
# CSV ingestion

def load_samples(path, time_column=0, value_columns=None) -> ScalarFunction:
    """Load a sampled function from a CSV file with a header row.

    Columns may be named (header strings) or indexed.  Time must be strictly
    increasing.  The default takes the first column as time and all remaining
    columns as values.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [row for row in reader if row]

    def col_index(spec):
        if isinstance(spec, int):
            if spec >= len(header):
                raise ValueError(f"{path}: no column {spec}")
            return spec
        try:
            return header.index(spec)
        except ValueError:
            raise ValueError(f"{path}: no column named {spec!r}") from None

    t_idx = col_index(time_column)
    if value_columns is None:
        v_idx = [i for i in range(len(header)) if i != t_idx]
    else:
        v_idx = [col_index(c) for c in value_columns]
    if not v_idx:
        raise ValueError(f"{path}: no value columns")

    try:
        times = np.array([float(r[t_idx]) for r in rows])
        values = np.array([[float(r[i]) for i in v_idx] for r in rows])
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: parse failure ({exc})") from None
    if np.any(np.diff(times) <= 0):
        raise ValueError(f"{path}: time column must be strictly increasing")
    if values.shape[1] == 1:
        values = values[:, 0]
    return ScalarFunction.from_samples(times, values)


def as_callable(f):
    """Accept a ScalarFunction, FuncExpr or plain vectorized callable."""
    if isinstance(f, ScalarFunction):
        return f
    if isinstance(f, FuncExpr):
        return lambda x: f.eval(x=x)
    if callable(f):
        return f
    raise TypeError(f"not a function-like object: {f!r}")


def function_breakpoints(f, lo, hi):
    bp = getattr(f, "breakpoints", None)
    if bp is None:
        return np.array([])
    return np.asarray(bp(lo, hi), dtype=float)
