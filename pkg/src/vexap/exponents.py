"""Variable exponents p : Omega -> [1, inf] and their arithmetic.

Infinity is a first-class exponent value (float('inf'), never an overflow
artifact); conjugation and composition handle it through explicit tables.
Essential bounds are grid infima/suprema with refinement, so measure-zero
spikes are invisible by design.  Unbounded growth into a domain endpoint is
detected by a geometric probe and reported as an infinite supremum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .funcs import DomainError, ScalarFunction, as_callable

INF = float("inf")


class InvalidExponentError(ValueError):
    pass


@dataclass(frozen=True)
class ExponentClass:
    is_constant: bool
    in_D_plus: bool
    in_C_plus: bool
    attains_infinity: bool


class VariableExponent:
    """A measurable exponent function with classification metadata.

    Values must lie in [1, inf]; `eval` returns float('inf') exactly where
    the exponent is infinite.  Instances are immutable and cache their
    essential bounds.
    """

    def __init__(self, fn, domain, label="p"):
        self._fn = fn
        self.domain = (float(domain[0]), float(domain[1]))
        if not np.isfinite(self.domain[0]) or not np.isfinite(self.domain[1]):
            raise ValueError("exponent domain must be a finite interval")
        if self.domain[1] <= self.domain[0]:
            raise ValueError("empty exponent domain")
        self.label = label
        self._bounds = None

    # -- constructors --------------------------------------------------------

    @classmethod
    def constant(cls, value, domain=(0.0, 1.0)):
        value = float(value)
        if value < 1.0:
            raise InvalidExponentError(f"exponent {value} < 1")
        return cls(lambda x: np.full(np.shape(x), value), domain, label=f"{value:g}")

    @classmethod
    def infinite(cls, domain=(0.0, 1.0)):
        return cls(lambda x: np.full(np.shape(x), INF), domain, label="inf")

    @classmethod
    def from_function(cls, f, domain=None):
        if isinstance(f, ScalarFunction):
            dom = domain or f.domain
            return cls(as_callable(f), dom, label=f.label)
        if domain is None:
            raise ValueError("domain required for a bare callable")
        return cls(f, domain, label=getattr(f, "__name__", "p"))

    @classmethod
    def from_expression(cls, source, domain=(0.0, 1.0)):
        return cls.from_function(ScalarFunction.from_expression(source, domain))

    # -- evaluation ----------------------------------------------------------

    def eval(self, x):
        out = np.asarray(self._fn(np.asarray(x, dtype=float)), dtype=float)
        bad = out < 1.0 - 1e-12
        if np.any(bad):
            xb = np.asarray(x, dtype=float)[bad] if np.ndim(x) else x
            raise InvalidExponentError(
                f"exponent {self.label} takes value < 1 (e.g. at x={np.ravel(xb)[:1]})")
        return np.maximum(out, 1.0)

    __call__ = eval

    # -- essential bounds ----------------------------------------------------

    def _grid_values(self, n):
        lo, hi = self.domain
        xs = np.linspace(lo, hi, n)
        vals = [self.eval(xs[1:-1])]
        # endpoints may be honest domain failures (e.g. 1 - ln x at 0)
        for probe in (xs[:1], xs[-1:]):
            try:
                vals.append(self.eval(probe))
            except DomainError:
                continue
        return np.concatenate(vals)

    def _endpoint_blowup(self, sup_grid):
        lo, hi = self.domain
        span = hi - lo
        for side in (lo, hi):
            ds = span * 10.0 ** -np.arange(2, 41, dtype=float)
            xs = lo + ds if side == lo else hi - ds
            try:
                vals = self.eval(xs)
            except DomainError:
                continue
            if np.any(np.isinf(vals)):
                return True
            inc = np.diff(vals)          # increments along shrinking distance
            tail = inc[-15:]
            if (np.all(tail > 0) and vals[-1] > sup_grid + 5.0
                    and np.all(tail >= 0.5 * np.median(tail))):
                return True
        return False

    def essential_bounds(self, initial=129, tol=1e-9, max_points=2 ** 20):
        """Grid essential infimum/supremum, refined until stable.

        Refinement stops when two successive resolutions agree within `tol`
        or the resolution floor is hit; a supremum still growing at the floor
        triggers the endpoint probe and may be reported as inf.
        """
        if self._bounds is not None:
            return self._bounds
        n = initial
        vals = self._grid_values(n)
        lo_prev, hi_prev = float(np.min(vals)), float(np.max(vals))
        sup_is_inf = bool(np.any(np.isinf(vals)))
        while n < max_points and not sup_is_inf:
            n = 2 * n - 1
            vals = self._grid_values(n)
            lo_cur, hi_cur = float(np.min(vals)), float(np.max(vals))
            sup_is_inf = bool(np.any(np.isinf(vals)))
            if abs(lo_cur - lo_prev) <= tol and abs(hi_cur - hi_prev) <= tol:
                lo_prev, hi_prev = lo_cur, hi_cur
                break
            lo_prev, hi_prev = lo_cur, hi_cur
        if not sup_is_inf and self._endpoint_blowup(hi_prev):
            sup_is_inf = True
        p_minus = max(1.0, lo_prev)
        p_plus = INF if sup_is_inf else hi_prev
        self._bounds = (p_minus, p_plus)
        return self._bounds

    def classify(self) -> ExponentClass:
        pm, pp = self.essential_bounds()
        finite = np.isfinite(pp)
        is_constant = (finite and pp - pm <= 1e-12 * max(1.0, pm)) or \
            (not finite and self._all_infinite())
        return ExponentClass(
            is_constant=is_constant,
            in_D_plus=finite,
            in_C_plus=finite and pm > 1.0,
            attains_infinity=not finite,
        )

    def _all_infinite(self):
        lo, hi = self.domain
        xs = np.linspace(lo, hi, 257)[1:-1]
        try:
            return bool(np.all(np.isinf(self.eval(xs))))
        except DomainError:
            return False

    def constant_value(self):
        """The constant exponent value, or None if not constant."""
        cls = self.classify()
        if not cls.is_constant:
            return None
        if cls.attains_infinity:
            return INF
        return self.essential_bounds()[0]

    def __repr__(self):
        return f"VariableExponent({self.label!r} on [{self.domain[0]:g}, {self.domain[1]:g}])"


def essential_bounds(p: VariableExponent, initial=129, tol=1e-9, max_points=2 ** 20):
    return p.essential_bounds(initial=initial, tol=tol, max_points=max_points)


def classify(p: VariableExponent) -> ExponentClass:
    return p.classify()


# ---------------------------------------------------------------------------
# exponent arithmetic

def conjugate(p: VariableExponent) -> VariableExponent:
    """Pointwise conjugate q with 1/p(x) + 1/q(x) = 1.

    q = inf where p = 1 and q = 1 where p = inf, by convention.
    """
    def fn(x):
        pv = p.eval(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(pv == 1.0, INF, np.where(np.isinf(pv), 1.0, pv / (pv - 1.0)))
        return out

    return VariableExponent(fn, p.domain, label=f"conj({p.label})")


def harmonic_sum(p: VariableExponent, r: VariableExponent,
                 label=None) -> VariableExponent:
    """Exponent q with 1/q(x) = 1/p(x) + 1/r(x) (q = pr/(p+r), table-driven).

    Raises if q dips below 1 anywhere on the inspection grid, since that
    leaves the admissible exponent range.
    """
    def fn(x):
        pv = p.eval(x)
        rv = r.eval(x)
        with np.errstate(invalid="ignore"):
            out = np.where(np.isinf(rv), pv,
                           np.where(np.isinf(pv), rv, pv * rv / (pv + rv)))
        return out

    q = VariableExponent(fn, p.domain, label=label or f"({p.label}*{r.label})/({p.label}+{r.label})")
    xs = np.linspace(p.domain[0], p.domain[1], 1025)[1:-1]
    qv = np.where(np.isinf(r.eval(xs)), p.eval(xs),
                  np.where(np.isinf(p.eval(xs)), r.eval(xs),
                           p.eval(xs) * r.eval(xs) / (p.eval(xs) + r.eval(xs))))
    if np.any(qv < 1.0 - 1e-9):
        raise InvalidExponentError(
            "1/p + 1/r exceeds 1 somewhere: the combined exponent leaves [1, inf]")
    return q


def composition_exponent(p: VariableExponent, r: VariableExponent,
                         grid_n=2049) -> VariableExponent:
    """Exponent for composing a Lipschitz family over L^{r(x)} with L^{p(x)} data.

    q(x) = p(x) r(x) / (p(x) + r(x)) where r is finite and q(x) = p(x) where
    r is infinite.  The admissibility hypothesis r >= max(p, p/(p-1)) is
    checked on a grid; violations set `hypothesis_ok = False` and emit a
    warning instead of failing, so the formula can be explored outside its
    guaranteed range.  Where the hypothesis holds, q lies in [1, p].
    """
    lo, hi = p.domain
    xs = np.linspace(lo, hi, grid_n)[1:-1]
    pv = p.eval(xs)
    rv = r.eval(xs)
    with np.errstate(divide="ignore", invalid="ignore"):
        needed = np.maximum(pv, np.where(pv == 1.0, INF, pv / (pv - 1.0)))
        needed = np.where(np.isinf(pv), INF, needed)
    violated = rv < needed - 1e-9
    hypothesis_ok = not bool(np.any(violated))

    def fn(x):
        pvv = p.eval(x)
        rvv = r.eval(x)
        with np.errstate(invalid="ignore"):
            return np.where(np.isinf(rvv), pvv,
                            np.where(np.isinf(pvv), rvv, pvv * rvv / (pvv + rvv)))

    q = VariableExponent(fn, p.domain, label=f"comp({p.label},{r.label})")
    q.hypothesis_ok = hypothesis_ok
    if not hypothesis_ok:
        frac = float(np.mean(violated))
        warnings.warn(
            f"composition exponent hypothesis r >= max(p, p/(p-1)) fails on "
            f"{100 * frac:.1f}% of the grid; q may leave [1, p]",
            stacklevel=2)
    else:
        qv = fn(xs)
        finite_r = np.isfinite(rv)
        if np.any(qv[finite_r] < 1.0 - 1e-9) or np.any(qv[finite_r] > pv[finite_r] + 1e-9):
            raise InvalidExponentError("composition exponent left [1, p] despite hypothesis")
    return q
