"""Modular, Luxemburg norm and the product/embedding/domination inequalities.

The modular of f against an exponent p on an interval is

    rho(f) = integral of phi_{p(x)}(|f(x)|) dx,

with the three-case phi: t^p for finite p, and for p = inf the indicator
penalty that is 0 for t <= 1 and infinite for t > 1.  The Luxemburg norm is
the infimal lambda > 0 with rho(f/lambda) <= 1; since lambda -> rho(f/lambda)
is nonincreasing, it is computed by bracketing and bisection.

Divergent modulars are detected by the quadrature engine (positive-measure
infinities, partial-sum cap, endpoint exponent probes) and reported as +inf
with the evidence note attached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exponents import INF, VariableExponent
from .funcs import as_callable, function_breakpoints
from .quadrature import QuadResult, integrate

LAMBDA_CAP = 1e15
LAMBDA_FLOOR = 1e-300


class PreconditionError(ValueError):
    pass


def phi(p_at_x, t):
    """The three-case Young function phi_{p} applied elementwise.

    phi_p(t) = t^p for 1 <= p < inf; for p = inf it is 0 on [0, 1] and inf
    beyond.  Negative t is rejected.
    """
    p_arr = np.asarray(p_at_x, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("phi expects nonnegative arguments")
    p_arr, t_arr = np.broadcast_arrays(p_arr, t_arr)
    finite = np.isfinite(p_arr)
    out = np.empty(p_arr.shape, dtype=float)
    with np.errstate(over="ignore"):
        out[finite] = t_arr[finite] ** p_arr[finite]
    inf_mask = ~finite
    out[inf_mask] = np.where(t_arr[inf_mask] <= 1.0, 0.0, np.inf)
    if out.shape == ():
        return float(out)
    return out


@dataclass
class ModularResult:
    value: float
    quadrature_error_estimate: float
    diverged: bool
    note: str = ""


@dataclass
class NormResult:
    value: float
    bracket: tuple
    modular_at_value: float

    def __float__(self):
        return float(self.value)


def _magnitude(values):
    """|f(x)| for scalar samples, Euclidean norm along the last axis for vectors."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim >= 2:
        return np.sqrt((arr * arr).sum(axis=-1))
    return np.abs(arr)


def modular(f, p: VariableExponent, interval=None, *, scale=1.0,
            abs_tol=1e-11, rel_tol=1e-10, breakpoints=None,
            sum_cap=1e12) -> ModularResult:
    """Adaptive quadrature of x -> phi_{p(x)}(|f(x)| / scale) over the interval."""
    fn = as_callable(f)
    a, b = interval if interval is not None else p.domain
    if breakpoints is None:
        breakpoints = function_breakpoints(f, a, b)

    inv = 1.0 / scale

    def integrand(xs):
        pv = p.eval(xs)
        fv = _magnitude(fn(xs)) * inv
        return phi(pv, fv)

    res = integrate(integrand, a, b, abs_tol=abs_tol, rel_tol=rel_tol,
                    breakpoints=breakpoints, sum_cap=sum_cap)
    if res.diverged:
        return ModularResult(np.inf, np.inf, True, res.note)
    return ModularResult(max(res.real, 0.0), res.error, False, res.note)


def _inf_region_floor(fn, p, a, b, n=2049):
    """esssup of |f| over the set where p = inf, estimated on a grid.

    Below this lambda the modular is infinite, so bisection may start at it.
    """
    xs = np.linspace(a, b, n)[1:-1]
    try:
        pv = p.eval(xs)
    except Exception:
        return 0.0
    mask = np.isinf(pv)
    if not np.any(mask):
        return 0.0
    fv = _magnitude(fn(xs[mask]))
    return float(np.max(fv))


def luxemburg_norm(f, p: VariableExponent, interval=None, tol=1e-10, *,
                   quad_tol=None, breakpoints=None) -> NormResult:
    """inf{lambda > 0 : rho(f/lambda) <= 1} by bracketing and bisection.

    Returns +inf when no lambda below 1e15 brings the modular under 1, and 0
    for functions vanishing a.e.  The certified value is the upper bracket
    end, so rho(f/value) <= 1 always holds within quadrature error.
    """
    fn = as_callable(f)
    a, b = interval if interval is not None else p.domain
    if breakpoints is None:
        breakpoints = function_breakpoints(f, a, b)
    qt = quad_tol if quad_tol is not None else max(tol * 1e-2, 1e-12)

    def rho(lam):
        return modular(fn, p, (a, b), scale=lam, abs_tol=qt, rel_tol=qt,
                       breakpoints=breakpoints).value

    floor = _inf_region_floor(fn, p, a, b)

    probe = np.linspace(a, b, 257)[1:-1]
    if float(np.max(_magnitude(fn(probe)))) == 0.0:
        r0 = rho(LAMBDA_FLOOR)
        if r0 <= 1.0:
            return NormResult(0.0, (0.0, LAMBDA_FLOOR), r0)

    lam_hi = max(1.0, floor * (1.0 + 1e-12), LAMBDA_FLOOR)
    r = rho(lam_hi)
    while r > 1.0:
        lam_hi *= 2.0
        if lam_hi > LAMBDA_CAP:
            return NormResult(np.inf, (lam_hi / 2.0, np.inf), r)
        r = rho(lam_hi)
    # shrink from above to find a lower end with rho > 1
    lam_lo = lam_hi / 2.0
    while lam_lo > max(floor, LAMBDA_FLOOR):
        r_lo = rho(lam_lo)
        if r_lo > 1.0:
            break
        lam_hi = lam_lo
        lam_lo /= 2.0
    else:
        if floor > 0.0:
            lam_lo = floor
        else:
            # modular stays <= 1 for arbitrarily small lambda: f = 0 a.e.
            return NormResult(0.0, (0.0, lam_hi), rho(lam_hi))

    while lam_hi - lam_lo > tol * max(1.0, lam_hi):
        mid = 0.5 * (lam_lo + lam_hi)
        if rho(mid) <= 1.0:
            lam_hi = mid
        else:
            lam_lo = mid
    return NormResult(lam_hi, (lam_lo, lam_hi), rho(lam_hi))


def constant_norm(f, p_value: float, interval, *, abs_tol=1e-12, rel_tol=1e-11,
                  breakpoints=None) -> float:
    """Classical L^p norm (integral of |f|^p)^(1/p) for a constant exponent.

    For p = inf this is the grid essential supremum.  This is the direct
    formula, independent of the bisection path, and doubles as its oracle.
    """
    fn = as_callable(f)
    a, b = interval
    if np.isinf(p_value):
        xs = np.linspace(a, b, 4097)[1:-1]
        return float(np.max(_magnitude(fn(xs))))
    if breakpoints is None:
        breakpoints = function_breakpoints(f, a, b)

    def integrand(xs):
        return _magnitude(fn(xs)) ** p_value

    res = integrate(integrand, a, b, abs_tol=abs_tol, rel_tol=rel_tol,
                    breakpoints=breakpoints)
    if res.diverged:
        return np.inf
    return max(res.real, 0.0) ** (1.0 / p_value)


# ---------------------------------------------------------------------------
# inequality checks

@dataclass
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    passed: bool
    vacuous: bool
    slack: float
    details: dict

    def __bool__(self):
        return self.passed


def holder_check(u, v, p: VariableExponent, r: VariableExponent,
                 interval=None, tol=1e-9) -> InequalityReport:
    """Check the product inequality |uv|_q <= 2 |u|_p |v|_r with 1/q = 1/p + 1/r."""
    from .exponents import harmonic_sum

    a, b = interval if interval is not None else p.domain
    q = harmonic_sum(p, r)
    uf, vf = as_callable(u), as_callable(v)

    def uv(xs):
        return np.asarray(uf(xs)) * np.asarray(vf(xs))

    bp = np.unique(np.concatenate([function_breakpoints(u, a, b),
                                   function_breakpoints(v, a, b)]))
    n_uv = luxemburg_norm(uv, q, (a, b), breakpoints=bp).value
    n_u = luxemburg_norm(uf, p, (a, b), breakpoints=function_breakpoints(u, a, b)).value
    n_v = luxemburg_norm(vf, r, (a, b), breakpoints=function_breakpoints(v, a, b)).value
    vacuous = not (np.isfinite(n_u) and np.isfinite(n_v) and np.isfinite(n_uv))
    rhs = 2.0 * n_u * n_v
    passed = vacuous or n_uv <= rhs + tol
    return InequalityReport("holder", n_uv, rhs, passed, vacuous, rhs - n_uv,
                            {"norm_u": n_u, "norm_v": n_v, "norm_uv": n_uv})


def embedding_check(f, p: VariableExponent, q: VariableExponent,
                    interval=(0.0, 1.0), tol=1e-9) -> InequalityReport:
    """Check |f|_q <= 2 |f|_p on an interval of measure <= 1, for q <= p a.e."""
    a, b = interval
    if b - a > 1.0 + 1e-12:
        raise PreconditionError("embedding constant 2 is asserted for measure <= 1 only")
    xs = np.linspace(a, b, 2049)[1:-1]
    if np.any(q.eval(xs) > p.eval(xs) + 1e-9):
        raise PreconditionError("embedding needs q <= p a.e.")
    bp = function_breakpoints(f, a, b)
    n_q = luxemburg_norm(f, q, (a, b), breakpoints=bp).value
    n_p = luxemburg_norm(f, p, (a, b), breakpoints=bp).value
    vacuous = not np.isfinite(n_p)
    rhs = 2.0 * n_p
    passed = vacuous or n_q <= rhs + tol
    return InequalityReport("embedding", n_q, rhs, passed, vacuous, rhs - n_q,
                            {"norm_q": n_q, "norm_p": n_p})


def domination_check(f, g, p: VariableExponent, interval=None,
                     tol=1e-9) -> InequalityReport:
    """Check |g|_p <= |f|_p given pointwise domination 0 <= |g| <= |f| a.e."""
    a, b = interval if interval is not None else p.domain
    ff, gf = as_callable(f), as_callable(g)
    xs = np.linspace(a, b, 2049)[1:-1]
    fv, gv = _magnitude(ff(xs)), _magnitude(gf(xs))
    if np.any(gv > fv + 1e-9 * np.maximum(1.0, fv)):
        raise PreconditionError("domination |g| <= |f| fails on the grid")
    n_f = luxemburg_norm(ff, p, (a, b), breakpoints=function_breakpoints(f, a, b)).value
    n_g = luxemburg_norm(gf, p, (a, b), breakpoints=function_breakpoints(g, a, b)).value
    vacuous = not np.isfinite(n_f)
    passed = vacuous or n_g <= n_f + tol
    return InequalityReport("domination", n_g, n_f, passed, vacuous, n_f - n_g,
                            {"norm_f": n_f, "norm_g": n_g})
