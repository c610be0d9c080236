"""Stepanov norms, epsilon-period scanning and almost-periodicity diagnostics.

The central object is the windowed lift: t maps to the restriction of f to
[t, t+1], measured in the variable-exponent Luxemburg norm on [0, 1].  A
translation tau is an epsilon-period of the lift when the windowed distance
between f(. + tau) and f stays below epsilon for every scanned t.  Almost
periodicity is not decidable from finitely many samples, so every verdict
carries its grid resolution and a refinement-stability bit; disagreement
between resolutions yields "inconclusive" rather than a guess.

Constant exponents take the classical integral formula directly; genuinely
variable exponents go through the bisection-based Luxemburg norm.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exponents import INF, VariableExponent
from .funcs import as_callable, function_breakpoints, _scan_roots
from .modular import (PreconditionError, constant_norm, luxemburg_norm,
                      _magnitude)
from .quadrature import integrate

AP_CONSISTENT = "AP-consistent"
AP_VIOLATED = "AP-violated"
INCONCLUSIVE = "inconclusive"


@dataclass
class StepanovConfig:
    """Scan grids for the sup over t and the tau candidates."""
    exponent: VariableExponent = None
    window_length: float = 1.0
    scan_domain: tuple = (0.0, 100.0)
    t_step: float = 0.05
    tau_range: tuple = (0.0, 50.0)
    tau_step: float = 0.01
    gap_bound: float = None          # violation gap; default = half the tau range
    refine_check: bool = True

    def t_grid(self, step=None):
        a, b = self.scan_domain
        step = step or self.t_step
        return np.arange(a, b + 0.5 * step, step)

    def tau_grid(self, step=None):
        a, b = self.tau_range
        step = step or self.tau_step
        g = np.arange(a, b + 0.5 * step, step)
        return g[g > 0]


class _Window:
    """x -> |f(t + x) - f(t + tau + x)| style windows with shifted breakpoints."""

    def __init__(self, f, t, tau=None):
        self.f = as_callable(f)
        self.t = t
        self.tau = tau
        self.label = getattr(f, "label", "f")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.tau is None:
            return np.asarray(self.f(self.t + x), dtype=float)
        a = np.asarray(self.f(self.t + self.tau + x), dtype=float)
        b = np.asarray(self.f(self.t + x), dtype=float)
        return a - b

    def breakpoints(self, lo, hi):
        pts = [function_breakpoints(self.f, self.t + lo, self.t + hi) - self.t]
        if self.tau is not None:
            s = self.t + self.tau
            pts.append(function_breakpoints(self.f, s + lo, s + hi) - s)
        pts = np.concatenate(pts)
        return np.unique(pts[(pts > lo) & (pts < hi)])


def window_norm(f, p: VariableExponent, t: float, window_length: float = 1.0,
                tol: float = 1e-10) -> float:
    """Stepanov window norm of f over [t, t + l] with exponent p.

    For constant finite exponents this is ((1/l) int |f|^p)^(1/p); the
    variable-exponent case fixes l = 1 and uses the Luxemburg norm.
    """
    w = _Window(f, t)
    c = p.constant_value()
    if c is not None and np.isfinite(c):
        raw = constant_norm(w, c, (0.0, window_length),
                            breakpoints=w.breakpoints(0.0, window_length))
        return raw * window_length ** (-1.0 / c)
    if abs(window_length - 1.0) > 1e-12:
        raise PreconditionError(
            "variable-exponent windows are defined for unit length only")
    if c is not None:      # constant infinity
        return constant_norm(w, INF, (0.0, 1.0))
    return luxemburg_norm(w, p, (0.0, 1.0), tol=tol,
                          breakpoints=w.breakpoints(0.0, 1.0)).value


def bohr_lift_distance(f, t: float, tau: float, p: VariableExponent,
                       tol: float = 1e-10) -> float:
    """Luxemburg distance on [0,1] between the windows of f at t+tau and t."""
    w = _Window(f, t, tau)
    c = p.constant_value()
    bp = w.breakpoints(0.0, 1.0)
    if c is not None and np.isfinite(c):
        return constant_norm(w, c, (0.0, 1.0), breakpoints=bp)
    if c is not None:
        return constant_norm(w, INF, (0.0, 1.0))
    return luxemburg_norm(w, p, (0.0, 1.0), tol=tol, breakpoints=bp).value


@dataclass
class StepanovNormResult:
    value: float
    arg_t: float
    t_step: float

    def __float__(self):
        return self.value


def stepanov_norm(f, p: VariableExponent, config: StepanovConfig = None) -> StepanovNormResult:
    """sup over scanned t of the window norm; reports the arg-max t."""
    config = config or StepanovConfig()
    best_v, best_t = -np.inf, None
    for t in config.t_grid():
        v = window_norm(f, p, float(t), config.window_length)
        if v > best_v:
            best_v, best_t = v, float(t)
    return StepanovNormResult(best_v, best_t, config.t_step)


@dataclass
class APDiagnosticReport:
    epsilon: float
    accepted_periods: np.ndarray
    max_gap: float
    relative_density_l: float            # nan means "not found"
    verdict: str
    witnesses: list
    t_step: float
    tau_step: float
    refinement_stable: bool = True

    @property
    def density_found(self):
        return np.isfinite(self.relative_density_l)


def _sup_lift_distance(f, p, tau, t_grid, eps=None, tol=1e-9):
    """sup_t of the lifted distance; early exit once eps is exceeded."""
    worst_d, worst_t = -np.inf, None
    for t in t_grid:
        d = bohr_lift_distance(f, float(t), float(tau), p, tol=tol)
        if d > worst_d:
            worst_d, worst_t = d, float(t)
        if eps is not None and d > eps:
            return worst_d, worst_t, False
    return worst_d, worst_t, True


def _gap_statistics(accepted, tau_range):
    if len(accepted) == 0:
        return np.inf
    pts = np.concatenate([[tau_range[0]], np.sort(accepted), [tau_range[1]]])
    return float(np.max(np.diff(pts)))


def _scan_once(f, p, eps, config, t_step, tau_step):
    t_grid = config.t_grid(t_step)
    accepted = []
    witnesses = []
    for tau in config.tau_grid(tau_step):
        d, t_worst, ok = _sup_lift_distance(f, p, tau, t_grid, eps=eps)
        if ok and d <= eps:
            accepted.append(tau)
        elif len(witnesses) < 64:
            witnesses.append((float(t_worst), float(tau), float(d)))
    return np.asarray(accepted), witnesses


def epsilon_period_scan(f, p: VariableExponent, eps: float,
                        config: StepanovConfig = None) -> APDiagnosticReport:
    """Scan tau candidates for epsilon-periods of the Bohr lift of f.

    Verdicts: AP-consistent when accepted periods recur with gaps below the
    violation bound, AP-violated when a gap exceeds it, and inconclusive when
    halving the tau step flips the verdict (grids too coarse to trust).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    config = config or StepanovConfig()
    gap_bound = config.gap_bound
    if gap_bound is None:
        gap_bound = 0.5 * (config.tau_range[1] - config.tau_range[0])

    accepted, witnesses = _scan_once(f, p, eps, config, config.t_step, config.tau_step)
    max_gap = _gap_statistics(accepted, config.tau_range)
    density_l = 1.5 * max_gap if len(accepted) else np.nan

    def verdict_of(acc):
        gap = _gap_statistics(acc, config.tau_range)
        return AP_CONSISTENT if gap <= gap_bound else AP_VIOLATED

    verdict = verdict_of(accepted)
    stable = True
    if config.refine_check:
        acc2, _ = _scan_once(f, p, eps, config, config.t_step, 0.5 * config.tau_step)
        stable = verdict_of(acc2) == verdict
        if not stable:
            verdict = INCONCLUSIVE
    if len(config.tau_grid()) < 3 or len(config.t_grid()) < 3:
        verdict = INCONCLUSIVE

    return APDiagnosticReport(
        epsilon=eps, accepted_periods=accepted, max_gap=max_gap,
        relative_density_l=density_l, verdict=verdict, witnesses=witnesses,
        t_step=config.t_step, tau_step=config.tau_step, refinement_stable=stable)


def sup_norm_period_scan(f, eps: float, config: StepanovConfig = None,
                         oversample: int = 8) -> np.ndarray:
    """Accepted eps-periods of f itself in the plain sup norm (Bohr test).

    Cheap vectorized pre-scan: the t grid is oversampled relative to the
    lift scan since no integral smooths the comparison.
    """
    config = config or StepanovConfig()
    fn = as_callable(f)
    ts = config.t_grid(config.t_step / oversample)
    fv = np.asarray(fn(ts), dtype=float)
    accepted = []
    for tau in config.tau_grid():
        d = float(np.max(np.abs(np.asarray(fn(ts + tau), dtype=float) - fv)))
        if d <= eps:
            accepted.append(tau)
    return np.asarray(accepted)


# ---------------------------------------------------------------------------
# asymptotic split  f = g + q

@dataclass
class SplitCheckReport:
    ap_report: APDiagnosticReport
    tail_grid: np.ndarray
    tail_norms: np.ndarray
    tail_tolerances: np.ndarray
    decays: bool
    passed: bool


def aap_split_check(g, q, p: VariableExponent, eps: float = 0.1,
                    config: StepanovConfig = None, tail_grid=None,
                    tail_tolerances=(1e-1, 1e-2, 1e-3)) -> SplitCheckReport:
    """Check an almost-periodic + vanishing split of a half-line function.

    Runs the epsilon-period scan on g and verifies that the windowed norm of
    q decays through each tolerance along the tail grid.
    """
    config = config or StepanovConfig()
    report = epsilon_period_scan(g, p, eps, config)
    if tail_grid is None:
        tail_grid = np.array([0.0, 2.0, 5.0, 10.0, 20.0, 40.0])
    tail_grid = np.asarray(tail_grid, dtype=float)
    tail_norms = np.array([window_norm(q, p, float(t)) for t in tail_grid])
    tols = np.asarray(tail_tolerances, dtype=float)
    decays = all(np.any(tail_norms <= tol) and tail_norms[-1] <= tol for tol in tols)
    passed = decays and report.verdict == AP_CONSISTENT
    return SplitCheckReport(report, tail_grid, tail_norms, tols, decays, passed)


# ---------------------------------------------------------------------------
# the sign(sin x + sin sqrt2 x) divergence profile

_SQRT2 = math.sqrt(2.0)


def _inner_osc(y):
    return np.sin(y) + np.sin(_SQRT2 * y)


@dataclass
class DivergenceProfile:
    lam: float
    t: float
    tau: float
    deltas: np.ndarray
    truncated_modulars: np.ndarray
    decade_ratios: np.ndarray
    theoretical_ratio: float


def sign_divergence_profile(lam: float, t: float, tau: float,
                            deltas=(1e-3, 1e-4, 1e-5)) -> DivergenceProfile:
    """Truncated modulars showing the exponent blow-up of the sign composite.

    Integrates (|sign h(x+t+tau) - sign h(x+t)| / lam)^(1 - ln x) over
    [delta, 1] for h(y) = sin y + sin(sqrt 2 y).  Requires lam in (0, 2/e)
    and h(t+tau) h(t) < 0, which pins a sign difference of 2 near x = 0 and
    makes the truncations grow like delta^(1 - ln(2/lam)).
    """
    if not (0.0 < lam < 2.0 / math.e):
        raise PreconditionError(f"lam must lie in (0, 2/e = {2.0 / math.e:.6f})")
    prod = float(_inner_osc(t + tau)) * float(_inner_osc(t))
    if not prod < 0.0:
        raise PreconditionError(
            f"need opposite signs at the window base: h(t+tau) h(t) = {prod:.3g} >= 0")

    deltas = np.asarray(sorted(deltas, reverse=True), dtype=float)
    if np.any(deltas <= 0) or np.any(deltas >= 1):
        raise ValueError("deltas must lie in (0, 1)")

    def diff_sign(x):
        return np.abs(np.sign(_inner_osc(x + t + tau)) - np.sign(_inner_osc(x + t)))

    def integrand(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore"):
            return (diff_sign(x) / lam) ** (1.0 - np.log(x))

    values = []
    roots_all = np.unique(np.concatenate([
        _scan_roots(lambda x: _inner_osc(x + t), 0.0, 1.0),
        _scan_roots(lambda x: _inner_osc(x + t + tau), 0.0, 1.0),
    ]))
    for d in deltas:
        bp = roots_all[(roots_all > d) & (roots_all < 1.0)]
        res = integrate(integrand, float(d), 1.0, abs_tol=1e-12, rel_tol=1e-11,
                        breakpoints=bp)
        values.append(res.real)
    values = np.asarray(values)
    steps = -np.diff(np.log10(deltas))
    ratios = (values[1:] / values[:-1]) ** (1.0 / steps)
    return DivergenceProfile(lam, t, tau, deltas, values, ratios,
                             theoretical_ratio=10.0 ** (math.log(2.0 / lam) - 1.0))


# ---------------------------------------------------------------------------
# bounded upgrade: window L^1 control implies window L^p control

@dataclass
class UpgradeCheckReport:
    p: float
    sup_bound: float
    max_violation: float
    n_pairs: int
    passed: bool
    worst_pair: tuple


def bounded_upgrade_check(f, p_target: float, eps: float = None,
                          config: StepanovConfig = None,
                          tol: float = 1e-8) -> UpgradeCheckReport:
    """Check d_p(t,tau) <= (2 sup|f|)^((p-1)/p) d_1(t,tau)^(1/p) on scan grids.

    d_p is the window L^p distance between f(. + tau) and f.  Holds for any
    bounded f; the sup norm is estimated on a grid.
    """
    if p_target <= 1.0:
        raise ValueError("p_target must exceed 1")
    config = config or StepanovConfig()
    fn = as_callable(f)
    ts_dense = config.t_grid(config.t_step / 4)
    sup_f = float(np.max(_magnitude(fn(ts_dense))))
    factor = (2.0 * sup_f) ** ((p_target - 1.0) / p_target)

    max_violation = -np.inf
    worst = None
    n_pairs = 0
    taus = config.tau_grid()
    ts = config.t_grid()
    for tau in taus:
        for t in ts:
            w = _Window(fn, float(t), float(tau))
            bp = w.breakpoints(0.0, 1.0)
            d_p = constant_norm(w, p_target, (0.0, 1.0), breakpoints=bp)
            d_1 = constant_norm(w, 1.0, (0.0, 1.0), breakpoints=bp)
            violation = d_p - factor * d_1 ** (1.0 / p_target)
            n_pairs += 1
            if violation > max_violation:
                max_violation = violation
                worst = (float(t), float(tau), d_p, d_1)
    return UpgradeCheckReport(p_target, sup_f, float(max_violation), n_pairs,
                              max_violation <= tol, worst)


# ---------------------------------------------------------------------------
# two-parameter composition

@dataclass
class CompositionReport:
    lipschitz_ok: bool
    input_report: APDiagnosticReport
    composed_report: APDiagnosticReport
    q_exponent: VariableExponent
    passed: bool


def composition_ap_check(f2, lipschitz_bound, u, p: VariableExponent,
                         r: VariableExponent, eps: float,
                         config: StepanovConfig = None,
                         n_lipschitz_samples: int = 200,
                         seed: int = 0) -> CompositionReport:
    """Scan t -> f2(t, u(t)) at the composition exponent of (p, r).

    f2 is a callable of (t, x); lipschitz_bound a function of t dominating
    the x-Lipschitz constant.  The bound is spot-checked on random (t, x, y)
    triples before scanning.
    """
    from .exponents import composition_exponent

    config = config or StepanovConfig()
    lf = as_callable(lipschitz_bound)
    uf = as_callable(u)
    rng = np.random.default_rng(seed)
    a, b = config.scan_domain
    ts = rng.uniform(a, b + 1.0, n_lipschitz_samples)
    xs = rng.uniform(-2.0, 2.0, n_lipschitz_samples)
    ys = rng.uniform(-2.0, 2.0, n_lipschitz_samples)
    lhs = np.abs(np.asarray(f2(ts, xs)) - np.asarray(f2(ts, ys)))
    rhs = np.asarray(lf(ts)) * np.abs(xs - ys)
    lipschitz_ok = bool(np.all(lhs <= rhs + 1e-9))
    if not lipschitz_ok:
        raise PreconditionError("Lipschitz bound fails on sampled triples")

    input_report = epsilon_period_scan(uf, p, eps, config)

    q = composition_exponent(p, r)

    def composed(t):
        t = np.asarray(t, dtype=float)
        return np.asarray(f2(t, np.asarray(uf(t), dtype=float)), dtype=float)

    composed_report = epsilon_period_scan(composed, q, eps, config)
    passed = composed_report.verdict == AP_CONSISTENT
    return CompositionReport(lipschitz_ok, input_report, composed_report, q, passed)


# ---------------------------------------------------------------------------
# report serialization

def report_to_csv(report: APDiagnosticReport, path, all_taus=None, distances=None):
    """One row per accepted tau (or per candidate when distances are given)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if distances is not None and all_taus is not None:
            w.writerow(["tau", "sup_distance", "accepted"])
            acc = set(np.round(report.accepted_periods, 12))
            for tau, d in zip(all_taus, distances):
                w.writerow([f"{tau:.12g}", f"{d:.12g}",
                            int(round(tau, 12) in acc)])
        else:
            w.writerow(["accepted_tau"])
            for tau in report.accepted_periods:
                w.writerow([f"{tau:.12g}"])
