"""Batch command line: norms, scans, special-function tables, operators,
convolutions and fractional solves, each emitting a CSV plus a text summary.

Options may come from a config file (INI sections named after subcommands,
`key = value` lines) with command-line flags taking precedence.  All numbers
are written with 12 significant digits and no locale handling, so identical
configurations produce byte-identical outputs.

Exit codes: 0 success, 1 a verification-style check failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys

import numpy as np

from . import convolution, exponents, modular, operators, specfun, stepanov
from .funcs import ScalarFunction, load_samples

FMT = "{:.12g}"


def _fmt(x):
    if isinstance(x, complex):
        return FMT.format(x.real) + ("+" if x.imag >= 0 else "") + FMT.format(x.imag) + "j"
    return FMT.format(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _write_summary(path, lines):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class UsageError(ValueError):
    pass


def _parse_function(spec, domain=(-np.inf, np.inf)):
    """A function option: expression text, catalog:<name>, or csv:<path>."""
    if spec is None:
        raise UsageError("missing function specification")
    if spec.startswith("catalog:"):
        return ScalarFunction.from_catalog(spec.split(":", 1)[1])
    if spec.startswith("csv:"):
        return load_samples(spec.split(":", 1)[1])
    return ScalarFunction.from_expression(spec, domain)


def _parse_exponent(spec, domain=(0.0, 1.0)):
    if spec is None:
        raise UsageError("missing exponent specification")
    if spec in ("inf", "infinity"):
        return exponents.VariableExponent.infinite(domain)
    try:
        return exponents.VariableExponent.constant(float(spec), domain)
    except ValueError:
        pass
    return exponents.VariableExponent.from_expression(spec, domain)


def _parse_floats(text):
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _parse_interval(text, default):
    if text is None:
        return default
    vals = _parse_floats(text)
    if len(vals) != 2 or vals[1] <= vals[0]:
        raise UsageError(f"bad interval {text!r}")
    return (vals[0], vals[1])


def _parse_matrix(text):
    """Row-major matrix: rows separated by ';', entries by ','."""
    rows = [[float(v) for v in row.split(",") if v.strip()]
            for row in text.split(";") if row.strip()]
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise UsageError(f"matrix is not square: {text!r}")
    return np.asarray(rows)


def _load_matrix_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.asarray(rows)


def _operator_from_args(args):
    if getattr(args, "matrix_csv", None):
        a = _load_matrix_csv(args.matrix_csv)
    elif getattr(args, "matrix", None):
        a = _parse_matrix(args.matrix)
    elif getattr(args, "diag", None):
        a = np.diag(_parse_floats(args.diag))
    else:
        raise UsageError("operator needs --matrix, --matrix-csv or --diag")
    b = None
    if getattr(args, "pencil_b", None):
        b = _parse_matrix(args.pencil_b)
    if args.c is None or args.big_m is None:
        raise UsageError("operator needs the bound constants --c and --M")
    if b is None:
        return operators.OperatorFamily.from_matrix(a, c=args.c, beta=args.beta,
                                                    M=args.big_m)
    return operators.OperatorFamily.from_pencil(a, b, c=args.c, beta=args.beta,
                                                M=args.big_m)


def _scan_config(args, exponent):
    return stepanov.StepanovConfig(
        exponent=exponent,
        scan_domain=_parse_interval(getattr(args, "t_range", None), (0.0, 20.0)),
        t_step=getattr(args, "t_step", None) or 0.25,
        tau_range=_parse_interval(getattr(args, "tau_range", None), (0.0, 20.0)),
        tau_step=getattr(args, "tau_step", None) or 0.05,
        refine_check=not getattr(args, "no_refine", False),
    )


# ---------------------------------------------------------------------------
# subcommands

def _cmd_norm(args):
    domain = _parse_interval(args.domain, (0.0, 1.0))
    f = _parse_function(args.f, domain)
    p = _parse_exponent(args.p, domain)
    rows = []
    lines = []
    if args.stepanov:
        cfg = _scan_config(args, p)
        res = stepanov.stepanov_norm(f, p, cfg)
        rows.append(["stepanov_norm", res.value, res.arg_t])
        lines.append(f"Stepanov norm {_fmt(res.value)} attained near t = {_fmt(res.arg_t)}")
        header = ["quantity", "value", "arg_t"]
    else:
        res = modular.luxemburg_norm(f, p, domain)
        mod = modular.modular(f, p, domain)
        rows.append(["luxemburg_norm", res.value, res.modular_at_value])
        rows.append(["modular", mod.value, mod.quadrature_error_estimate])
        lines.append(f"Luxemburg norm on [{domain[0]:g}, {domain[1]:g}]: {_fmt(res.value)}")
        lines.append(f"modular: {_fmt(mod.value)}"
                     + (" (diverged)" if mod.diverged else ""))
        header = ["quantity", "value", "extra"]
    _write_csv(args.out + ".csv", header, rows)
    _write_summary(args.out + ".summary.txt", lines)
    return 0


def _cmd_ap_scan(args):
    domain = (0.0, 1.0)
    f = _parse_function(args.f)
    p = _parse_exponent(args.p, domain)
    cfg = _scan_config(args, p)
    report = stepanov.epsilon_period_scan(f, p, args.eps, cfg)
    taus = cfg.tau_grid()
    acc = set(np.round(report.accepted_periods, 12))
    rows = [[tau, int(round(tau, 12) in acc)] for tau in taus]
    _write_csv(args.out + ".csv", ["tau", "accepted"], rows)
    lines = [
        f"epsilon = {_fmt(args.eps)}",
        f"accepted periods: {len(report.accepted_periods)}",
        f"max gap: {_fmt(report.max_gap)}",
        "relative density length: "
        + (_fmt(report.relative_density_l) if report.density_found else "not found"),
        f"verdict: {report.verdict}",
        f"refinement stable: {report.refinement_stable}",
    ]
    _write_summary(args.out + ".summary.txt", lines)
    return 0 if report.verdict != stepanov.AP_VIOLATED else 1


def _cmd_counterexample(args):
    deltas = _parse_floats(args.deltas)
    prof = stepanov.sign_divergence_profile(args.lam, args.t, args.tau, deltas)
    rows = [[d, v] for d, v in zip(prof.deltas, prof.truncated_modulars)]
    _write_csv(args.out + ".csv", ["delta", "truncated_modular"], rows)
    growing = bool(np.all(prof.decade_ratios >= 2.0))
    lines = [
        f"lambda = {_fmt(prof.lam)}, t = {_fmt(prof.t)}, tau = {_fmt(prof.tau)}",
        "per-decade growth ratios: " + ", ".join(_fmt(r) for r in prof.decade_ratios),
        f"theoretical ratio: {_fmt(prof.theoretical_ratio)}",
        f"blow-up confirmed (ratios >= 2): {growing}",
    ]
    _write_summary(args.out + ".summary.txt", lines)
    return 0 if growing else 1


def _cmd_specfun(args):
    rows = []
    if args.table == "mittag-leffler":
        zs = np.linspace(*_parse_interval(args.z_range, (-5.0, 1.0)),
                         args.n_points)
        for z in zs:
            rows.append([z, specfun.mittag_leffler(args.alpha, args.beta_ml, z).real])
        header = ["z", f"E_{args.alpha:g}_{args.beta_ml:g}"]
    elif args.table == "wright":
        ss = np.linspace(*_parse_interval(args.s_range, (0.0, 10.0)), args.n_points)
        vals = specfun.wright_phi(args.gamma, ss)
        rows = [[s, v] for s, v in zip(ss, vals)]
        header = ["s", f"Phi_{args.gamma:g}"]
    else:
        raise UsageError(f"unknown table {args.table!r}")
    _write_csv(args.out + ".csv", header, rows)
    _write_summary(args.out + ".summary.txt",
                   [f"{args.table} table with {len(rows)} points"])
    return 0


def _cmd_operator(args):
    op = _operator_from_args(args)
    lines = []
    rows = []
    code = 0
    report = operators.verify_resolvent_bound(op)
    lines.append(f"resolvent bound: {'PASS' if report.passed else 'FAIL'} "
                 f"(worst ratio {_fmt(report.worst_ratio)} over "
                 f"{report.n_samples} samples)")
    if not report.passed:
        code = 1
    rows.append(["bound_worst_ratio", report.worst_ratio])
    if report.passed:
        for t in _parse_floats(args.semigroup_times or "0.5,1,2"):
            sample = operators.semigroup_contour(op, t)
            nrm = operators.spectral_norm(sample.matrix)
            rows.append([f"semigroup_norm_t_{_fmt(t)}", nrm])
            lines.append(f"||T({_fmt(t)})|| = {_fmt(nrm)} "
                         f"(error estimate {_fmt(sample.error_estimate)})")
        if args.gamma is not None:
            for t in _parse_floats(args.subordinate_times or "0.5,1,2"):
                s_val = operators.s_family(op, args.gamma, t)
                p_val = operators.p_family(op, args.gamma, t)
                rows.append([f"S_gamma_norm_t_{_fmt(t)}", operators.spectral_norm(s_val)])
                rows.append([f"P_gamma_norm_t_{_fmt(t)}", operators.spectral_norm(p_val)])
                lines.append(f"||S_{args.gamma:g}({_fmt(t)})|| = "
                             f"{_fmt(operators.spectral_norm(s_val))}")
    _write_csv(args.out + ".csv", ["quantity", "value"], rows)
    _write_summary(args.out + ".summary.txt", lines)
    return code


def _kernel_from_args(args):
    if args.kernel == "exp":
        return convolution.Kernel.from_scalar(lambda t: np.exp(-t), label="exp")
    if args.kernel == "subordinated":
        op = _operator_from_args(args)
        if args.gamma is None:
            raise UsageError("subordinated kernel needs --gamma")
        return convolution.Kernel.subordinated(op, args.gamma)
    if args.kernel == "semigroup":
        return convolution.Kernel.semigroup(_operator_from_args(args))
    raise UsageError(f"unknown kernel {args.kernel!r}")


def _cmd_convolve(args):
    kern = _kernel_from_args(args)
    g = _parse_function(args.g)
    ts = _parse_floats(args.times or "0,1,2,5")
    rows = []
    if args.finite:
        for t in ts:
            v = convolution.finite_convolution(kern, g, t)
            rows.append([t] + list(np.atleast_1d(v)))
    else:
        ks = convolution.kernel_sum(
            kern, _parse_exponent(args.q or "2"), K=args.windows)
        if not ks.summable:
            _write_summary(args.out + ".summary.txt",
                           ["kernel windows are not summable: " + ks.note])
            _write_csv(args.out + ".csv", ["k", "window_norm"],
                       [[i, v] for i, v in enumerate(ks.window_norms)])
            return 1
        for t in ts:
            v, err = convolution.infinite_convolution(kern, g, t, K=args.windows, ks=ks)
            rows.append([t] + list(np.atleast_1d(v)) + [err])
    dim = kern.dim
    header = ["t"] + [f"G{i}" for i in range(dim)] + ([] if args.finite else ["error_estimate"])
    _write_csv(args.out + ".csv", header, rows)
    lines = [f"{'finite' if args.finite else 'infinite'} convolution at "
             f"{len(ts)} time points, kernel {kern.label}"]
    if not args.finite:
        lines.append(f"kernel window-norm sum M = {_fmt(ks.total)} ({ks.tail_model} tail)")
    _write_summary(args.out + ".summary.txt", lines)
    return 0


def _cmd_solve_dfp(args):
    op = _operator_from_args(args)
    x0 = _parse_floats(args.x0)
    f = _parse_function(args.f) if args.f else None
    t_range = _parse_interval(args.t_range2 or args.t_range, (0.0, 5.0))
    step = args.t_step or 0.02
    t_grid = np.arange(t_range[0], t_range[1] + 0.5 * step, step)
    traj = convolution.solve_fractional_ivp(op, args.gamma, x0, f=f, t_grid=t_grid)
    traj.to_csv(args.out + ".csv")
    lines = [f"mild solution on [{t_range[0]:g}, {t_range[1]:g}], "
             f"gamma = {args.gamma:g}, {len(t_grid)} points"]
    code = 0
    if args.residual and not op.is_pencil and args.gamma <= 1.0:
        pts = t_grid[(t_grid >= t_grid[0] + 0.1) & (t_grid <= t_grid[-1] - 0.1)]
        pts = pts[:: max(1, len(pts) // 8)]
        res = convolution.caputo_residual(traj, op, args.gamma, f=f, eval_points=pts)
        lines.append(f"max Caputo residual on {len(pts)} points: {_fmt(res.max())}")
        if res.max() > (args.residual_tol or 1e-2):
            lines.append("residual check FAILED")
            code = 1
    _write_summary(args.out + ".summary.txt", lines)
    return code


# ---------------------------------------------------------------------------
# parser plumbing

def _add_operator_flags(sp):
    sp.add_argument("--matrix", help="row-major matrix, rows ';'-separated")
    sp.add_argument("--matrix-csv", dest="matrix_csv", help="matrix from a CSV file")
    sp.add_argument("--diag", help="diagonal matrix entries, comma-separated")
    sp.add_argument("--pencil-b", dest="pencil_b",
                    help="second pencil matrix B (makes the operator A o B^-1)")
    sp.add_argument("--c", type=float, help="tilt constant of the resolvent region")
    sp.add_argument("--beta", type=float, default=1.0, help="resolvent decay exponent")
    sp.add_argument("--M", dest="big_m", type=float, help="resolvent bound constant")


def _add_scan_flags(sp):
    sp.add_argument("--t-range", dest="t_range")
    sp.add_argument("--t-step", dest="t_step", type=float)
    sp.add_argument("--tau-range", dest="tau_range")
    sp.add_argument("--tau-step", dest="tau_step", type=float)
    sp.add_argument("--no-refine", dest="no_refine", action="store_true")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="vexap",
        description="variable-exponent norms, almost-periodicity diagnostics, "
                    "special functions and fractional evolution solvers")
    ap.add_argument("--config", help="INI config file; flags override its values")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("norm", help="Luxemburg or Stepanov norms")
    sp.add_argument("--f", help="function: expression, catalog:<name>, csv:<path>")
    sp.add_argument("--p", help="exponent: number, 'inf', or expression")
    sp.add_argument("--domain", help="integration interval a,b")
    sp.add_argument("--stepanov", action="store_true")
    _add_scan_flags(sp)
    sp.set_defaults(func=_cmd_norm, out="norm")

    sp = sub.add_parser("ap-scan", help="epsilon-period scan of the Bohr lift")
    sp.add_argument("--f")
    sp.add_argument("--p")
    sp.add_argument("--eps", type=float, required=True)
    _add_scan_flags(sp)
    sp.set_defaults(func=_cmd_ap_scan, out="ap-scan")

    sp = sub.add_parser("counterexample",
                        help="truncated modulars of the sign composite blow-up")
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--t", type=float, default=2.0)
    sp.add_argument("--tau", type=float, default=2.5)
    sp.add_argument("--deltas", default="1e-3,1e-4,1e-5")
    sp.set_defaults(func=_cmd_counterexample, out="counterexample")

    sp = sub.add_parser("specfun", help="special function tables")
    sp.add_argument("--table", choices=["mittag-leffler", "wright"], required=True)
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--beta-ml", dest="beta_ml", type=float, default=1.0)
    sp.add_argument("--gamma", type=float, default=0.5)
    sp.add_argument("--z-range", dest="z_range")
    sp.add_argument("--s-range", dest="s_range")
    sp.add_argument("--n-points", dest="n_points", type=int, default=41)
    sp.set_defaults(func=_cmd_specfun, out="specfun")

    sp = sub.add_parser("operator", help="resolvent bound report and family tables")
    _add_operator_flags(sp)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--semigroup-times", dest="semigroup_times")
    sp.add_argument("--subordinate-times", dest="subordinate_times")
    sp.set_defaults(func=_cmd_operator, out="operator")

    sp = sub.add_parser("convolve", help="infinite or finite convolution")
    sp.add_argument("--kernel", default="exp",
                    choices=["exp", "semigroup", "subordinated"])
    sp.add_argument("--g", required=True)
    sp.add_argument("--q", help="exponent for the kernel window norms")
    sp.add_argument("--times")
    sp.add_argument("--windows", type=int, default=40)
    sp.add_argument("--finite", action="store_true")
    sp.add_argument("--gamma", type=float)
    _add_operator_flags(sp)
    sp.set_defaults(func=_cmd_convolve, out="convolve")

    sp = sub.add_parser("solve-dfp",
                        help="mild solution of the fractional relaxation problem")
    _add_operator_flags(sp)
    sp.add_argument("--gamma", type=float, required=True)
    sp.add_argument("--x0", required=True)
    sp.add_argument("--f")
    sp.add_argument("--t-range", dest="t_range2")
    sp.add_argument("--t-step", dest="t_step", type=float)
    sp.add_argument("--residual", action="store_true")
    sp.add_argument("--residual-tol", dest="residual_tol", type=float)
    sp.set_defaults(func=_cmd_solve_dfp, out="solve-dfp", t_range=None)

    for s in sub.choices.values():
        s.add_argument("--out", dest="out", default=s.get_default("out"),
                       help="output prefix for .csv and .summary.txt")
    return ap


def _apply_config(args, parser):
    """Fill unset options from the config file section of the subcommand."""
    if not args.config:
        return args
    cp = configparser.ConfigParser()
    read = cp.read(args.config)
    if not read:
        raise UsageError(f"cannot read config file {args.config!r}")
    if not cp.has_section(args.command):
        return args
    bool_actions = {}
    type_map = {}
    for action in parser._subparsers._group_actions[0].choices[args.command]._actions:
        if action.dest in ("help",):
            continue
        type_map[action.dest] = action.type
        bool_actions[action.dest] = isinstance(action, argparse._StoreTrueAction)
    defaults = parser._subparsers._group_actions[0].choices[args.command]
    for key, value in cp.items(args.command):
        dest = key.replace("-", "_")
        if dest not in type_map:
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        current = getattr(args, dest, None)
        if current is not None and current != defaults.get_default(dest):
            continue                    # explicit flag wins
        if bool_actions[dest]:
            setattr(args, dest, cp.getboolean(args.command, key))
        elif type_map[dest] is not None:
            setattr(args, dest, type_map[dest](value))
        else:
            setattr(args, dest, value)
    return args


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config(args, parser)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
