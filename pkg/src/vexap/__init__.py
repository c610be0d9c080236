"""vexap: variable-exponent Lebesgue norms, Stepanov almost-periodicity
diagnostics, Mittag-Leffler/Wright special functions, subordinated operator
families and convolution-based fractional mild solutions."""

from .exponents import (ExponentClass, VariableExponent, classify,
                        composition_exponent, conjugate, essential_bounds)
from .funcs import (FuncExpr, ParseError, ScalarFunction, eval_func,
                    load_samples, parse_expr)
from .modular import (InequalityReport, ModularResult, NormResult,
                      domination_check, embedding_check, holder_check,
                      luxemburg_norm, modular, phi)
from .operators import (OperatorFamily, ResolventBound, decay_fit, p_family,
                        r_kernel, s_family, semigroup_contour, spectral_norm,
                        subordinate, verify_resolvent_bound)
from .specfun import (gamma_kernel, mittag_leffler, mittag_leffler_real,
                      wright_moment, wright_phi)
from .stepanov import (APDiagnosticReport, StepanovConfig, aap_split_check,
                       bohr_lift_distance, bounded_upgrade_check,
                       composition_ap_check, epsilon_period_scan,
                       sign_divergence_profile, stepanov_norm,
                       sup_norm_period_scan, window_norm)
from .convolution import (Kernel, KernelSum, Trajectory, ap_transfer_check,
                          caputo_residual, finite_convolution,
                          infinite_convolution, kernel_sum,
                          solve_fractional_ivp)

__version__ = "0.1.0"
