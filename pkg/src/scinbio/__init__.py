"""Bilevel optimization with algorithm-defined lower-level responses.

Core pieces: Gaussian-smoothed hypergradient estimation over algorithmic
lower-level solves, a biased projected SGD outer loop with gradient-descent
or cubic-regularized-Newton inner solvers, bifurcation-set diagnostics, and
a gradient descent-ascent baseline for minimax comparisons.
"""

from .baselines import GdaTrace, detect_cycle, run_gda
from .errors import ConfigError, EstimatorError, LowerSolveError, NumericalError
from .geometry import (BifurcationScan, DimensionEstimate, StationaryPointRecord,
                       box_counting_dimension, check_fold_conditions,
                       find_stationary_points_1d, neighborhood_measure,
                       scan_bifurcation_set)
from .lower import (CubicStep, LowerSolveResult, LowerSolverConfig,
                    cubic_newton_solve, gradient_descent_solve,
                    solve_cubic_subproblem, solve_lower, stationarity_measure)
from .outer import (OuterConfig, OuterTrace, Schedules, constant_schedules,
                    default_schedules, gradient_mapping, random_index_pmf,
                    run_scinbio, tail_stability, write_summary_json,
                    write_trace_csv)
from .problems import (BilevelProblem, FeasibleSet, ProblemLibraryEntry,
                       PROBLEM_NAMES, ball_set, box_set, builtin_fold_family,
                       builtin_minimax, builtin_quartic_family,
                       builtin_shifted_double_well, custom_set, get_problem,
                       minimax_value_and_gradients, perturb_linear,
                       problem_library)
from .smoothing import (GradientEstimate, SmoothingConfig, estimate_hypergradient,
                        estimate_smoothed_value, gaussian_kernel,
                        gradient_norm_bound, lipschitz_bound,
                        smoothed_step_reference)

__version__ = "0.1.0"
