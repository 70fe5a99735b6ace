"""Lower-level solvers: gradient descent and cubic-regularized Newton.

The cubic method minimizes the model  m(s) = g^T s + 1/2 s^T H s + (M/6)||s||^3
at every step and afterwards selects the iterate with the smallest
second-order stationarity measure

    nu_M(y) = max( sqrt(||grad g|| / M),  -(2 / (3 M)) lambda_min(hess g) ).

Solvers are reentrant: each solve owns its trace and oracles are pure.
"""

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .errors import LowerSolveError

__all__ = [
    "LowerSolverConfig", "LowerSolveResult", "CubicStep",
    "stationarity_measure", "solve_cubic_subproblem",
    "cubic_newton_solve", "gradient_descent_solve", "solve_lower",
]

GRADIENT_DESCENT = "gradient_descent"
CUBIC_NEWTON = "cubic_newton"

# best-iterate selection rules
SELECT_STATIONARITY = "stationarity"  # argmin nu_M over k = 0..K (cubic default)
SELECT_LAST = "last"                  # final iterate (gradient-descent default)
SELECT_MIN_GRAD = "min_grad"          # argmin gradient norm over k = 1..K


@dataclass(frozen=True)
class LowerSolverConfig:
    """Method plus budget for one lower-level solve.

    eta is the gradient-descent step size; M the cubic regularization weight
    (use a bound on the Hessian Lipschitz constant of g(x, .)).  grad_tol = 0
    disables early exit so the iteration count is exactly the budget.
    """

    method: str = GRADIENT_DESCENT
    eta: float = 0.01
    M: float = 1.0
    max_iters: int = 100
    grad_tol: float = 0.0
    selection: Optional[str] = None

    def __post_init__(self):
        if self.method not in (GRADIENT_DESCENT, CUBIC_NEWTON):
            raise ValueError(f"unknown lower-level method {self.method!r}")
        if self.method == GRADIENT_DESCENT and not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.method == CUBIC_NEWTON and not self.M > 0:
            raise ValueError("M must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.grad_tol < 0:
            raise ValueError("grad_tol must be nonnegative")

    def resolved_selection(self):
        if self.selection is not None:
            return self.selection
        return SELECT_STATIONARITY if self.method == CUBIC_NEWTON else SELECT_LAST


@dataclass
class LowerSolveResult:
    y_hat: np.ndarray
    iterates: List[np.ndarray]
    grad_norms: List[float]
    stationarity_measures: List[float]   # empty for gradient descent
    selected_index: int
    oracle_counts: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CubicStep:
    s: np.ndarray
    model_value: float
    boundary_multiplier: float  # r with (H + (M r / 2) I) s = -g and r = ||s||
    hard_case: bool


def stationarity_measure(grad_norm, lambda_min, M):
    """nu_M: max of sqrt(grad_norm / M) and -(2 / (3 M)) lambda_min."""
    if grad_norm < 0 or M <= 0:
        raise ValueError("grad_norm must be >= 0 and M > 0")
    return max(math.sqrt(grad_norm / M), -(2.0 / (3.0 * M)) * lambda_min)


# ---------------------------------------------------------------------------
# Cubic-model subproblem
# ---------------------------------------------------------------------------

def _model_value(s, grad, hess, M):
    return (float(grad @ s) + 0.5 * float(s @ hess @ s)
            + (M / 6.0) * float(np.linalg.norm(s)) ** 3)


def _canonical_eigvec(v):
    # fix the sign so eigenvector orientation is LAPACK-independent
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def solve_cubic_subproblem(grad, hess, M, _eig=None) -> CubicStep:
    """Global minimizer of g^T s + 1/2 s^T H s + (M/6)||s||^3.

    Via eigendecomposition of H: the minimizer satisfies
    (H + (M r / 2) I) s = -g with r = ||s||, solved as a scalar secular
    equation in r on [max(0, -2 lambda_min / M), inf) by safeguarded
    bisection + Newton.  When g is orthogonal to the bottom eigenspace and
    the secular root is infeasible (hard case), an eigenvector component of
    the exact magnitude closing ||s|| = r is added.
    """
    grad = np.atleast_1d(np.asarray(grad, dtype=float))
    hess = np.atleast_2d(np.asarray(hess, dtype=float))
    M = float(M)
    m = grad.shape[0]
    if hess.shape != (m, m):
        raise ValueError(f"hess must be ({m},{m}), got {hess.shape}")
    if M <= 0:
        raise ValueError("M must be positive")
    if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
        raise ValueError("non-finite subproblem inputs")
    scale = np.max(np.abs(hess)) + 1.0
    if np.max(np.abs(hess - hess.T)) > 1e-8 * scale:
        raise ValueError("hess must be symmetric")

    if _eig is None:
        evals, evecs = np.linalg.eigh(0.5 * (hess + hess.T))
    else:
        evals, evecs = _eig
    lam_min = float(evals[0])
    ghat = evecs.T @ grad
    r_lo = max(0.0, -2.0 * lam_min / M)

    # components of g on the bottom eigenspace
    bottom = evals <= lam_min + 1e-12 * (abs(lam_min) + 1.0)
    g_bottom = float(np.linalg.norm(ghat[bottom]))
    g_scale = float(np.linalg.norm(grad))

    def s_of_r(r):
        denom = evals + 0.5 * M * r
        return evecs @ (-ghat / denom)

    def w_and_deriv(r):
        denom = evals + 0.5 * M * r
        t = ghat / denom
        w = float(np.linalg.norm(t))
        if w == 0.0:
            return 0.0, 0.0
        dw = -0.5 * M * float(np.sum(t * t / denom)) / w
        return w, dw

    hard = False
    if g_bottom <= 1e-13 * (g_scale + 1.0):
        # pseudo-inverse length on the complement of the bottom eigenspace
        denom = evals[~bottom] + 0.5 * M * r_lo
        w_lo = float(np.linalg.norm(ghat[~bottom] / denom)) if np.any(~bottom) else 0.0
        if r_lo == 0.0 and g_scale == 0.0:
            s = np.zeros(m)
            return CubicStep(s, 0.0, 0.0, False)
        if w_lo < r_lo:
            # hard case: close the radius gap along the bottom eigenvector
            v = _canonical_eigvec(evecs[:, 0])
            s_perp = np.zeros(m)
            if np.any(~bottom):
                s_perp = evecs[:, ~bottom] @ (-ghat[~bottom] / denom)
            tau = math.sqrt(max(r_lo * r_lo - w_lo * w_lo, 0.0))
            s = s_perp + tau * v
            return CubicStep(s, _model_value(s, grad, hess, M), r_lo, True)
        zero_bottom = ghat.copy()
        zero_bottom[bottom] = 0.0
        ghat = zero_bottom
    # regular case: bracket the secular root w(r) = r on (r_lo, inf)
    lo = r_lo
    if lo == 0.0 and lam_min > 0:
        w0, _ = w_and_deriv(0.0)
        if w0 <= 0.0:
            return CubicStep(np.zeros(m), 0.0, 0.0, False)
    hi = max(2.0 * r_lo, 2.0 * math.sqrt(g_scale / M) + 1e-8)
    for _ in range(200):
        w_hi, _ = w_and_deriv(hi)
        if w_hi < hi:
            break
        hi *= 2.0
    r = min(max(0.5 * (lo + hi), lo + 1e-16), hi)
    for _ in range(200):
        w, dw = w_and_deriv(r)
        res = w - r
        if abs(res) <= 1e-10 * (1.0 + r):
            break
        if res > 0:
            lo = r
        else:
            hi = r
        step_denom = dw - 1.0
        r_newton = r - res / step_denom if step_denom != 0 else r
        r = r_newton if lo < r_newton < hi else 0.5 * (lo + hi)
    s = s_of_r(r)
    return CubicStep(s, _model_value(s, grad, hess, M), r, hard)


# ---------------------------------------------------------------------------
# Full solvers (trace-recording)
# ---------------------------------------------------------------------------

def _check_finite(y, k, what="iterate"):
    if not np.all(np.isfinite(y)):
        raise LowerSolveError(f"non-finite {what} at lower-level step {k}",
                              iterate_index=k)


def cubic_newton_solve(problem, x, config: LowerSolverConfig) -> LowerSolveResult:
    """K full cubic-Newton steps from y0; best iterate by nu_M over k = 0..K."""
    if config.method != CUBIC_NEWTON:
        raise ValueError("config.method must be 'cubic_newton'")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    M = config.M
    K = config.max_iters
    y = np.array(problem.y0, dtype=float)
    iterates = [y.copy()]
    grad_norms = []
    nus = []
    lambda_mins = []
    n_grad = n_hess = 0

    for k in range(K + 1):
        gk = np.atleast_1d(np.asarray(problem.grad_y_g(x, y), dtype=float))
        Hk = np.atleast_2d(np.asarray(problem.hess_yy_g(x, y), dtype=float))
        n_grad += 1
        n_hess += 1
        _check_finite(gk, k, "gradient")
        _check_finite(Hk, k, "Hessian")
        evals, evecs = np.linalg.eigh(0.5 * (Hk + Hk.T))
        gnorm = float(np.linalg.norm(gk))
        grad_norms.append(gnorm)
        lambda_mins.append(float(evals[0]))
        nus.append(stationarity_measure(gnorm, float(evals[0]), M))
        if config.grad_tol > 0 and gnorm <= config.grad_tol:
            break
        if k == K:
            break
        step = solve_cubic_subproblem(gk, Hk, M, _eig=(evals, evecs))
        y = y + step.s
        _check_finite(y, k + 1)
        iterates.append(y.copy())

    selection = config.resolved_selection()
    if selection == SELECT_STATIONARITY:
        k_star = int(np.argmin(nus))
    elif selection == SELECT_MIN_GRAD:
        k_star = 1 + int(np.argmin(grad_norms[1:])) if len(grad_norms) > 1 else 0
    elif selection == SELECT_LAST:
        k_star = len(iterates) - 1
    else:
        raise ValueError(f"unknown selection rule {selection!r}")

    return LowerSolveResult(
        y_hat=iterates[k_star].copy(),
        iterates=iterates,
        grad_norms=grad_norms,
        stationarity_measures=nus,
        selected_index=k_star,
        oracle_counts={"g": 0, "grad": n_grad, "hess": n_hess},
    )


def gradient_descent_solve(problem, x, config: LowerSolverConfig) -> LowerSolveResult:
    """y_{k+1} = y_k - eta grad_y g(x, y_k) for K steps; returns the last iterate."""
    if config.method != GRADIENT_DESCENT:
        raise ValueError("config.method must be 'gradient_descent'")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    eta = config.eta
    K = config.max_iters
    y = np.array(problem.y0, dtype=float)
    iterates = [y.copy()]
    grad_norms = []
    n_grad = 0

    for k in range(K + 1):
        gk = np.atleast_1d(np.asarray(problem.grad_y_g(x, y), dtype=float))
        n_grad += 1
        _check_finite(gk, k, "gradient")
        gnorm = float(np.linalg.norm(gk))
        grad_norms.append(gnorm)
        if config.grad_tol > 0 and gnorm <= config.grad_tol:
            break
        if k == K:
            break
        y = y - eta * gk
        _check_finite(y, k + 1)
        iterates.append(y.copy())

    selection = config.resolved_selection()
    if selection == SELECT_LAST:
        k_star = len(iterates) - 1
    elif selection == SELECT_MIN_GRAD:
        k_star = 1 + int(np.argmin(grad_norms[1:])) if len(grad_norms) > 1 else 0
    else:
        raise ValueError(f"selection rule {selection!r} not supported for gradient descent")

    return LowerSolveResult(
        y_hat=iterates[k_star].copy(),
        iterates=iterates,
        grad_norms=grad_norms,
        stationarity_measures=[],
        selected_index=k_star,
        oracle_counts={"g": 0, "grad": n_grad, "hess": 0},
    )


def solve_lower(problem, x, config: LowerSolverConfig) -> LowerSolveResult:
    if config.method == CUBIC_NEWTON:
        return cubic_newton_solve(problem, x, config)
    return gradient_descent_solve(problem, x, config)


# ---------------------------------------------------------------------------
# Lean path used by the hypergradient estimator: no per-iterate recording.
# Arithmetic matches the recording solvers exactly.
# ---------------------------------------------------------------------------

def run_lower_lean(problem, x, config: LowerSolverConfig):
    """Return (y_hat, oracle_counts) without storing the iterate trace."""
    if config.method == GRADIENT_DESCENT and problem.m == 1 and config.grad_tol == 0:
        return _gd_lean_1d(problem, x, config)
    res = solve_lower(problem, x, config)
    return res.y_hat, res.oracle_counts


def _gd_lean_1d(problem, x, config):
    # scalar fast path: the minimax experiment runs ~10^6 of these solves
    grad = problem.grad_y_g
    eta = config.eta
    ybuf = np.array(problem.y0, dtype=float)
    yv = ybuf[0]
    for k in range(config.max_iters):
        ybuf[0] = yv
        gk = grad(x, ybuf)
        yv = yv - eta * gk[0]
        if not math.isfinite(yv):
            raise LowerSolveError(f"non-finite iterate at lower-level step {k + 1}",
                                  iterate_index=k + 1)
    ybuf[0] = yv
    # one more gradient evaluation mirrors the recording solver's final trace entry
    grad(x, ybuf)
    counts = {"g": 0, "grad": config.max_iters + 1, "hess": 0}
    return ybuf, counts
