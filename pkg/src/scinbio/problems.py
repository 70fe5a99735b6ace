"""Bilevel problem model: oracle bundles, feasible sets, and builtin test problems.

A problem is a bundle of pure oracles for the upper objective f(x, y), the
lower objective g(x, y) and its y-derivatives, together with a fixed
lower-level initialization y0, a uniform value cap f_bar on |f| over the
reachable region, and a convex compact feasible set for x.  Oracles must be
pure functions of (x, y): solvers may hand them reused scratch buffers and
may call them concurrently.
"""

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


# ---------------------------------------------------------------------------
# Feasible sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeasibleSet:
    """Convex compact set with Euclidean projection, membership, bounding box."""

    kind: str
    project: Callable[[np.ndarray], np.ndarray]
    contains: Callable[[np.ndarray], bool]
    bbox: tuple


def box_set(lo, hi) -> FeasibleSet:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or np.any(lo > hi):
        raise ValueError("box bounds must have equal shape with lo <= hi")

    def project(z):
        return np.clip(np.asarray(z, dtype=float), lo, hi)

    def contains(z):
        z = np.asarray(z, dtype=float)
        slack = 1e-12 * (1.0 + np.abs(hi - lo))
        return bool(np.all(z >= lo - slack) and np.all(z <= hi + slack))

    return FeasibleSet("box", project, contains, (lo.copy(), hi.copy()))


def ball_set(center, radius) -> FeasibleSet:
    center = np.asarray(center, dtype=float)
    radius = float(radius)
    if radius <= 0:
        raise ValueError("radius must be positive")

    def project(z):
        z = np.asarray(z, dtype=float)
        d = z - center
        nrm = float(np.linalg.norm(d))
        if nrm <= radius:
            return z.copy()
        return center + d * (radius / nrm)

    def contains(z):
        z = np.asarray(z, dtype=float)
        return bool(np.linalg.norm(z - center) <= radius * (1.0 + 1e-12) + 1e-12)

    return FeasibleSet("ball", project, contains,
                       (center - radius, center + radius))


def custom_set(project, contains, bbox) -> FeasibleSet:
    lo, hi = (np.asarray(bbox[0], dtype=float), np.asarray(bbox[1], dtype=float))
    return FeasibleSet("custom", project, contains, (lo, hi))


# ---------------------------------------------------------------------------
# Problem bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BilevelProblem:
    """Oracle bundle for min_{x in X} f(x, y^alg(x)) with algorithmic lower level.

    grad_x_grad_y_g, when present, returns the (m, n) cross-derivative block
    d/dx of grad_y g; it is only consulted by the fold-condition checker and
    may be omitted (finite differences are used instead).
    """

    n: int
    m: int
    f: Callable[[np.ndarray, np.ndarray], float]
    g: Callable[[np.ndarray, np.ndarray], float]
    grad_y_g: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hess_yy_g: Callable[[np.ndarray, np.ndarray], np.ndarray]
    y0: np.ndarray
    f_bar: float
    feasible_set: FeasibleSet
    grad_x_grad_y_g: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def with_y0(self, y0) -> "BilevelProblem":
        """Copy of the problem with a different lower-level initialization."""
        y0 = np.atleast_1d(np.asarray(y0, dtype=float))
        if y0.shape != (self.m,):
            raise ValueError(f"y0 must have shape ({self.m},)")
        return dataclasses.replace(self, y0=y0)


@dataclass(frozen=True)
class ProblemLibraryEntry:
    name: str
    problem: BilevelProblem
    notes: str


# ---------------------------------------------------------------------------
# Builtin: nonconvex-nonconcave minimax  f(x,y) = (x^2-y^2) sin(x+y) + xy sin(x-y)
# ---------------------------------------------------------------------------
# The minimax problem min_x max_y f is cast as a bilevel problem with lower
# objective g = -f.  Scalar math is used in the oracles because the inner
# gradient-descent loop evaluates them millions of times per run.

def _mm_f(x, y):
    a = x[0]
    b = y[0]
    return (a * a - b * b) * math.sin(a + b) + a * b * math.sin(a - b)


def _mm_fy(a, b):
    return (-a * b * math.cos(a - b) + a * math.sin(a - b)
            - 2.0 * b * math.sin(a + b) + (a * a - b * b) * math.cos(a + b))


def _mm_fx(a, b):
    return (a * b * math.cos(a - b) + 2.0 * a * math.sin(a + b)
            + b * math.sin(a - b) + (a * a - b * b) * math.cos(a + b))


def _mm_fyy(a, b):
    return (-a * b * math.sin(a - b) - 2.0 * a * math.cos(a - b)
            - 4.0 * b * math.cos(a + b) - (a * a - b * b) * math.sin(a + b)
            - 2.0 * math.sin(a + b))


def _mm_fxy(a, b):
    return (a * b * math.sin(a - b) + a * math.cos(a - b)
            + 2.0 * a * math.cos(a + b) - b * math.cos(a - b)
            - 2.0 * b * math.cos(a + b) + (b * b - a * a) * math.sin(a + b)
            + math.sin(a - b))


def minimax_value_and_gradients(x, y):
    """f and its two partials for the builtin minimax objective (scalars in/out).

    The gradient-descent-ascent baseline uses these directly; the bilevel
    bundle only exposes y-derivatives of g = -f.
    """
    return (_mm_f((x,), (y,)), _mm_fx(x, y), _mm_fy(x, y))


# Value cap: 1.5 x max|f| over a 400-point grid of [-3,3] x the sublevel
# region {y in [-6,6] : g(x,y) <= g(x,0)}; grid max was 41.418.
_MINIMAX_F_BAR = 62.13


def builtin_minimax() -> BilevelProblem:
    """Nonconvex-nonconcave minimax test problem as a bilevel bundle (n=m=1)."""

    def g(x, y):
        return -_mm_f(x, y)

    def grad_y_g(x, y):
        return np.array([-_mm_fy(x[0], y[0])])

    def hess_yy_g(x, y):
        return np.array([[-_mm_fyy(x[0], y[0])]])

    def grad_x_grad_y_g(x, y):
        return np.array([[-_mm_fxy(x[0], y[0])]])

    return BilevelProblem(
        n=1, m=1,
        f=_mm_f, g=g,
        grad_y_g=grad_y_g, hess_yy_g=hess_yy_g,
        grad_x_grad_y_g=grad_x_grad_y_g,
        y0=np.array([0.0]),
        f_bar=_MINIMAX_F_BAR,
        feasible_set=box_set([-3.0], [3.0]),
    )


# ---------------------------------------------------------------------------
# Builtin: shifted double well  g(x,y) = (y-x)^4 - 2 (y-x)^2
# ---------------------------------------------------------------------------
# f(x,y) = y separates the two lower-level branches, so the hyperfunction
# jumps at x = 0 where gradient descent from y0 = 0 stalls on the hump.

_DOUBLE_WELL_F_BAR = 5.33  # 1.5 x max|y| over the sublevel grid (max 3.553)


def builtin_shifted_double_well() -> BilevelProblem:
    def f(x, y):
        return float(y[0])

    def g(x, y):
        u = y[0] - x[0]
        u2 = u * u
        return u2 * u2 - 2.0 * u2

    def grad_y_g(x, y):
        # elementwise in y: accepts the usual (1,) state or a (k,) batch
        u = np.asarray(y, dtype=float) - x[0]
        return 4.0 * u * u * u - 4.0 * u

    def hess_yy_g(x, y):
        u = y[0] - x[0]
        return np.array([[12.0 * u * u - 4.0]])

    def grad_x_grad_y_g(x, y):
        u = y[0] - x[0]
        return np.array([[-(12.0 * u * u - 4.0)]])

    return BilevelProblem(
        n=1, m=1,
        f=f, g=g,
        grad_y_g=grad_y_g, hess_yy_g=hess_yy_g,
        grad_x_grad_y_g=grad_x_grad_y_g,
        y0=np.array([0.0]),
        f_bar=_DOUBLE_WELL_F_BAR,
        feasible_set=box_set([-2.0], [2.0]),
    )


# ---------------------------------------------------------------------------
# Builtin: fold family  g(x,y) = (1-2 x1) y + (3 x1 - 2 x1^2) y^3  near y = 0
# ---------------------------------------------------------------------------
# The cubic is the local model of a globally defined objective; on its own it
# is unbounded below, so a quartic confinement term is added outside
# |y| <= 1.5.  The term and all of its derivatives vanish identically on
# [-1.5, 1.5], leaving the stationary structure near y = 0 untouched.

_FOLD_CONF = 10.0
_FOLD_EDGE = 1.5
_FOLD_F_BAR = 3.37  # 1.5 x max|x1 + y| over the sublevel grid (max 2.242)


def _fold_overhang(y):
    return np.maximum(0.0, np.abs(y) - _FOLD_EDGE)


def builtin_fold_family() -> BilevelProblem:
    def f(x, y):
        return x[0] + y[0]

    def g(x, y):
        x1 = x[0]
        yy = y[0]
        r = _fold_overhang(yy)
        return ((1.0 - 2.0 * x1) * yy + (3.0 * x1 - 2.0 * x1 * x1) * yy ** 3
                + _FOLD_CONF * r ** 4)

    def grad_y_g(x, y):
        x1 = x[0]
        yy = np.asarray(y, dtype=float)
        r = _fold_overhang(yy)
        return ((1.0 - 2.0 * x1)
                + 3.0 * (3.0 * x1 - 2.0 * x1 * x1) * yy * yy
                + 4.0 * _FOLD_CONF * r ** 3 * np.sign(yy))

    def hess_yy_g(x, y):
        x1 = x[0]
        yy = y[0]
        r = _fold_overhang(yy)
        return np.array([[6.0 * (3.0 * x1 - 2.0 * x1 * x1) * yy
                          + 12.0 * _FOLD_CONF * r * r]])

    def grad_x_grad_y_g(x, y):
        x1 = x[0]
        yy = y[0]
        return np.array([[-2.0 + 3.0 * (3.0 - 4.0 * x1) * yy * yy, 0.0]])

    return BilevelProblem(
        n=2, m=1,
        f=f, g=g,
        grad_y_g=grad_y_g, hess_yy_g=hess_yy_g,
        grad_x_grad_y_g=grad_x_grad_y_g,
        y0=np.array([0.1]),
        f_bar=_FOLD_F_BAR,
        feasible_set=box_set([0.0, -1.0], [1.0, 1.0]),
    )


# ---------------------------------------------------------------------------
# Builtin: quartic family over [-4,5]^2
# ---------------------------------------------------------------------------
# g(x,y) = y^4 + c3(x) y^3 + c2(x) y^2 + c3(x) y, where the cubic and linear
# coefficients coincide.  Coercive in y, but the coefficients reach ~200 at
# the domain corners, so minimizers can sit at |y| ~ 150; the cap and the
# cubic-regularization default are calibrated accordingly.

_QUARTIC_F_BAR = 310.6  # 1.5 x max|x1 + y| over the sublevel grid (max 207.06)


def _q_c3(x1, x2):
    return x1 * x1 - 5.0 * x1 * x2 + 2.0 * x2 * x2 - 7.0 * x1 + 8.0 * x2 - 30.0


def _q_c2(x1, x2):
    return x1 * x1 - 3.0 * x1 * x2 + 4.0 * x2 * x2 - 5.0 * x1 + 2.0 * x2 - 40.0


def builtin_quartic_family() -> BilevelProblem:
    def f(x, y):
        return x[0] + y[0]

    def g(x, y):
        c3 = _q_c3(x[0], x[1])
        c2 = _q_c2(x[0], x[1])
        yy = y[0]
        return yy ** 4 + c3 * yy ** 3 + c2 * yy * yy + c3 * yy

    def grad_y_g(x, y):
        c3 = _q_c3(x[0], x[1])
        c2 = _q_c2(x[0], x[1])
        yy = np.asarray(y, dtype=float)
        return 4.0 * yy ** 3 + 3.0 * c3 * yy * yy + 2.0 * c2 * yy + c3

    def hess_yy_g(x, y):
        c3 = _q_c3(x[0], x[1])
        c2 = _q_c2(x[0], x[1])
        yy = y[0]
        return np.array([[12.0 * yy * yy + 6.0 * c3 * yy + 2.0 * c2]])

    def grad_x_grad_y_g(x, y):
        x1, x2 = x[0], x[1]
        yy = y[0]
        dc3 = np.array([2.0 * x1 - 5.0 * x2 - 7.0, -5.0 * x1 + 4.0 * x2 + 8.0])
        dc2 = np.array([2.0 * x1 - 3.0 * x2 - 5.0, -3.0 * x1 + 8.0 * x2 + 2.0])
        row = (3.0 * yy * yy + 1.0) * dc3 + 2.0 * yy * dc2
        return row.reshape(1, 2)

    return BilevelProblem(
        n=2, m=1,
        f=f, g=g,
        grad_y_g=grad_y_g, hess_yy_g=hess_yy_g,
        grad_x_grad_y_g=grad_x_grad_y_g,
        y0=np.array([0.0]),
        f_bar=_QUARTIC_F_BAR,
        feasible_set=box_set([-4.0, -4.0], [5.0, 5.0]),
    )


# ---------------------------------------------------------------------------
# Linear perturbation  g_a(x,y) = g(x,y) + a^T y
# ---------------------------------------------------------------------------

def perturb_linear(problem: BilevelProblem, a) -> BilevelProblem:
    """Problem with lower objective g + a^T y; gradient shifts by a, Hessian unchanged.

    Random draws of `a` make the lower level Morse in y for almost every x,
    which is the regularity the geometry diagnostics probe for.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.shape != (problem.m,):
        raise ValueError(f"perturbation must have shape ({problem.m},), got {a.shape}")

    base_g = problem.g
    base_grad = problem.grad_y_g

    def g(x, y):
        return base_g(x, y) + float(np.dot(a, y))

    def grad_y_g(x, y):
        return np.asarray(base_grad(x, y)) + a

    return dataclasses.replace(problem, g=g, grad_y_g=grad_y_g)


# ---------------------------------------------------------------------------
# Library
# ---------------------------------------------------------------------------

# Calibrated lower-solver defaults: eta keeps gradient descent a descent
# method on the reachable sublevel sets; M dominates the local Hessian
# Lipschitz constant there (|d^3 g/dy^3| grid maxima: minimax 30.6,
# fold 415, quartic ~6100; the double well ships the basin-scale value 24).
LOWER_DEFAULTS = {
    "minimax": {"eta": 0.01, "M": 32.0},
    "double-well": {"eta": 0.02, "M": 24.0},
    "fold": {"eta": 0.002, "M": 420.0},
    "quartic": {"eta": 1e-6, "M": 6200.0},
}

_BUILTINS = {
    "minimax": (builtin_minimax,
                "minimax as bilevel (g = -f); feasible box [-3,3]"),
    "double-well": (builtin_shifted_double_well,
                    "shifted double well; hyperfunction jumps at x = 0"),
    "fold": (builtin_fold_family,
             "fold bifurcation family; degenerate stationary point at x1 = 1/2"),
    "quartic": (builtin_quartic_family,
                "quartic-in-y family over [-4,5]^2 with curve-like bifurcation set"),
}

PROBLEM_NAMES = tuple(_BUILTINS)


def get_problem(name: str) -> BilevelProblem:
    try:
        ctor, _ = _BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {PROBLEM_NAMES}") from None
    return ctor()


def problem_library():
    """All builtin problems as named library entries (names are unique)."""
    return [ProblemLibraryEntry(name, ctor(), notes)
            for name, (ctor, notes) in _BUILTINS.items()]
