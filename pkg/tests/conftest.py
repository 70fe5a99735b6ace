import numpy as np
import pytest

from scinbio import (BilevelProblem, box_set, builtin_fold_family,
                     builtin_minimax, builtin_quartic_family,
                     builtin_shifted_double_well)


@pytest.fixture(scope="session")
def minimax():
    return builtin_minimax()


@pytest.fixture(scope="session")
def double_well():
    return builtin_shifted_double_well()


@pytest.fixture(scope="session")
def fold():
    return builtin_fold_family()


@pytest.fixture(scope="session")
def quartic():
    return builtin_quartic_family()


def quadratic_problem(m=2, y0=None):
    """g(y) = 1/2 ||y||^2: strongly convex sanity target for the solvers."""
    y0 = np.zeros(m) if y0 is None else np.asarray(y0, dtype=float)

    def f(x, y):
        return float(y[0])

    def g(x, y):
        return 0.5 * float(np.dot(y, y))

    def grad(x, y):
        return np.asarray(y, dtype=float).copy()

    def hess(x, y):
        return np.eye(m)

    return BilevelProblem(n=1, m=m, f=f, g=g, grad_y_g=grad, hess_yy_g=hess,
                          y0=y0, f_bar=10.0,
                          feasible_set=box_set([-1.0], [1.0]))


def central_diff_grad(fun, y, step):
    """Central finite differences of a scalar function of y."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    for i in range(y.size):
        yp = y.copy(); yp[i] += step
        ym = y.copy(); ym[i] -= step
        out[i] = (fun(yp) - fun(ym)) / (2.0 * step)
    return out
