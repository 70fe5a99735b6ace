import math

import numpy as np
import pytest
from scipy.optimize import minimize

from scinbio import (LowerSolverConfig, cubic_newton_solve,
                     gradient_descent_solve, solve_cubic_subproblem,
                     solve_lower, stationarity_measure)
from scinbio.errors import LowerSolveError
from scinbio.lower import SELECT_MIN_GRAD, run_lower_lean

from conftest import quadratic_problem


def cubic_model(s, grad, hess, M):
    s = np.asarray(s, dtype=float)
    return (grad @ s + 0.5 * s @ hess @ s
            + (M / 6.0) * np.linalg.norm(s) ** 3)


def brute_force_min(grad, hess, M, span, n_grid=None, n_random=20000, seed=0):
    """Independent oracle: coarse search + smooth polish of the cubic model."""
    m = len(grad)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-span, span, size=(n_random, m))
    if n_grid:
        axes = [np.linspace(-span, span, n_grid)] * m
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.vstack([pts, np.column_stack([a.ravel() for a in mesh])])
    pts = np.vstack([pts, np.zeros((1, m))])
    vals = (pts @ grad + 0.5 * np.einsum("ij,jk,ik->i", pts, hess, pts)
            + (M / 6.0) * np.linalg.norm(pts, axis=1) ** 3)
    best = pts[int(np.argmin(vals))]

    def jac(s, g, h, mm):
        r = np.linalg.norm(s)
        return g + h @ s + (mm / 2.0) * r * s

    out = minimize(cubic_model, best, args=(grad, hess, M), jac=jac, method="BFGS",
                   options={"gtol": 1e-12, "maxiter": 500})
    cand = [best, out.x]
    vals = [cubic_model(c, grad, hess, M) for c in cand]
    return cand[int(np.argmin(vals))], min(vals)


# ---------------------------------------------------------------------------
# stationarity measure
# ---------------------------------------------------------------------------

def test_stationarity_measure_values():
    assert stationarity_measure(0.0, 1.0, 24.0) == 0.0
    assert stationarity_measure(0.0, -3.0, 2.0) == pytest.approx(1.0, abs=1e-15)
    assert stationarity_measure(4.0, 0.0, 1.0) == pytest.approx(2.0, abs=1e-15)


# ---------------------------------------------------------------------------
# cubic subproblem
# ---------------------------------------------------------------------------

def test_subproblem_stationary_convex_origin():
    step = solve_cubic_subproblem([0.0], [[2.0]], 1.0)
    assert np.array_equal(step.s, [0.0])
    assert step.model_value == 0.0


def test_subproblem_1d_oracle():
    # grid-search the model psi(s) = s + |s|^3 over [-2, 2], then polish
    grad, hess, M = np.array([1.0]), np.array([[0.0]]), 6.0
    ss = np.arange(-2.0, 2.0, 1e-6)
    vals = ss + np.abs(ss) ** 3
    s0 = ss[int(np.argmin(vals))]
    for _ in range(60):  # Newton on 1 + 3 s^2 sign(s), s < 0 branch
        s0 = s0 - (1.0 + 3.0 * s0 * s0 * np.sign(s0)) / (6.0 * abs(s0))
    assert s0 == pytest.approx(-1.0 / math.sqrt(3.0), abs=1e-12)
    step = solve_cubic_subproblem(grad, hess, M)
    assert step.s[0] == pytest.approx(s0, abs=1e-9)
    assert step.model_value <= cubic_model([s0], grad, hess, M) + 1e-12


def test_subproblem_2d_negative_curvature():
    grad = np.array([0.0, 0.5])
    hess = np.diag([-1.0, 1.0])
    M = 2.0
    step = solve_cubic_subproblem(grad, hess, M)
    s_ref, v_ref = brute_force_min(grad, hess, M, span=3.0, n_grid=301)
    assert step.model_value <= v_ref + 1e-9
    assert np.abs(np.abs(step.s) - np.abs(s_ref)).max() <= 1e-3


def test_subproblem_pure_saddle_hard_case():
    step = solve_cubic_subproblem([0.0], [[-4.0]], 24.0)
    assert step.hard_case
    assert abs(step.s[0]) == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert step.boundary_multiplier == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_subproblem_random_instances_beat_random_search():
    rng = np.random.default_rng(101)
    for trial in range(100):
        m = int(rng.integers(1, 4))
        A = rng.normal(size=(m, m))
        hess = 0.5 * (A + A.T) * 2.0
        grad = rng.normal(size=m)
        M = float(rng.uniform(0.5, 8.0))
        step = solve_cubic_subproblem(grad, hess, M)
        pts = rng.uniform(-4, 4, size=(10000, m))
        vals = (pts @ grad + 0.5 * np.einsum("ij,jk,ik->i", pts, hess, pts)
                + (M / 6.0) * np.linalg.norm(pts, axis=1) ** 3)
        assert step.model_value <= vals.min() + 1e-8
        assert step.model_value <= 0.0
        r = step.boundary_multiplier
        assert abs(np.linalg.norm(step.s) - r) <= 1e-8 * (1.0 + r)


def make_hard_case(rng, m=3, lam_min=-1.0):
    """Instance with grad orthogonal to the bottom eigenvector and a radius gap."""
    Q, _ = np.linalg.qr(rng.normal(size=(m, m)))
    evals = np.sort(np.concatenate([[lam_min], rng.uniform(1.0, 3.0, size=m - 1)]))
    hess = Q @ np.diag(evals) @ Q.T
    order = np.argsort(evals)
    coef = np.zeros(m)
    coef[1:] = rng.normal(size=m - 1) * 0.01
    grad = Q[:, order] @ coef  # no component along the bottom eigenvector
    return grad, hess

def test_subproblem_hard_cases():
    rng = np.random.default_rng(211)
    n_hard = 0
    for _ in range(12):
        grad, hess = make_hard_case(rng)
        M = 3.0
        step = solve_cubic_subproblem(grad, hess, M)
        if step.hard_case:
            n_hard += 1
        s_ref, v_ref = brute_force_min(grad, hess, M, span=2.0, seed=rng.integers(1 << 30))
        assert step.model_value <= v_ref + 1e-6
        r = step.boundary_multiplier
        assert abs(np.linalg.norm(step.s) - r) <= 1e-8 * (1.0 + r)
    assert n_hard >= 10


def test_subproblem_rejects_bad_inputs():
    with pytest.raises(ValueError):
        solve_cubic_subproblem([1.0, 0.0], [[1.0, 0.5], [0.0, 1.0]], 1.0)
    with pytest.raises(ValueError):
        solve_cubic_subproblem([np.nan], [[1.0]], 1.0)
    with pytest.raises(ValueError):
        solve_cubic_subproblem([1.0], [[1.0]], -2.0)


# ---------------------------------------------------------------------------
# cubic Newton
# ---------------------------------------------------------------------------

def test_cubic_newton_double_well(double_well):
    cfg = LowerSolverConfig(method="cubic_newton", M=24.0, max_iters=30)
    res = cubic_newton_solve(double_well.with_y0([0.1]), np.array([0.0]), cfg)
    assert abs(res.y_hat[0] - 1.0) <= 1e-6
    assert abs(double_well.g(np.array([0.0]), res.y_hat) - (-1.0)) <= 1e-10
    assert res.oracle_counts["grad"] == 31
    assert res.oracle_counts["hess"] == 31


def test_cubic_newton_quadratic_one_step():
    p = quadratic_problem(m=2, y0=[0.8, -0.6])
    cfg = LowerSolverConfig(method="cubic_newton", M=1.0, max_iters=1)
    res = cubic_newton_solve(p, np.array([0.0]), cfg)
    step = solve_cubic_subproblem(p.y0, np.eye(2), 1.0)
    assert np.abs(res.iterates[1] - (p.y0 + step.s)).max() <= 1e-14
    assert np.linalg.norm(res.iterates[1]) < np.linalg.norm(p.y0)


def test_cubic_newton_escapes_saddle(double_well):
    cfg = LowerSolverConfig(method="cubic_newton", M=24.0, max_iters=10)
    res = cubic_newton_solve(double_well.with_y0([0.0]), np.array([0.0]), cfg)
    # first step solves the pure negative-curvature model: |s| = 2*4/24
    assert abs(abs(res.iterates[1][0]) - 1.0 / 3.0) <= 1e-12
    assert abs(res.y_hat[0]) >= 0.5


def test_cubic_newton_descends_on_builtins(minimax, double_well, fold, quartic):
    rng = np.random.default_rng(41)
    cases = [(minimax, 32.0), (double_well, 24.0), (fold, 420.0), (quartic, 6200.0)]
    for problem, M in cases:
        lo, hi = problem.feasible_set.bbox
        cfg = LowerSolverConfig(method="cubic_newton", M=M, max_iters=12)
        for _ in range(5):
            x = rng.uniform(lo, hi)
            res = cubic_newton_solve(problem, x, cfg)
            gs = [problem.g(x, y) for y in res.iterates]
            assert all(b <= a + 1e-12 for a, b in zip(gs, gs[1:]))
            assert problem.g(x, res.y_hat) <= problem.g(x, problem.y0) + 1e-12


def test_cubic_newton_two_phase(double_well):
    cfg = LowerSolverConfig(method="cubic_newton", M=24.0, max_iters=30)
    res = cubic_newton_solve(double_well.with_y0([0.1]), np.array([0.0]), cfg)
    nus = np.array(res.stationarity_measures)
    cummin = np.minimum.accumulate(nus)
    assert cummin[-1] < nus[0]
    assert (np.diff(cummin) <= 0).all()
    lam = double_well.hess_yy_g(np.array([0.0]), res.y_hat)[0, 0]
    assert lam > 0


def test_cubic_newton_selection_ties_smallest_index():
    p = quadratic_problem(m=1, y0=[0.0])  # already optimal: nu = 0 at every k
    cfg = LowerSolverConfig(method="cubic_newton", M=1.0, max_iters=5)
    res = cubic_newton_solve(p, np.array([0.0]), cfg)
    assert res.selected_index == 0


def test_cubic_newton_min_grad_selection(double_well):
    cfg = LowerSolverConfig(method="cubic_newton", M=24.0, max_iters=30,
                            selection=SELECT_MIN_GRAD)
    res = cubic_newton_solve(double_well.with_y0([0.1]), np.array([0.0]), cfg)
    assert res.selected_index == 1 + int(np.argmin(res.grad_norms[1:]))


# ---------------------------------------------------------------------------
# gradient descent
# ---------------------------------------------------------------------------

def test_gd_double_well_converges(double_well):
    cfg = LowerSolverConfig(method="gradient_descent", eta=0.05, max_iters=500)
    res = gradient_descent_solve(double_well.with_y0([0.5]), np.array([0.0]), cfg)
    assert abs(res.y_hat[0] - 1.0) <= 1e-4
    assert res.selected_index == len(res.iterates) - 1


def test_gd_stalls_at_degenerate_start(double_well):
    cfg = LowerSolverConfig(method="gradient_descent", eta=0.05, max_iters=200)
    res = gradient_descent_solve(double_well, np.array([0.0]), cfg)
    assert res.y_hat[0] == 0.0
    assert all(y[0] == 0.0 for y in res.iterates)


def test_gd_zero_iterations(double_well):
    cfg = LowerSolverConfig(method="gradient_descent", eta=0.05, max_iters=0)
    res = gradient_descent_solve(double_well.with_y0([0.7]), np.array([0.3]), cfg)
    assert res.y_hat[0] == 0.7


def test_gd_stays_in_level_set(minimax, double_well, fold, quartic):
    rng = np.random.default_rng(43)
    cases = [(minimax, 0.01, 200), (double_well, 0.02, 200),
             (fold, 0.002, 200), (quartic, 1e-6, 100)]
    for problem, eta, K in cases:
        lo, hi = problem.feasible_set.bbox
        cfg = LowerSolverConfig(method="gradient_descent", eta=eta, max_iters=K)
        for _ in range(10):
            x = rng.uniform(lo, hi)
            res = gradient_descent_solve(problem, x, cfg)
            g0 = problem.g(x, problem.y0)
            assert all(problem.g(x, y) <= g0 + 1e-12 for y in res.iterates)


def test_gd_early_exit():
    p = quadratic_problem(m=1, y0=[1.0])
    cfg = LowerSolverConfig(method="gradient_descent", eta=0.5, max_iters=1000,
                            grad_tol=1e-6)
    res = gradient_descent_solve(p, np.array([0.0]), cfg)
    assert res.grad_norms[-1] <= 1e-6
    assert len(res.iterates) < 1001


def test_gd_nonfinite_raises():
    p = quadratic_problem(m=1, y0=[1.0])
    cfg = LowerSolverConfig(method="gradient_descent", eta=1e300, max_iters=50)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(LowerSolveError):
            gradient_descent_solve(p, np.array([0.0]), cfg)


def test_lean_path_matches_recording_solver(minimax, double_well):
    for problem, eta in [(minimax, 0.01), (double_well, 0.02)]:
        cfg = LowerSolverConfig(method="gradient_descent", eta=eta, max_iters=50)
        x = np.array([0.4] * problem.n)
        full = gradient_descent_solve(problem, x, cfg)
        lean_y, lean_counts = run_lower_lean(problem, x, cfg)
        assert np.array_equal(lean_y, full.y_hat)
        assert lean_counts == full.oracle_counts


def test_solve_lower_dispatch(double_well):
    gd = LowerSolverConfig(method="gradient_descent", eta=0.05, max_iters=10)
    cn = LowerSolverConfig(method="cubic_newton", M=24.0, max_iters=10)
    assert solve_lower(double_well, np.array([0.0]), gd).stationarity_measures == []
    assert len(solve_lower(double_well, np.array([0.0]), cn).stationarity_measures) > 0


def test_config_validation():
    with pytest.raises(ValueError):
        LowerSolverConfig(method="nope")
    with pytest.raises(ValueError):
        LowerSolverConfig(method="gradient_descent", eta=-1.0)
    with pytest.raises(ValueError):
        LowerSolverConfig(method="cubic_newton", M=0.0)
