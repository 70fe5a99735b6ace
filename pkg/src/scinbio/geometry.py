"""Degenerate-stationary-point diagnostics for m = 1 lower levels.

A parameter x is a bifurcation parameter when g(x, .) has a stationary point
with singular Hessian; there stationary branches merge, appear, or vanish.
Grid sampling alone cannot land on such measure-zero parameters, so the
scanner localizes them: wherever the stationary-root count changes between
neighboring grid cells (or a root's curvature collapses), a two-variable
Newton iteration solves  grad_y g = 0, d2g/dy2 = 0  along the connecting
segment and pins the degenerate point to machine precision.
"""

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import ndimage

__all__ = [
    "StationaryPointRecord", "BifurcationScan", "DimensionEstimate",
    "find_stationary_points_1d", "scan_bifurcation_set",
    "check_fold_conditions", "box_counting_dimension", "neighborhood_measure",
    "degeneracy_threshold",
]

FOLD = "fold"
NON_FOLD_DEGENERATE = "non_fold_degenerate"
NONDEGENERATE = "nondegenerate"
UNDETERMINED = "undetermined"

TAU_FOLD = 1e-4


def degeneracy_threshold(hess_scale):
    """tau_det = 1e-6 (1 + ||hess||): scale-relative singularity cutoff."""
    return 1e-6 * (1.0 + abs(hess_scale))


@dataclass
class StationaryPointRecord:
    x: np.ndarray
    y: np.ndarray
    grad_norm: float
    lambda_min_abs: float
    degenerate: bool
    fold_class: str


@dataclass
class BifurcationScan:
    grid_resolution: int
    indicator: np.ndarray        # (R, R) bool, True = degenerate point located in cell
    lambda_min_grid: np.ndarray  # (R, R) min |lambda| over the cell's roots (nan if none)
    branch_points: List[StationaryPointRecord]
    bbox: tuple
    cell_size: tuple

    def cell_centers(self):
        (lo, hi) = self.bbox
        r = self.grid_resolution
        c1 = lo[0] + (np.arange(r) + 0.5) * (hi[0] - lo[0]) / r
        c2 = lo[1] + (np.arange(r) + 0.5) * (hi[1] - lo[1]) / r
        return c1, c2

    def marked_centers(self):
        c1, c2 = self.cell_centers()
        ii, jj = np.nonzero(self.indicator)
        return np.column_stack([c1[ii], c2[jj]])


@dataclass
class DimensionEstimate:
    radii: list
    counts: list
    slope: float
    d_hat: float
    r_squared_fit: float
    determined: bool = True


# ---------------------------------------------------------------------------
# Stationary-point location for m = 1
# ---------------------------------------------------------------------------

def _scalar_grad(problem, x, y):
    ybuf = np.array([y], dtype=float)
    return float(np.atleast_1d(problem.grad_y_g(x, ybuf))[0])


def _scalar_hess(problem, x, y):
    ybuf = np.array([y], dtype=float)
    return float(np.atleast_2d(problem.hess_yy_g(x, ybuf))[0, 0])


def _grad_on_grid(problem, x, ys, vectorized):
    """Gradient values on a y-grid; vectorized when the oracle broadcasts."""
    if vectorized:
        out = np.asarray(problem.grad_y_g(x, ys))
        if out.shape == ys.shape:
            return out, True
    out = np.empty_like(ys)
    for i, y in enumerate(ys):
        out[i] = _scalar_grad(problem, x, y)
    return out, False


def _probe_vectorized(problem, x, ys):
    try:
        out = np.asarray(problem.grad_y_g(x, ys[:4]))
        return out.shape == ys[:4].shape
    except Exception:
        return False


def _refine_root(problem, x, a, b, fa, fb):
    """Polish a bracketed sign change: bisection then guarded Newton."""
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    for _ in range(12):
        mid = 0.5 * (a + b)
        fm = _scalar_grad(problem, x, mid)
        if fm == 0.0:
            return mid
        if (fa < 0) == (fm < 0):
            a, fa = mid, fm
        else:
            b, fb = mid, fm
    y = 0.5 * (a + b)
    for _ in range(40):
        fy = _scalar_grad(problem, x, y)
        tol = 1e-12 * (1.0 + abs(y))
        if abs(fy) <= tol:
            return y
        hy = _scalar_hess(problem, x, y)
        if hy != 0.0:
            y_new = y - fy / hy
            if a <= y_new <= b:
                y = y_new
                continue
        # Newton left the bracket or curvature vanished: one bisection step
        if (fa < 0) == (fy < 0):
            a, fa = y, fy
        else:
            b, fb = y, fy
        if b - a <= 4.0 * np.spacing(max(abs(a), abs(b), 1.0)):
            break
        y = 0.5 * (a + b)
    return y


def _stationary_roots(problem, x, y_range, resolution, vectorized=None):
    """Sorted (y, grad, lambda) triples of the stationary points on y_range."""
    lo, hi = float(y_range[0]), float(y_range[1])
    ys = np.linspace(lo, hi, resolution)
    if vectorized is None:
        vectorized = _probe_vectorized(problem, x, ys)
    vals, _ = _grad_on_grid(problem, x, ys, vectorized)
    roots = []
    zero_hits = np.flatnonzero(vals == 0.0)
    for i in zero_hits:
        roots.append(float(ys[i]))
    sign_change = np.flatnonzero(vals[:-1] * vals[1:] < 0.0)
    for i in sign_change:
        roots.append(_refine_root(problem, x, ys[i], ys[i + 1],
                                  float(vals[i]), float(vals[i + 1])))
    roots.sort()
    min_gap = (hi - lo) / (10.0 * resolution)
    dedup = []
    for r in roots:
        if not dedup or r - dedup[-1] >= min_gap:
            dedup.append(r)
    out = []
    for r in dedup:
        gv = _scalar_grad(problem, x, r)
        if abs(gv) > 1e-10 * (1.0 + abs(r)):
            continue
        out.append((r, gv, _scalar_hess(problem, x, r)))
    return out


def _make_record(x, y, grad, lam):
    tau = degeneracy_threshold(lam)
    degenerate = abs(lam) < tau
    return StationaryPointRecord(
        x=np.asarray(x, dtype=float).copy(),
        y=np.array([y], dtype=float),
        grad_norm=abs(grad),
        lambda_min_abs=abs(lam),
        degenerate=degenerate,
        fold_class=UNDETERMINED if degenerate else NONDEGENERATE,
    )


def find_stationary_points_1d(problem, x, y_range, resolution) -> List[StationaryPointRecord]:
    """Stationary points of g(x, .) on y_range via grid bracketing + polish.

    Every reported root satisfies |grad_y g| <= 1e-10 (1 + |y|) on
    re-evaluation; roots closer than (hi - lo) / (10 resolution) are merged.
    """
    if problem.m != 1:
        raise ValueError("stationary-point scan requires m = 1")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return [_make_record(x, y, gv, lam)
            for (y, gv, lam) in _stationary_roots(problem, x, y_range, resolution)]


# ---------------------------------------------------------------------------
# Degenerate-point localization (2-variable Newton along a parameter segment)
# ---------------------------------------------------------------------------

def _hunt_degenerate(problem, xa, xb, y_seed, y_lo, y_hi):
    """Solve grad_y g = 0 = d2g/dy2 for (s, y) with x(s) = xa + s (xb - xa).

    Returns (x_star, y_star) or None.  Derivatives of the Hessian are central
    finite differences; the gradient's parameter derivative uses the
    cross-derivative oracle when available.
    """
    xa = np.asarray(xa, dtype=float)
    dx = np.asarray(xb, dtype=float) - xa
    seg = float(np.linalg.norm(dx))
    s, y = 0.5, float(y_seed)
    y_span = y_hi - y_lo
    cross = problem.grad_x_grad_y_g
    converged = False
    for _ in range(60):
        x = xa + s * dx
        gv = _scalar_grad(problem, x, y)
        hv = _scalar_hess(problem, x, y)
        if cross is not None:
            ybuf = np.array([y])
            dg_ds = float(np.atleast_2d(cross(x, ybuf))[0] @ dx)
        else:
            e = 1e-6
            dg_ds = (_scalar_grad(problem, xa + (s + e) * dx, y)
                     - _scalar_grad(problem, xa + (s - e) * dx, y)) / (2 * e)
        e = 1e-6
        dh_ds = (_scalar_hess(problem, xa + (s + e) * dx, y)
                 - _scalar_hess(problem, xa + (s - e) * dx, y)) / (2 * e)
        ey = 1e-6 * (1.0 + abs(y))
        dh_dy = (_scalar_hess(problem, x, y + ey)
                 - _scalar_hess(problem, x, y - ey)) / (2 * ey)
        J = np.array([[dg_ds, hv], [dh_ds, dh_dy]])
        try:
            step = np.linalg.solve(J, -np.array([gv, hv]))
        except np.linalg.LinAlgError:
            return None
        # clamp to keep the iteration near the segment and the scan window
        ds = float(np.clip(step[0], -0.75, 0.75))
        dy = float(np.clip(step[1], -0.5 * y_span, 0.5 * y_span))
        s, y = s + ds, y + dy
        if not (-0.6 <= s <= 1.6) or not (y_lo - 0.1 * y_span <= y <= y_hi + 0.1 * y_span):
            return None
        if abs(ds) <= 1e-13 * (1.0 + abs(s)) and abs(dy) <= 1e-13 * (1.0 + abs(y)):
            converged = True
            break
    if not converged:
        return None
    x = xa + s * dx
    gv = _scalar_grad(problem, x, y)
    hv = _scalar_hess(problem, x, y)
    if abs(gv) > 1e-9 * (1.0 + abs(y)):
        return None
    if abs(hv) >= degeneracy_threshold(hv):
        return None
    if not (-0.05 <= s <= 1.05):
        return None
    return x, y, gv, hv


def _collision_seed(roots_more, y_lo, y_hi, edge):
    """Midpoint of the closest opposite-curvature root pair; None near edges
    (a root entering through the window boundary is not a bifurcation)."""
    best = None
    for (y1, _, l1), (y2, _, l2) in zip(roots_more[:-1], roots_more[1:]):
        if l1 * l2 < 0:
            gap = y2 - y1
            if best is None or gap < best[0]:
                best = (gap, 0.5 * (y1 + y2))
    if best is None:
        return None
    if best[1] < y_lo + edge or best[1] > y_hi - edge:
        return None
    return best[1]


def scan_bifurcation_set(problem, grid_resolution, y_range, y_resolution) -> BifurcationScan:
    """Grid scan over a 2-d parameter box marking cells that contain a located
    degenerate stationary point; emits all stationary records found."""
    if problem.n != 2 or problem.m != 1:
        raise ValueError("scanner requires n = 2, m = 1")
    if grid_resolution < 2:
        raise ValueError("grid_resolution must be at least 2")
    if y_resolution < 2:
        raise ValueError("y_resolution must be at least 2")
    lo, hi = problem.feasible_set.bbox
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    r = grid_resolution
    w = (hi - lo) / r
    c1 = lo[0] + (np.arange(r) + 0.5) * w[0]
    c2 = lo[1] + (np.arange(r) + 0.5) * w[1]
    y_lo, y_hi = float(y_range[0]), float(y_range[1])

    probe_x = np.array([c1[0], c2[0]])
    vectorized = _probe_vectorized(problem, probe_x, np.linspace(y_lo, y_hi, 8))

    roots = {}
    indicator = np.zeros((r, r), dtype=bool)
    lam_grid = np.full((r, r), np.nan)
    records: List[StationaryPointRecord] = []
    for i in range(r):
        for j in range(r):
            x = np.array([c1[i], c2[j]])
            rs = _stationary_roots(problem, x, (y_lo, y_hi), y_resolution,
                                   vectorized=vectorized)
            roots[(i, j)] = rs
            if rs:
                lam_grid[i, j] = min(abs(l) for (_, _, l) in rs)
            for (y, gv, lam) in rs:
                rec = _make_record(x, y, gv, lam)
                records.append(rec)
                if rec.degenerate:
                    indicator[i, j] = True

    # hunt for degenerate points wherever the root count changes between
    # neighboring cells (the measure-zero set a center grid cannot hit)
    found = {}

    edge = 2.0 * (y_hi - y_lo) / y_resolution

    def consider(ia, ja, ib, jb):
        ra, rb = roots[(ia, ja)], roots[(ib, jb)]
        if len(ra) == len(rb):
            return
        more = ra if len(ra) > len(rb) else rb
        seed = _collision_seed(more, y_lo, y_hi, edge)
        if seed is None:
            return
        xa = np.array([c1[ia], c2[ja]])
        xb = np.array([c1[ib], c2[jb]])
        hit = _hunt_degenerate(problem, xa, xb, seed, y_lo, y_hi)
        if hit is None:
            return
        x_star, y_star, gv, hv = hit
        key = (round(float(x_star[0]) / 1e-9), round(float(x_star[1]) / 1e-9))
        if key in found:
            return
        found[key] = True
        rec = _make_record(x_star, y_star, gv, hv)
        if not rec.degenerate:
            return
        records.append(rec)
        ii = min(int((x_star[0] - lo[0]) / w[0]), r - 1)
        jj = min(int((x_star[1] - lo[1]) / w[1]), r - 1)
        indicator[max(ii, 0), max(jj, 0)] = True

    for i in range(r - 1):
        for j in range(r):
            consider(i, j, i + 1, j)
    for i in range(r):
        for j in range(r - 1):
            consider(i, j, i, j + 1)

    return BifurcationScan(
        grid_resolution=r,
        indicator=indicator,
        lambda_min_grid=lam_grid,
        branch_points=records,
        bbox=(lo, hi),
        cell_size=(float(w[0]), float(w[1])),
    )


# ---------------------------------------------------------------------------
# Fold-condition classification
# ---------------------------------------------------------------------------

def check_fold_conditions(problem, record: StationaryPointRecord,
                          fd_step: float = TAU_FOLD) -> str:
    """Classify a degenerate stationary point against the three fold conditions:
    simple zero eigenvalue, transversal parameter dependence of the projected
    gradient, and nonzero third derivative along the null direction.

    Finite differences cannot certify a value is nonzero, so values inside
    (tau_fold/10, tau_fold) return UNDETERMINED rather than a binary answer.
    """
    if not record.degenerate:
        raise ValueError("fold check requires a degenerate record")
    x = np.asarray(record.x, dtype=float)
    y = np.asarray(record.y, dtype=float)
    H = np.atleast_2d(np.asarray(problem.hess_yy_g(x, y), dtype=float))
    evals, evecs = np.linalg.eigh(0.5 * (H + H.T))
    order = np.argsort(np.abs(evals))
    v = evecs[:, order[0]]
    tau_det = degeneracy_threshold(float(np.max(np.abs(H))))

    # (1) exactly one zero eigenvalue
    if problem.m >= 2 and abs(evals[order[1]]) < 10.0 * tau_det:
        return NON_FOLD_DEGENERATE

    # (2) parameter derivative of grad_y g projected on v
    if problem.grad_x_grad_y_g is not None:
        J = np.atleast_2d(np.asarray(problem.grad_x_grad_y_g(x, y), dtype=float))
        w = J.T @ v
    else:
        w = np.empty(problem.n)
        for i in range(problem.n):
            h = fd_step * (1.0 + abs(x[i]))
            xp = x.copy(); xp[i] += h
            xm = x.copy(); xm[i] -= h
            w[i] = float((np.asarray(problem.grad_y_g(xp, y))
                          - np.asarray(problem.grad_y_g(xm, y))) @ v) / (2 * h)
    c2_val = float(np.linalg.norm(w))

    # (3) third directional derivative along v, 5-point stencil
    h = fd_step * (1.0 + float(np.linalg.norm(y)))
    psi = lambda s: float(problem.g(x, y + s * v))
    c3_val = abs((psi(2 * h) - 2 * psi(h) + 2 * psi(-h) - psi(-2 * h)) / (2 * h ** 3))

    if c2_val >= TAU_FOLD and c3_val >= TAU_FOLD:
        return FOLD
    if c2_val <= TAU_FOLD / 10 or c3_val <= TAU_FOLD / 10:
        return NON_FOLD_DEGENERATE
    return UNDETERMINED


# ---------------------------------------------------------------------------
# Covering statistics
# ---------------------------------------------------------------------------

def box_counting_dimension(points, radii) -> DimensionEstimate:
    """Box-cover estimate of the Minkowski dimension: occupied axis-aligned
    boxes of side 2r at each radius, least-squares slope of log N vs -log r."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.size == 0:
        raise ValueError("points must be nonempty")
    radii = [float(r) for r in radii]
    if len(radii) < 2 or any(r <= 0 for r in radii):
        raise ValueError("need at least two positive radii")
    if any(r2 >= r1 for r1, r2 in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly decreasing")
    origin = points.min(axis=0)
    counts = []
    for r in radii:
        cells = np.floor((points - origin) / (2.0 * r)).astype(np.int64)
        counts.append(int(np.unique(cells, axis=0).shape[0]))
    if len(set(counts)) < 2:
        return DimensionEstimate(radii, counts, float("nan"), float("nan"),
                                 float("nan"), determined=False)
    lx = np.log(np.asarray(radii))
    ly = np.log(np.asarray(counts, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    fit = slope * lx + intercept
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DimensionEstimate(radii, counts, float(slope), float(-slope), r2)


def neighborhood_measure(scan: BifurcationScan, deltas):
    """Lebesgue measure estimates of the delta-neighborhoods of the marked set:
    grid cells whose center lies within delta of a marked cell, times cell area."""
    if not scan.indicator.any():
        raise ValueError("scan has no marked cells")
    w1, w2 = scan.cell_size
    dist = ndimage.distance_transform_edt(~scan.indicator, sampling=(w1, w2))
    area = w1 * w2
    out = []
    for d in deltas:
        out.append((float(d), float(np.count_nonzero(dist <= d) * area)))
    return out
