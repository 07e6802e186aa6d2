"""Feasible descent direction subproblems.

Stage 1 solves  min_d max_t g_t.d  and stage 2 solves  min_d min_t g_t.d,
both subject to staying feasible at point + d, keeping every directional
derivative nonpositive, and a unit norm cap.  Stage 1 certifies weak
Pareto stationarity (no common strict descent), stage 2 the stronger
Pareto stationarity (no single-objective strict descent).

The norm cap defaults to the max-norm box so each subproblem is a plain
LP; the returned direction is then rescaled onto the Euclidean ball,
which preserves feasibility and derivative signs by convexity.  An exact
Euclidean mode is available behind ``exact_l2``: it grows supporting
hyperplane cuts of the ball around the LP and finishes with a projected
polish step so ball-active optima come out at full precision.

Both stages refine the optimal vertex deterministically.  Stage 1
maximizes the aggregate descent rate subject to the certified optimum
(the balance pass), so no objective is left with an arbitrarily
assigned vertex component.  Stage 2 faces a harder geometry: its exact
vertex typically pins the other objectives' derivatives at exactly
zero, where any curvature blocks the step rule.  It therefore scores a
pool of equally certified directions (the exact vertex, support
confined rays including a quasi-Newton jump at the winner's block
minimizer, and a ladder of worst-derivative rebalances that concede a
sliver of the winning rate) by a one-step progress model and hands
back the best mover.  The stationarity verdict is always taken from
the exact optimum, never the reselected vertex.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .linesearch import derivative_forgiveness
from .lp import LpProblem, LpSolution, LpStatus, solve_lp
from .minnorm import min_norm_point
from .model import ContractViolation, ProblemSpec, constraint_values, finite_difference_gradient

RELAX_ONCE = 1e-10


class DirectionStatus(enum.Enum):
    DESCENT = "descent"
    STATIONARY = "stationary"
    SUBPROBLEM_FAILED = "subproblem_failed"


class RowMode(enum.Enum):
    EXACT_LINEAR = "exact_linear"
    LINEARIZED = "linearized"


@dataclass(frozen=True)
class DirectionOptions:
    stationarity_tol: float = 1e-7
    feas_tol: float = 1e-8
    eta_lin: float = 0.1
    exact_l2: bool = False
    linearize: bool | None = None  # None = use exact rows when available
    balance_pass: bool = True
    max_cuts: int = 400
    cut_tol: float = 1e-10


@dataclass(frozen=True)
class DirectionResult:
    """Direction d with its certificate eta, measured at the returned d."""

    d: np.ndarray
    eta: float
    status: DirectionStatus
    stage: int
    message: str = ""


def norm_postscale(d: np.ndarray) -> np.ndarray:
    """Scale d onto the Euclidean unit ball: d / max(1, |d|_2)."""
    d = np.asarray(d, dtype=float)
    nrm = float(np.linalg.norm(d))
    return d / nrm if nrm > 1.0 else d.copy()


def build_constraint_rows(
    problem: ProblemSpec,
    point: np.ndarray,
    mode: RowMode = RowMode.EXACT_LINEAR,
    eta_lin: float = 0.1,
) -> tuple[np.ndarray, np.ndarray]:
    """Linear rows over the step d enforcing constraint feasibility.

    Exact mode translates A(point + d) <= b into A d <= b - A point and is
    valid for affine constraints only.  Linearized mode emits
    grad f_i(point) . d <= -f_i(point) / eta_lin, a first-order surrogate
    whose aggressiveness grows as eta_lin shrinks.
    """
    point = np.asarray(point, dtype=float)
    m = problem.n_constraints
    if m == 0:
        return np.zeros((0, problem.dimension)), np.zeros(0)
    if mode == RowMode.EXACT_LINEAR:
        if problem.linear_constraints is None:
            raise ContractViolation("exact rows need a linear constraint view")
        lc = problem.linear_constraints
        return lc.a.copy(), lc.b - lc.a @ point
    if eta_lin <= 0:
        raise ContractViolation("eta_lin must be positive")
    values = constraint_values(problem, point)
    rows = np.zeros((m, problem.dimension))
    for i, con in enumerate(problem.constraints):
        grad = con.gradient or finite_difference_gradient(con.value)
        rows[i] = np.asarray(grad(point), dtype=float)
    return rows, -values / eta_lin


def stage1_direction(
    problem: ProblemSpec,
    point: np.ndarray,
    gradients: np.ndarray,
    opts: DirectionOptions = DirectionOptions(),
) -> DirectionResult:
    """Balanced common-descent direction (epigraph form of the min-max)."""
    g, rows, rhs, lo_d, hi_d = _setup(problem, point, gradients, opts)
    n, dim = g.shape

    if opts.exact_l2:
        return _stage1_exact(g, rows, rhs, lo_d, hi_d, opts)

    a_ub = np.vstack([
        np.hstack([g, -np.ones((n, 1))]),
        np.hstack([_unit_rows(g), np.zeros((n, 1))]),
        np.hstack([rows, np.zeros((rows.shape[0], 1))]),
    ])
    b_ub = np.concatenate([np.zeros(2 * n), rhs])
    c = np.zeros(dim + 1)
    c[-1] = 1.0
    lo = np.append(lo_d, -np.inf)
    hi = np.append(hi_d, np.inf)
    sol = _solve_relaxed(LpProblem(c=c, a_ub=a_ub, b_ub=b_ub, lower=lo, upper=hi),
                         relax_mask=_geometry_mask(2 * n, rhs.size))
    if sol.status != LpStatus.OPTIMAL:
        return DirectionResult(np.zeros(dim), np.nan, DirectionStatus.SUBPROBLEM_FAILED, 1,
                               f"stage-1 LP {sol.status.value}")
    eta_lp = float(sol.objective)
    d = sol.x[:dim]
    if eta_lp >= -opts.stationarity_tol:
        return DirectionResult(np.zeros(dim), eta_lp, DirectionStatus.STATIONARY, 1)

    if opts.balance_pass:
        slack = eta_lp + 1e-9 * (1.0 + abs(eta_lp))
        d = _balance(g, rows, rhs, lo_d, hi_d, cap=g, cap_rhs=np.full(n, slack), fallback=d)
    return _finish(g, d, stage=1, opts=opts)


def stage2_direction(
    problem: ProblemSpec,
    point: np.ndarray,
    gradients: np.ndarray,
    opts: DirectionOptions = DirectionOptions(),
) -> DirectionResult:
    """Best single-objective descent direction, one LP per objective."""
    g, rows, rhs, lo_d, hi_d = _setup(problem, point, gradients, opts)
    n, dim = g.shape

    if opts.exact_l2:
        return _stage2_exact(g, rows, rhs, lo_d, hi_d, opts)

    a_ub = np.vstack([_unit_rows(g), rows])
    b_ub = np.concatenate([np.zeros(n), rhs])
    # Box-only relaxation bounds each LP from below; rows only raise the
    # optimum, so a k that cannot beat the incumbent is skipped exactly.
    box_lb = np.minimum(g * lo_d, g * hi_d).sum(axis=1)
    best_val = np.inf
    best_k = -1
    best_d = np.zeros(dim)
    failures = []
    mask = _geometry_mask(n, rhs.size)
    for k in range(n):
        if box_lb[k] >= best_val - 1e-12:
            continue
        sol = _solve_relaxed(LpProblem(c=g[k], a_ub=a_ub, b_ub=b_ub, lower=lo_d, upper=hi_d),
                             relax_mask=mask)
        if sol.status != LpStatus.OPTIMAL:
            failures.append(f"objective {k}: {sol.status.value}")
            continue
        if sol.objective < best_val - 1e-12:
            best_val = float(sol.objective)
            best_k = k
            best_d = sol.x
    if best_k < 0:
        return DirectionResult(np.zeros(dim), np.nan, DirectionStatus.SUBPROBLEM_FAILED, 2,
                               "; ".join(failures))
    if best_val >= -opts.stationarity_tol:
        return DirectionResult(np.zeros(dim), best_val, DirectionStatus.STATIONARY, 2)

    if opts.balance_pass:
        best_d = _select_vertex(problem, point, g, best_k, best_val, rows, rhs,
                                lo_d, hi_d, fallback=best_d)
    return _finish(g, best_d, stage=2, opts=opts)


# ---------------------------------------------------------------------------


def _setup(problem, point, gradients, opts):
    g = np.atleast_2d(np.asarray(gradients, dtype=float))
    if not np.all(np.isfinite(g)):
        raise ContractViolation("gradients contain NaN or inf")
    if g.shape != (problem.n_objectives, problem.dimension):
        raise ContractViolation("gradient matrix shape mismatch")
    point = np.asarray(point, dtype=float)

    use_linear = opts.linearize
    if use_linear is None:
        use_linear = not problem.is_linear
    mode = RowMode.LINEARIZED if use_linear else RowMode.EXACT_LINEAR
    rows, rhs = build_constraint_rows(problem, point, mode, opts.eta_lin)

    lo_d = -np.ones(problem.dimension)
    hi_d = np.ones(problem.dimension)
    if problem.variable_bounds is not None:
        vb = problem.variable_bounds
        lo_d = np.maximum(lo_d, vb.lower - point)
        hi_d = np.minimum(hi_d, vb.upper - point)
        lo_d = np.minimum(lo_d, hi_d)
    return g, rows, rhs, lo_d, hi_d


def _geometry_mask(n_hold: int, n_geom: int, n_tail: int = 0) -> np.ndarray:
    """Relax eligibility: geometry rows between exact hold and tail blocks."""
    return np.concatenate([np.zeros(n_hold, dtype=bool),
                           np.ones(n_geom, dtype=bool),
                           np.zeros(n_tail, dtype=bool)])


def _unit_rows(g: np.ndarray) -> np.ndarray:
    """Rescale each row to unit norm; rows of a homogeneous system scale freely.

    The simplex certifies rows to an absolute residual, so a hold row
    whose gradient is orders of magnitude below the rest would otherwise
    carry noise larger than its own scale.
    """
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    return np.divide(g, nrm, out=np.zeros_like(g), where=nrm > 0.0)


def _solve_relaxed(lp: LpProblem, relax_mask: np.ndarray | None = None):
    """Solve, retrying once with a hair of slack on knife-edge geometry.

    ``relax_mask`` marks the rows eligible for the retry bump: geometry
    rows carry iterate roundoff in their right-hand sides, while
    homogeneous hold rows are exact and must stay tight or the retry
    would license a spurious ascent of that hold's objective.  Numerical
    breakdown (basis drift beyond repair) is treated like infeasibility:
    the relaxed instance separates the degenerate vertex and usually
    solves cleanly; when even that fails the caller sees a non-optimal
    status rather than an exception.
    """
    try:
        sol = solve_lp(lp)
    except ContractViolation:
        sol = None
    if sol is not None and sol.status != LpStatus.INFEASIBLE:
        return sol
    bump = RELAX_ONCE if relax_mask is None else RELAX_ONCE * relax_mask
    try:
        relaxed = solve_lp(LpProblem(c=lp.c, a_ub=lp.a_ub, b_ub=lp.b_ub + bump,
                                     lower=lp.lower, upper=lp.upper))
    except ContractViolation:
        relaxed = None
    if relaxed is not None:
        return relaxed
    if sol is not None:
        return sol
    return LpSolution(LpStatus.INFEASIBLE, None, float("nan"))


def _balance(g, rows, rhs, lo_d, hi_d, cap, cap_rhs, fallback):
    """Among optimal directions, pick the one with best aggregate descent."""
    cap_nrm = np.linalg.norm(cap, axis=1)
    keep = cap_nrm > 0.0
    a_ub = np.vstack([cap[keep] / cap_nrm[keep, None], _unit_rows(g), rows])
    b_ub = np.concatenate([cap_rhs[keep] / cap_nrm[keep], np.zeros(g.shape[0]), rhs])
    try:
        sol = solve_lp(LpProblem(c=g.sum(axis=0), a_ub=a_ub, b_ub=b_ub,
                                 lower=lo_d, upper=hi_d))
    except ContractViolation:
        return fallback
    if sol.status == LpStatus.OPTIMAL:
        return sol.x
    return fallback


def _axis_ray(g, best_k, j, rows, rhs, lo_d, hi_d):
    """Longest feasible single-coordinate descent ray for the winner.

    Returns t*sgn*e_j with t the largest length the box, the rows, and
    the other objectives' nonpositivity holds admit, or None when the
    axis is blocked (an exact-zero length or an adverse hold).
    """
    sgn = -np.sign(g[best_k, j])
    if sgn == 0.0:
        return None
    if np.any(g[:, j] * sgn > 0.0):
        return None
    t = hi_d[j] if sgn > 0 else -lo_d[j]
    if rows.size:
        load = rows[:, j] * sgn
        hit = load > 0.0
        if hit.any():
            t = min(t, float(np.min(rhs[hit] / load[hit])))
    if t <= 1e-12:
        return None
    d = np.zeros(g.shape[1])
    d[j] = sgn * t
    return d


def _progress(problem, point, g, rate, d):
    """One-step progress estimate for the winner along d, quadratic-exact.

    The step rule stops where the first objective's derivative crosses
    its forgiveness slack, so the estimate is |rate| times the earliest
    predicted crossing over all objectives (curvatures sampled with one
    extra gradient pass), clipped at 1 because rays are already scaled
    to their feasibility cap.  An objective already ascending at the
    point zeroes the score outright.
    """
    rates = g @ d
    d_norm = float(np.linalg.norm(d))
    probe = point + 1e-4 * d
    h_cross = 1.0
    for t, obj in enumerate(problem.objectives):
        curv = (float(np.asarray(obj.gradient(probe)) @ d) - rates[t]) * 1e4
        tol = derivative_forgiveness(float(np.linalg.norm(g[t])), d_norm)
        if rates[t] > tol:
            return 0.0
        if curv > 0.0:
            h_cross = min(h_cross, (tol - rates[t]) / curv)
    return -rate * h_cross


def _sample_hessian(problem, point, w, c0, idx):
    """Gradient-difference Hessian of the `w`-weighted objective sum.

    Sampled on the `idx` columns only; `c0` is the weighted gradient at
    the point.  Exact for quadratics up to roundoff.
    """
    live = np.flatnonzero(w != 0.0)
    h_mat = np.empty((idx.size, idx.size))
    for col, j in enumerate(idx):
        eps = 1e-4 * (1.0 + abs(float(point[j])))
        probe = point.copy()
        probe[j] += eps
        gp = np.zeros(point.size)
        for t in live:
            gp += w[t] * np.asarray(problem.objectives[t].gradient(probe))
        h_mat[:, col] = (gp - c0)[idx] / eps
    return 0.5 * (h_mat + h_mat.T)


def _newton_ray(problem, point, g, best_k, support, rows, rhs, lo_d, hi_d,
                weights=None, hold_walls=True):
    """Confined quasi-Newton ray on the given coordinate support.

    Minimizes the quadratic model of one scalar surrogate: the winner's
    objective by default, or the `weights` combination when given (the
    sum of still-moving objectives, whose minimizer every objective
    descends toward on convex problems).  The Hessian is sampled by
    gradient differences, exact for the quadratic fits this path exists
    for.  With hold_walls, rows already tight at the point are held as
    equalities: the model is minimized on their nullspace, so the ray
    walks along a wall instead of being clipped to nothing by it.
    Without, the ray aims at the free minimizer; from a wall-face
    optimum that jump steps off the walls (its load on them is
    negative), the release no face-bound direction can perform.  Loose
    rows, the bounds, and the unit box clip the length.  Rejected
    unless the winner strictly descends, every other objective's
    derivative along it stays at roundoff, and the reduced Hessian is
    positive definite.
    """
    idx = np.flatnonzero(support)
    if idx.size > 256:
        return None
    w = np.zeros(g.shape[0])
    if weights is None:
        w[best_k] = 1.0
    else:
        w[:] = weights
    c0 = w @ g
    h_mat = _sample_hessian(problem, point, w, c0, idx)
    loose = np.ones(rows.shape[0], dtype=bool) if rows.size else np.zeros(0, dtype=bool)
    basis = np.eye(idx.size)
    if rows.size and hold_walls:
        act_tol = 1e-7 * max(1.0, float(np.abs(rhs).max()))
        loose = rhs > act_tol
        a_sub = rows[~loose][:, idx]
        a_sub = a_sub[np.abs(a_sub).max(axis=1) > 0.0] if a_sub.size else a_sub
        if a_sub.size:
            _, sv, vt = np.linalg.svd(a_sub)
            rank = int(np.sum(sv > 1e-10 * sv[0]))
            if rank >= idx.size:
                return None
            basis = vt[rank:].T
    h_red = basis.T @ h_mat @ basis
    try:
        np.linalg.cholesky(h_red)
    except np.linalg.LinAlgError:
        return None
    d_sub = basis @ np.linalg.solve(h_red, -basis.T @ c0[idx])
    d = np.zeros(g.shape[1])
    d[idx] = d_sub
    scale = float(np.abs(d).max())
    if scale <= 0.0 or not np.isfinite(scale):
        return None
    gd = g @ d
    if float(gd[best_k]) >= 0.0:
        return None
    slack = 1e-13 * np.linalg.norm(g, axis=1) * float(np.linalg.norm(d))
    if np.any(gd > slack):
        return None
    cap = 1.0
    for j in np.flatnonzero(d):
        bound = hi_d[j] if d[j] > 0 else lo_d[j]
        cap = min(cap, bound / d[j])
    if rows.size and loose.any():
        load = rows[loose] @ d
        hit = load > 0.0
        if hit.any():
            cap = min(cap, float(np.min(rhs[loose][hit] / load[hit])))
    if cap <= 1e-12:
        return None
    return cap * d


def _manifold_ray(problem, point, g, best_k, gmax, active, rows, rhs, lo_d, hi_d):
    """Descent ray inside converged objectives' flat curvature manifolds.

    An active objective whose gradient is orders of magnitude below the
    others has reached its floor in every direction its curvature spans:
    its linear hold is nearly vacuous, yet any step leaving its flat
    manifold is capped at roundoff length by that curvature.  This ray
    re-solves the winner's LP with the dominant eigendirections of each
    such objective's sampled Hessian pinned to zero, so the walk trades
    the remaining objectives at full polytope scale while the converged
    one rides its floor.  Returns None when no objective is pinned, the
    dimension is impractical for sampling, a pinned Hessian has no flat
    directions, or the confined LP yields no strict descent.
    """
    pinned = np.flatnonzero(active & (gmax <= 1e-4 * float(gmax.max())))
    dim = g.shape[1]
    if pinned.size == 0 or dim > 256:
        return None
    idx = np.arange(dim)
    planes = []
    for t in pinned:
        w = np.zeros(g.shape[0])
        w[t] = 1.0
        h_mat = _sample_hessian(problem, point, w, g[t], idx)
        lam, vec = np.linalg.eigh(h_mat)
        lam_max = float(lam[-1])
        if lam_max <= 0.0:
            continue
        keep = lam > 1e-6 * lam_max
        if keep.all():
            continue
        planes.append(vec[:, keep].T)
    if not planes:
        return None
    u = np.vstack(planes)
    a_ub = np.vstack([_unit_rows(g), rows, u, -u])
    b_ub = np.concatenate([np.zeros(g.shape[0]), rhs, np.zeros(2 * u.shape[0])])
    sol = _solve_relaxed(LpProblem(c=g[best_k], a_ub=a_ub, b_ub=b_ub,
                                   lower=lo_d, upper=hi_d),
                         relax_mask=_geometry_mask(g.shape[0], rhs.size,
                                                   2 * u.shape[0]))
    if sol.status != LpStatus.OPTIMAL or float(sol.objective) >= 0.0:
        return None
    return sol.x


def _select_vertex(problem, point, g, best_k, best_val, rows, rhs, lo_d, hi_d,
                   fallback):
    """Swap the winning LP's vertex for one the step rule can use.

    An exact minimizer generically pins the other objectives'
    derivatives at exactly zero (their nonpositivity rows bind), and
    along such a direction any curvature immediately turns those
    derivatives positive, capping the monotone step at roundoff scale.
    A pool of equally certified directions competes instead:

    * the exact vertex itself;
    * directions confined to the winner's gradient support, along which
      disjoint-block objectives are exactly constant: the confined LP
      vertex, every single-axis ray the holds and rows allow, and a
      quasi-Newton ray that jumps at the winner's block minimizer
      (walls held as equalities);
    * a joint quasi-Newton ray toward the minimizer of the sum of
      still-moving objectives, which on convex problems every objective
      descends toward, so it clears coupled walls no single block can;
    * a flat-manifold ray that pins the dominant curvature directions
      of any near-converged objective to zero, letting the others trade
      at polytope scale while the converged one rides its floor;
    * a concession ladder (1e-4, 1e-2, 1 relative on the winning rate)
      that re-minimizes the worst derivative over the conceded set,
      confined to the union support of objectives still moving; the
      last rung is the balanced min-max direction.

    The winner is the candidate with the best one-step progress
    estimate: winning rate times the earliest predicted derivative
    crossing over all objectives, which prices in the drag a candidate
    puts on the others.  The stationarity verdict never comes from
    here; callers decide it on the exact optimum first.
    """
    n, dim = g.shape
    gmax = np.abs(g).max(axis=1)
    if gmax.max() <= 0.0:
        return fallback
    candidates = [(float(g[best_k] @ fallback), fallback)]
    support = np.abs(g[best_k]) > 1e-12 * float(np.abs(g[best_k]).max())
    if support.any() and not support.all():
        a_s = np.vstack([_unit_rows(g), rows])
        b_s = np.concatenate([np.zeros(n), rhs])
        sol = _solve_relaxed(LpProblem(c=g[best_k], a_ub=a_s, b_ub=b_s,
                                       lower=np.where(support, lo_d, 0.0),
                                       upper=np.where(support, hi_d, 0.0)),
                             relax_mask=_geometry_mask(n, rhs.size))
        if sol.status == LpStatus.OPTIMAL and sol.objective < 0.0:
            candidates.append((float(sol.objective), sol.x))
        for j in np.flatnonzero(support):
            d_ax = _axis_ray(g, best_k, j, rows, rhs, lo_d, hi_d)
            if d_ax is not None:
                rate = float(g[best_k] @ d_ax)
                if rate < 0.0:
                    candidates.append((rate, d_ax))
    d_nt = _newton_ray(problem, point, g, best_k, support, rows, rhs,
                       lo_d, hi_d)
    if d_nt is not None:
        candidates.append((float(g[best_k] @ d_nt), d_nt))
    # converged objectives contribute nothing but curvature drag, so the
    # ladder works on the union support of the still-moving ones
    active = gmax > 1e-9 * float(gmax.max())
    col_ok = (np.abs(g[active]) > 1e-12 * gmax[active, None]).any(axis=0)
    if int(active.sum()) > 1:
        for hold in (True, False):
            d_sn = _newton_ray(problem, point, g, best_k, col_ok, rows, rhs,
                               lo_d, hi_d, weights=active.astype(float),
                               hold_walls=hold)
            if d_sn is not None:
                rate = float(g[best_k] @ d_sn)
                if rate < 0.0:
                    candidates.append((rate, d_sn))
    d_mf = _manifold_ray(problem, point, g, best_k, gmax, active, rows, rhs,
                         lo_d, hi_d)
    if d_mf is not None:
        candidates.append((float(g[best_k] @ d_mf), d_mf))
    lo_l = np.where(col_ok, lo_d, 0.0)
    hi_l = np.where(col_ok, hi_d, 0.0)
    c = np.zeros(dim + 1)
    c[-1] = 1.0
    lo = np.append(lo_l, -np.inf)
    hi = np.append(hi_l, np.inf)
    a_ub = np.vstack([
        np.hstack([g, -np.ones((n, 1))]),
        np.hstack([_unit_rows(g), np.zeros((n, 1))]),
        np.hstack([g[best_k:best_k + 1], np.zeros((1, 1))]),
        np.hstack([rows, np.zeros((rows.shape[0], 1))]),
    ])
    for beta in (1e-4, 1e-2, 1.0):
        b_ub = np.concatenate([np.zeros(2 * n), [best_val * (1.0 - beta)], rhs])
        sol = _solve_relaxed(LpProblem(c=c, a_ub=a_ub, b_ub=b_ub, lower=lo, upper=hi),
                             relax_mask=_geometry_mask(2 * n + 1, rhs.size))
        if sol.status == LpStatus.OPTIMAL:
            d_r = sol.x[:dim]
            rate = float(g[best_k] @ d_r)
            if rate < 0.0:
                candidates.append((rate, d_r))
    return max(candidates, key=lambda cand: _progress(problem, point, g, *cand))[1]


def _finish(g, d, stage, opts):
    # the stationarity verdict was already decided from the exact LP
    # optimum; here eta is only remeasured at the direction handed back
    d = norm_postscale(d)
    derivs = g @ d
    eta = float(derivs.max()) if stage == 1 else float(derivs.min())
    return DirectionResult(d, eta, DirectionStatus.DESCENT, stage)


# ---- exact Euclidean ball mode --------------------------------------------


def _cut_loop(c, base_rows, base_rhs, lo, hi, dim, opts, eta_col: bool,
              base_mask: np.ndarray):
    """LP outer approximation of the ball by supporting hyperplanes."""
    cuts: list[np.ndarray] = []
    sol = None
    for _ in range(opts.max_cuts):
        if cuts:
            cut_rows = np.vstack(cuts)
            if eta_col:
                cut_rows = np.hstack([cut_rows, np.zeros((cut_rows.shape[0], 1))])
            a_ub = np.vstack([base_rows, cut_rows])
            b_ub = np.concatenate([base_rhs, np.ones(len(cuts))])
        else:
            a_ub, b_ub = base_rows, base_rhs
        mask = np.concatenate([base_mask, np.zeros(len(cuts), dtype=bool)])
        sol = _solve_relaxed(LpProblem(c=c, a_ub=a_ub, b_ub=b_ub, lower=lo, upper=hi),
                             relax_mask=mask)
        if sol.status != LpStatus.OPTIMAL:
            return sol, None
        d = sol.x[:dim]
        nrm = float(np.linalg.norm(d))
        if nrm <= 1.0 + opts.cut_tol:
            break
        cuts.append(d / nrm)
    return sol, sol.x[:dim]


def _null_projector(rows_active: np.ndarray, dim: int) -> np.ndarray:
    if rows_active.size == 0:
        return np.eye(dim)
    u, s, vt = np.linalg.svd(rows_active, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * (s[0] if s.size else 1.0)))
    v = vt[:rank]
    return np.eye(dim) - v.T @ v


def _active_homogeneous(rows, rhs, d, tol=1e-7):
    if rows.shape[0] == 0:
        return np.zeros((0, d.size))
    scale = 1.0 + np.abs(rhs)
    slack = rhs - rows @ d
    mask = (np.abs(slack) <= tol * scale) & (np.abs(rhs) <= 1e-12)
    return rows[mask]


def _rows_feasible(rows, rhs, d, tol=1e-9):
    if rows.shape[0] == 0:
        return True
    return bool(np.all(rows @ d <= rhs + tol * (1.0 + np.abs(rhs))))


def _stage1_exact(g, rows, rhs, lo_d, hi_d, opts):
    n, dim = g.shape
    base = np.vstack([
        np.hstack([g, -np.ones((n, 1))]),
        np.hstack([_unit_rows(g), np.zeros((n, 1))]),
        np.hstack([rows, np.zeros((rows.shape[0], 1))]),
    ])
    base_rhs = np.concatenate([np.zeros(2 * n), rhs])
    c = np.zeros(dim + 1)
    c[-1] = 1.0
    lo = np.append(lo_d, -np.inf)
    hi = np.append(hi_d, np.inf)
    sol, d_lp = _cut_loop(c, base, base_rhs, lo, hi, dim, opts, eta_col=True,
                          base_mask=_geometry_mask(2 * n, rhs.size))
    if d_lp is None:
        return DirectionResult(np.zeros(dim), np.nan, DirectionStatus.SUBPROBLEM_FAILED, 1,
                               f"stage-1 cut LP {sol.status.value}")
    eta_lp = float(sol.objective)  # lower bound on the ball optimum
    if eta_lp >= -opts.stationarity_tol:
        return DirectionResult(np.zeros(dim), eta_lp, DirectionStatus.STATIONARY, 1)

    d_fallback = norm_postscale(d_lp)
    proj = _null_projector(_active_homogeneous(rows, rhs, d_fallback), dim)
    mnp = min_norm_point(g @ proj, tol=1e-12)
    d_final = d_fallback
    if mnp.norm_sq > 1e-20:
        d_polish = -mnp.w / np.linalg.norm(mnp.w)
        eta_polish = float(np.max(g @ d_polish))
        if (
            _rows_feasible(rows, rhs, d_polish)
            and eta_polish <= eta_lp + 1e-6 * (1.0 + abs(eta_lp))
            and eta_polish < 0.0
        ):
            d_final = d_polish
    return _finish(g, d_final, stage=1, opts=opts)


def _stage2_exact(g, rows, rhs, lo_d, hi_d, opts):
    n, dim = g.shape
    base = np.vstack([_unit_rows(g), rows])
    base_rhs = np.concatenate([np.zeros(n), rhs])
    best = None
    failures = []
    mask = _geometry_mask(n, rhs.size)
    for k in range(n):
        sol, d_lp = _cut_loop(g[k], base, base_rhs, lo_d, hi_d, dim, opts,
                              eta_col=False, base_mask=mask)
        if d_lp is None:
            failures.append(f"objective {k}: {sol.status.value}")
            continue
        lower_bound = float(sol.objective)
        d_k = norm_postscale(d_lp)

        active = [_active_homogeneous(rows, rhs, d_k)]
        derivs = g @ d_k
        scale = 1.0 + np.linalg.norm(g, axis=1)
        tight = (np.abs(derivs) <= 1e-7 * scale) & (np.arange(n) != k)
        if np.any(tight):
            active.append(g[tight])
        proj = _null_projector(np.vstack(active) if active else np.zeros((0, dim)), dim)
        v = proj @ g[k]
        if float(v @ v) > 1e-20:
            d_polish = -v / np.linalg.norm(v)
            val_polish = float(g[k] @ d_polish)
            if (
                _rows_feasible(rows, rhs, d_polish)
                and np.all(g @ d_polish <= 1e-10 * scale)
                and val_polish <= lower_bound + 1e-6 * (1.0 + abs(lower_bound))
            ):
                d_k = d_polish
        val = float(g[k] @ d_k)
        if best is None or val < best[0] - 1e-12:
            best = (val, k, d_k)
    if best is None:
        return DirectionResult(np.zeros(dim), np.nan, DirectionStatus.SUBPROBLEM_FAILED, 2,
                               "; ".join(failures))
    val, _, d_final = best
    if val >= -opts.stationarity_tol:
        return DirectionResult(np.zeros(dim), val, DirectionStatus.STATIONARY, 2)
    return _finish(g, d_final, stage=2, opts=opts)
