"""Largest monotone step along a common descent direction.

The step rule asks for the biggest h such that every objective keeps a
nonpositive directional derivative along the whole segment (0, h], capped
independently by feasibility of point + h w.  Quadratic and similar
objectives make the derivative cross zero exactly at the one-dimensional
minimizer, so this behaves like an exact line search that refuses to
overshoot any objective.

Search structure: geometric expansion from h0 by doubling, then the
first bad bracket is shrunk to a relative width by false position on the
worst directional derivative (plain bisection when the bad end is a
feasibility failure), then a 32-point grid sweep over [0, h] catches
interior derivative sign changes that the geometric probes can miss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ContractViolation, ProblemSpec, check_feasibility, evaluate_objectives

_GRID = 32


@dataclass(frozen=True)
class StepOptions:
    h0: float = 1e-3
    max_doublings: int = 60
    h_rel_tol: float = 1e-6
    grad_tol: float = 0.0
    h_min: float = 1e-12
    feas_tol: float = 1e-8


@dataclass(frozen=True)
class StepResult:
    h: float
    evaluations: int
    boundary_limited: bool


def derivative_forgiveness(g_norm: float, w_norm: float) -> float:
    """Largest directional-derivative reading still treated as non-ascent.

    Tight subproblem rows recompute to +-eps_mach * |g||w|, and the LP
    certifies its holds only to an absolute residual, so both scales are
    forgiven; values stay protected by the per-step descent budget.
    """
    return 1e-13 * g_norm * w_norm + 1e-10 * (1.0 + w_norm)


class _Probe:
    """Shared probe with an evaluation counter."""

    def __init__(self, problem: ProblemSpec, point: np.ndarray, w: np.ndarray, opts: StepOptions,
                 feas_cap: float):
        self.problem = problem
        self.point = point
        self.w = w
        self.w_norm = float(np.linalg.norm(w))
        self.opts = opts
        self.feas_cap = feas_cap
        self.evaluations = 0
        self.last_failure = ""
        self.check_oracles = bool(problem.constraints) and problem.linear_constraints is None

    def _deriv(self, g: np.ndarray) -> float:
        slack = derivative_forgiveness(float(np.linalg.norm(g)), self.w_norm)
        return float(g @ self.w) - slack

    def derivs_ok(self, t: float) -> bool:
        self.evaluations += 1
        x = self.point + t * self.w
        for obj in self.problem.objectives:
            if self._deriv(np.asarray(obj.gradient(x))) > self.opts.grad_tol:
                self.last_failure = "derivative"
                return False
        return True

    def feasible(self, t: float) -> bool:
        if t > self.feas_cap:
            self.last_failure = "feasibility"
            return False
        if self.check_oracles:
            self.evaluations += 1
            x = self.point + t * self.w
            if not check_feasibility(self.problem, x, self.opts.feas_tol).is_feasible:
                self.last_failure = "feasibility"
                return False
        return True

    def ok(self, t: float) -> bool:
        return self.feasible(t) and self.derivs_ok(t)

    def worst_deriv(self, t: float) -> float:
        self.evaluations += 1
        x = self.point + t * self.w
        worst = -np.inf
        for obj in self.problem.objectives:
            worst = max(worst, self._deriv(np.asarray(obj.gradient(x))))
        if worst > self.opts.grad_tol:
            self.last_failure = "derivative"
        return worst


def _linear_feasibility_cap(problem: ProblemSpec, point: np.ndarray, w: np.ndarray) -> float:
    """Exact ratio test against the linear view and variable bounds."""
    cap = np.inf
    if problem.linear_constraints is not None:
        lc = problem.linear_constraints
        rate = lc.a @ w
        # iterates riding a wall drift outside it by roundoff; a fixed
        # absolute envelope keeps them steppable without letting the
        # violation creep past 1e-10 scale
        drift = 1e-10 * (1.0 + np.abs(lc.b))
        slack = np.maximum(lc.b + drift - lc.a @ point, 0.0)
        scale = 1e-12 * (1.0 + np.linalg.norm(w)) * (1.0 + np.abs(lc.a).sum(axis=1))
        push = rate > scale
        if np.any(push):
            cap = float(np.min(slack[push] / rate[push]))
    if problem.variable_bounds is not None:
        vb = problem.variable_bounds
        up = (w > 1e-15) & np.isfinite(vb.upper)
        dn = (w < -1e-15) & np.isfinite(vb.lower)
        if np.any(up):
            cap = min(cap, float(np.min((vb.upper[up] - point[up]) / w[up])))
        if np.any(dn):
            cap = min(cap, float(np.min((vb.lower[dn] - point[dn]) / w[dn])))
    return max(cap, 0.0)


def monotone_step(
    problem: ProblemSpec,
    point: np.ndarray,
    w: np.ndarray,
    opts: StepOptions = StepOptions(),
) -> StepResult:
    """Largest h with nonpositive directional derivatives on (0, h], feasibility capped.

    Returns h = h_min with ``boundary_limited`` set when even tiny steps
    fail, so the caller can treat the iterate as stalled.  Raises
    ``ContractViolation`` when w is not a descent direction at the point.
    """
    point = np.asarray(point, dtype=float)
    w = np.asarray(w, dtype=float)
    if point.shape != w.shape:
        raise ContractViolation("direction shape mismatch")

    grads0 = [np.asarray(obj.gradient(point), dtype=float) for obj in problem.objectives]
    slack0 = [1e-9 * (1.0 + np.linalg.norm(g) * np.linalg.norm(w)) for g in grads0]
    if any(float(g @ w) > s for g, s in zip(grads0, slack0)):
        raise ContractViolation("w is not a descent direction at the point")

    cap = _linear_feasibility_cap(problem, point, w)
    probe = _Probe(problem, point, w, opts, cap)
    probe.evaluations += len(grads0)

    # expansion: first candidate h0, doubling while everything stays good
    h_good = 0.0
    h_bad = np.inf
    t = min(opts.h0, cap)
    if t <= 0.0:
        return StepResult(opts.h_min, probe.evaluations, True)

    if not probe.ok(t):
        # shrink below h0 to find any workable step
        h_bad = t
        while t > opts.h_min:
            t *= 0.5
            if probe.ok(t):
                h_good = t
                break
            h_bad = t
        if h_good == 0.0:
            return StepResult(opts.h_min, probe.evaluations, True)
    else:
        h_good = t
        for _ in range(opts.max_doublings):
            if h_good >= cap:
                break
            t = min(2.0 * h_good, cap)
            if probe.ok(t):
                h_good = t
            else:
                h_bad = t
                break

    if np.isfinite(h_bad):
        h_good = _bisect(probe, h_good, h_bad, opts)

    h = _grid_sweep(probe, h_good, opts)
    h = _value_guard(probe, h, opts)
    if h <= opts.h_min:
        return StepResult(opts.h_min, probe.evaluations, True)
    boundary = (np.isfinite(cap) and h >= cap * (1 - 1e-9)) or probe.last_failure == "feasibility"
    return StepResult(h, probe.evaluations, boundary)


def _bisect(probe: _Probe, good: float, bad: float, opts: StepOptions) -> float:
    """Shrink [good, bad] until the relative width tolerance holds.

    Uses false position on the worst directional derivative (Illinois
    variant to avoid one-sided stagnation), which is exact in one probe
    for a single linear derivative piece.  Falls back to the midpoint
    whenever the bad end is a feasibility failure or the interpolant is
    degenerate.
    """
    fg: float | None = None
    fb: float | None = None
    good_streak = 0
    wide = (bad - good) > opts.h_rel_tol * max(good, opts.h_min)
    if wide and probe.last_failure == "derivative":
        # derivative failures imply the bad end is feasible, so both ends
        # carry derivative values and interpolation can start immediately
        fb = probe.worst_deriv(bad)
        fg = probe.worst_deriv(good)
        if fg == opts.grad_tol:
            return good
        if fb <= opts.grad_tol:
            fb = None
    while (bad - good) > opts.h_rel_tol * max(good, opts.h_min):
        width = bad - good
        t = None
        if fg is not None and fb is not None:
            fb_eff = fb * (0.5 ** good_streak)
            if fb_eff > fg:
                t = good + width * (opts.grad_tol - fg) / (fb_eff - fg)
                if not (good + 0.05 * width <= t <= bad - 0.05 * width):
                    t = None
        if t is None:
            t = 0.5 * (good + bad)
        if not probe.feasible(t):
            bad, fb, good_streak = t, None, 0
        else:
            ft = probe.worst_deriv(t)
            if ft == opts.grad_tol:
                return t
            if ft < opts.grad_tol:
                good, fg = t, ft
                good_streak += 1
            else:
                bad, fb = t, ft
                good_streak = 0
        if bad <= opts.h_min:
            break
    return good


def _grid_sweep(probe: _Probe, h: float, opts: StepOptions) -> float:
    """Verify derivatives on a uniform grid over (0, h]; shrink to the first failure."""
    for _ in range(8):
        if h <= opts.h_min:
            return h
        ts = h * np.arange(1, _GRID + 1) / _GRID
        bad_at = None
        for t in ts:
            if not probe.derivs_ok(t):
                bad_at = t
                break
        if bad_at is None:
            return h
        good = max(bad_at - h / _GRID, 0.0)
        if good <= 0.0 or not probe.ok(good):
            # no safe prefix on this grid, shrink hard
            h = bad_at * 0.5
            if not probe.ok(h):
                return 0.0
            continue
        h = _bisect(probe, good, bad_at, opts)
    return h


def _value_guard(probe: _Probe, h: float, opts: StepOptions) -> float:
    """Roundoff guard: insist objective values do not increase at the accepted h."""
    if h <= 0.0:
        return 0.0
    f0 = evaluate_objectives(probe.problem, probe.point)
    probe.evaluations += 1
    for _ in range(40):
        f1 = evaluate_objectives(probe.problem, probe.point + h * probe.w)
        probe.evaluations += 1
        if np.all(f1 <= f0 + 1e-9 * (1.0 + np.abs(f0))):
            return h
        h *= 0.5
        if h <= opts.h_min:
            return 0.0
    return 0.0
