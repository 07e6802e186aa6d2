"""Dense two-phase simplex for small linear programs.

Solves  min c.x  subject to  A x <= b,  lower <= x <= upper.

Self-contained on purpose: the direction subproblems call this in a tight
loop and need deterministic pivoting.  The implementation is a bounded
variable revised simplex with an explicit dense basis inverse, Dantzig
pricing, and a Bland fallback once degenerate pivots pile up.  The basis
inverse is refactorized from scratch every 100 pivots to keep roundoff in
check.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import ContractViolation

PIVOT_TOL = 1e-10
PRICE_TOL = 1e-9
DEGEN_TOL = 1e-10
PHASE1_TOL = 1e-9
REFACTOR_EVERY = 25
DRIFT_ABORT = 1e-7


class _DriftError(Exception):
    """Basis inverse drift pushed a basic variable past its bound."""

_AT_LOWER = 0
_AT_UPPER = 1
_FREE = 2
_BASIC = 3


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpProblem:
    """min c.x s.t. a_ub x <= b_ub, lower <= x <= upper (bounds may be +-inf)."""

    c: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self) -> None:
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        a = np.asarray(self.a_ub, dtype=float)
        if a.size == 0:
            a = a.reshape(0, c.size)
        b = np.atleast_1d(np.asarray(self.b_ub, dtype=float)) if np.size(self.b_ub) else np.zeros(0)
        k = c.size
        if a.ndim != 2 or a.shape[1] != k or a.shape[0] != b.size:
            raise ContractViolation("inconsistent LP shapes")
        if not np.all(np.isfinite(c)):
            raise ContractViolation("cost vector must be finite")
        if not np.all(np.isfinite(a)) or np.any(np.isnan(b)):
            raise ContractViolation("constraint data must not contain NaN or inf coefficients")
        lo = np.full(k, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float).copy()
        hi = np.full(k, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).copy()
        if lo.shape != (k,) or hi.shape != (k,):
            raise ContractViolation("bound vectors must match the number of variables")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ContractViolation("bounds must not be NaN")
        if np.any(lo > hi):
            raise ContractViolation("lower bound exceeds upper bound")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a_ub", a)
        object.__setattr__(self, "b_ub", b)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    x: np.ndarray | None
    objective: float
    iterations: int = 0


def solve_lp(problem: LpProblem, max_iter: int | None = None) -> LpSolution:
    """Solve the LP, reporting bad geometry through the status field."""
    if np.any(problem.b_ub == -np.inf):
        return LpSolution(LpStatus.INFEASIBLE, None, np.inf)
    finite_rows = problem.b_ub < np.inf
    a = problem.a_ub[finite_rows]
    b = problem.b_ub[finite_rows]

    if a.shape[0] == 0:
        return _solve_bounds_only(problem.c, problem.lower, problem.upper)
    try:
        return _Simplex(problem.c, a, b, problem.lower, problem.upper).run(max_iter)
    except _DriftError:
        # deterministic retry with maximal numerical care: Bland pricing
        # from the start and near-constant refactoring
        try:
            return _Simplex(problem.c, a, b, problem.lower, problem.upper,
                            careful=True).run(max_iter)
        except _DriftError as exc:
            raise ContractViolation(
                "LP basis lost feasibility beyond repair") from exc


def _solve_bounds_only(c: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> LpSolution:
    x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
    for j in range(c.size):
        if c[j] > 0:
            if not np.isfinite(lo[j]):
                return LpSolution(LpStatus.UNBOUNDED, None, -np.inf)
            x[j] = lo[j]
        elif c[j] < 0:
            if not np.isfinite(hi[j]):
                return LpSolution(LpStatus.UNBOUNDED, None, -np.inf)
            x[j] = hi[j]
    return LpSolution(LpStatus.OPTIMAL, x, float(c @ x))


class _Simplex:
    """Bounded-variable simplex over columns [structural | slack | artificial]."""

    def __init__(self, c, a, b, lo_s, hi_s, careful=False):
        self.k = c.size
        self.p = a.shape[0]
        p, k = self.p, self.k
        self.n = k + 2 * p
        self.cols = np.hstack([a, np.eye(p), np.zeros((p, p))])
        self.b = b.astype(float)
        self.lo = np.concatenate([lo_s, np.zeros(p), np.zeros(p)])
        self.hi = np.concatenate([hi_s, np.full(p, np.inf), np.zeros(p)])
        self.c_orig = np.concatenate([c, np.zeros(2 * p)])
        self.x = np.zeros(self.n)
        self.state = np.full(self.n, _AT_LOWER, dtype=np.int8)
        self.basis = np.zeros(p, dtype=int)
        self.binv = np.eye(p)
        self.bland = careful
        self.degen_run = 0
        self.pivots = 0
        self.since_refactor = 0
        self.refactor_every = 5 if careful else REFACTOR_EVERY
        self.drift_scale = 1.0 + float(np.max(np.abs(b))) if b.size else 1.0

    def _start_basis(self) -> None:
        k, p = self.k, self.p
        for j in range(k):
            if np.isfinite(self.lo[j]):
                self.state[j] = _AT_LOWER
                self.x[j] = self.lo[j]
            elif np.isfinite(self.hi[j]):
                self.state[j] = _AT_UPPER
                self.x[j] = self.hi[j]
            else:
                self.state[j] = _FREE
                self.x[j] = 0.0
        resid = self.b - self.cols[:, :k] @ self.x[:k]
        self.phase1_cost = np.zeros(self.n)
        for i in range(p):
            slack = k + i
            art = k + p + i
            self.state[slack] = _AT_LOWER
            self.state[art] = _AT_LOWER
            if resid[i] >= 0.0:
                self.basis[i] = slack
                self.state[slack] = _BASIC
                self.x[slack] = resid[i]
                self.binv[i, i] = 1.0
            else:
                self.cols[i, art] = -1.0
                self.hi[art] = np.inf
                self.phase1_cost[art] = 1.0
                self.basis[i] = art
                self.state[art] = _BASIC
                self.x[art] = -resid[i]
                self.binv[i, i] = -1.0

    def run(self, max_iter: int | None) -> LpSolution:
        self._start_basis()
        limit = max_iter if max_iter is not None else 20000 + 200 * (self.p + self.n)

        if np.any(self.phase1_cost > 0):
            status = self._iterate(self.phase1_cost, limit, phase=1)
            infeas = float(self.phase1_cost @ np.maximum(self.x, 0.0))
            scale = 1.0 + float(np.max(np.abs(self.b)))
            if infeas > PHASE1_TOL * scale:
                # a numerically stuck phase 1 proves nothing about the
                # problem itself, so only a clean optimum may say so
                if status == "stuck" and self.refactor_every >= REFACTOR_EVERY:
                    raise _DriftError
                return LpSolution(LpStatus.INFEASIBLE, None, np.inf, self.pivots)
            # pin artificials at zero for phase 2
            art = slice(self.k + self.p, self.n)
            self.hi[art] = 0.0
            self.x[art] = np.where(self.state[art] == _BASIC, 0.0, self.x[art])
            self.degen_run = 0
            self.bland = self.refactor_every < REFACTOR_EVERY

        status = self._iterate(self.c_orig, limit, phase=2)
        if status == "unbounded":
            return LpSolution(LpStatus.UNBOUNDED, None, -np.inf, self.pivots)

        self._refactor()
        # honest primal check before the cosmetic clip: a basic variable
        # outside its bound means the solution does not satisfy the rows
        # it appears to, and clipping would only hide that; the careful
        # rerun is the best this arithmetic can do, so it gets the wider
        # budget that per-pivot Harris overshoots accumulate to
        xs = self.x[: self.k]
        lo_s, hi_s = self.lo[: self.k], self.hi[: self.k]
        bound_err = float(np.max(np.maximum(
            np.maximum(lo_s - xs, xs - hi_s), 0.0), initial=0.0))
        row_err = float(np.max(np.maximum(
            self.cols[:, : self.k] @ xs - self.b, 0.0), initial=0.0))
        budget = 2e-9 if self.refactor_every >= REFACTOR_EVERY else 1e-8
        if max(bound_err, row_err) > budget * self.drift_scale:
            raise _DriftError
        xs = np.clip(xs, lo_s, hi_s)
        return LpSolution(LpStatus.OPTIMAL, xs, float(self.c_orig[: self.k] @ xs), self.pivots)

    def _iterate(self, cost: np.ndarray, limit: int, phase: int) -> str:
        for _ in range(limit):
            cands = self._price(cost)
            if not cands:
                return "optimal"
            # entering columns whose best pivot is tiny poison the basis
            # inverse, so scan the whole pricing order for a sound one; a
            # pivot under the floor is numerically nonexistent, and a
            # vertex leavable only through such pivots counts as optimal
            chosen = None
            for entering, sigma in cands:
                alpha = self.binv @ self.cols[:, entering]
                step, leave_row = self._ratio(entering, sigma, alpha)
                if step is None:
                    if phase == 1:
                        raise RuntimeError("phase-1 subproblem cannot be unbounded; data is corrupt")
                    return "unbounded"
                if leave_row < 0 or abs(alpha[leave_row]) >= 1e-6 * max(
                        1.0, float(np.abs(alpha).max())):
                    chosen = (entering, sigma, alpha, step, leave_row)
                    break
            if chosen is None:
                return "stuck"
            self._apply(*chosen)
        raise RuntimeError("simplex iteration limit exceeded")

    def _price(self, cost: np.ndarray) -> list[tuple[int, int]]:
        y = self.binv.T @ cost[self.basis]
        reduced = cost - y @ self.cols
        movable = (self.state != _BASIC) & (self.lo < self.hi)
        up_ok = movable & ((self.state == _AT_LOWER) | (self.state == _FREE)) & (reduced < -PRICE_TOL)
        dn_ok = movable & ((self.state == _AT_UPPER) | (self.state == _FREE)) & (reduced > PRICE_TOL)
        candidates = np.flatnonzero(up_ok | dn_ok)
        if candidates.size == 0:
            return []
        if not self.bland:
            candidates = candidates[np.argsort(-np.abs(reduced[candidates]), kind="stable")]
        return [(int(j), 1 if up_ok[j] else -1) for j in candidates]

    def _ratio(self, entering: int, sigma: int, alpha: np.ndarray):
        """Harris two-pass ratio test; returns (step, leaving row or -1).

        Pass one relaxes every blocking bound by an absolute overshoot
        budget and takes the loosest ratio that admits; pass two picks,
        among rows whose true ratio fits under it, the largest pivot.
        The budget caps how far any basic variable can be pushed past
        its bound in one pivot, no matter how its ratio and pivot
        magnitude trade off.
        """
        xb = self.x[self.basis]
        lo_b = self.lo[self.basis]
        hi_b = self.hi[self.basis]
        delta = -sigma * alpha

        dist = np.full(self.p, np.inf)
        dec = (delta < -PIVOT_TOL) & np.isfinite(lo_b)
        inc = (delta > PIVOT_TOL) & np.isfinite(hi_b)
        dist[dec] = np.maximum(xb[dec] - lo_b[dec], 0.0)
        dist[inc] = np.maximum(hi_b[inc] - xb[inc], 0.0)
        block = dec | inc
        speed = np.abs(delta)

        t = np.full(self.p, np.inf)
        t[block] = dist[block] / speed[block]

        own = self.hi[entering] - self.lo[entering]
        if not block.any():
            if not np.isfinite(own):
                return None, -1
            return own, -1
        eps = 1e-9 * self.drift_scale
        t_lim = float(np.min((dist[block] + eps) / speed[block]))

        ties = np.flatnonzero(block & (t <= t_lim))
        if self.bland:
            leave = int(ties[np.argmin(self.basis[ties])])
        else:
            art0 = self.k + self.p
            is_art = self.basis[ties] >= art0
            pick = ties[is_art] if np.any(is_art) else ties
            leave = int(pick[np.argmax(np.abs(alpha[pick]))])
        step = float(t[leave])
        if own < step:
            return own, -1
        return step, int(leave)

    def _apply(self, entering, sigma, alpha, step, leave_row) -> None:
        self.x[self.basis] += -sigma * alpha * step
        if leave_row < 0:
            # bound flip, no basis change
            self.x[entering] = self.hi[entering] if sigma > 0 else self.lo[entering]
            self.state[entering] = _AT_UPPER if sigma > 0 else _AT_LOWER
            return

        pivot = alpha[leave_row]
        leaving = self.basis[leave_row]
        self.x[entering] = self.x[entering] + sigma * step
        blocked_low = (-sigma * pivot) < 0
        self.x[leaving] = self.lo[leaving] if blocked_low else self.hi[leaving]
        self.state[leaving] = _AT_LOWER if blocked_low else _AT_UPPER
        self.state[entering] = _BASIC
        self.basis[leave_row] = entering

        row = self.binv[leave_row, :] / pivot
        self.binv -= np.outer(alpha, row)
        self.binv[leave_row, :] = row

        self.pivots += 1
        self.since_refactor += 1
        if step <= DEGEN_TOL:
            self.degen_run += 1
            if self.degen_run > 5 * (self.p + self.k):
                self.bland = True
        else:
            self.degen_run = 0
        if self.since_refactor >= self.refactor_every:
            self._refactor()

    def _refactor(self) -> None:
        bmat = self.cols[:, self.basis]
        try:
            self.binv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError:
            self.binv = np.linalg.pinv(bmat)
        nb = np.flatnonzero(self.state != _BASIC)
        rhs = self.b - self.cols[:, nb] @ self.x[nb]
        self.x[self.basis] = self.binv @ rhs
        self.since_refactor = 0
        xb = self.x[self.basis]
        drift = np.maximum(np.maximum(self.lo[self.basis] - xb,
                                      xb - self.hi[self.basis]), 0.0)
        if drift.size and float(drift.max()) > DRIFT_ABORT * self.drift_scale:
            raise _DriftError
