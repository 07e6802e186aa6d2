"""Problem container and evaluation utilities.

A problem bundles smooth objective oracles with convex inequality
constraints f_i(x) <= 0.  Constraints may carry an exact linear view
(A x <= b) next to the oracles; per-coordinate variable bounds are kept
separate so downstream solvers can treat them natively instead of as
dense rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

Vector = np.ndarray
ValueFn = Callable[[np.ndarray], float]
GradFn = Callable[[np.ndarray], np.ndarray]


class ContractViolation(ValueError):
    """A documented precondition was broken by the caller."""


def finite_difference_gradient(value: ValueFn) -> GradFn:
    """Central-difference gradient fallback, h = 1e-6 * (1 + |x_j|) per coordinate."""

    def grad(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.empty_like(x)
        for j in range(x.size):
            h = 1e-6 * (1.0 + abs(x[j]))
            e = np.zeros_like(x)
            e[j] = h
            g[j] = (value(x + e) - value(x - e)) / (2.0 * h)
        return g

    return grad


@dataclass(frozen=True)
class Objective:
    value: ValueFn
    gradient: GradFn
    name: str = ""


def make_objective(value: ValueFn, gradient: GradFn | None = None, name: str = "") -> Objective:
    """Wrap a value oracle, synthesizing a finite-difference gradient when absent."""
    if gradient is None:
        gradient = finite_difference_gradient(value)
    return Objective(value=value, gradient=gradient, name=name)


@dataclass(frozen=True)
class Constraint:
    """Inequality f(x) <= 0 with optional gradient oracle."""

    value: ValueFn
    gradient: GradFn | None = None
    name: str = ""


@dataclass(frozen=True)
class LinearConstraints:
    """Exact linear view A x <= b of the constraint list, same order."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 2 or b.ndim != 1 or a.shape[0] != b.shape[0]:
            raise ContractViolation("linear constraint shapes do not agree")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class VariableBounds:
    """Per-coordinate lower/upper bounds; entries may be -inf/+inf."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ContractViolation("bound vectors must be 1-d and equal length")
        if np.any(lo > hi):
            raise ContractViolation("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


@dataclass(frozen=True)
class ProblemSpec:
    """Immutable problem description shared across solver stages.

    Invariants: at least one objective, dimension >= 1, and when a linear
    view is present it has one row per constraint oracle.
    """

    dimension: int
    objectives: tuple[Objective, ...]
    constraints: tuple[Constraint, ...] = ()
    linear_constraints: LinearConstraints | None = None
    variable_bounds: VariableBounds | None = None
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "objectives", tuple(self.objectives))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.dimension < 1:
            raise ContractViolation("dimension must be >= 1")
        if len(self.objectives) < 1:
            raise ContractViolation("need at least one objective")
        if self.linear_constraints is not None:
            lc = self.linear_constraints
            if lc.a.shape != (len(self.constraints), self.dimension):
                raise ContractViolation(
                    "linear view must be one row per constraint over the full dimension"
                )
        if self.variable_bounds is not None and self.variable_bounds.lower.size != self.dimension:
            raise ContractViolation("bound vectors must match the dimension")

    @property
    def n_objectives(self) -> int:
        return len(self.objectives)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def is_linear(self) -> bool:
        """True when every constraint is covered by the exact linear view."""
        return self.linear_constraints is not None or not self.constraints


@dataclass(frozen=True)
class FeasibilityReport:
    """Constraint and bound violations at a point.

    ``max_violation`` is the worst violation over constraint oracles and
    variable bounds, clamped at zero.  ``violated_indices`` indexes the
    constraint list only; bound breaches are reported per coordinate in
    ``violated_bounds``.
    """

    max_violation: float
    violated_indices: tuple[int, ...]
    violated_bounds: tuple[int, ...]
    is_feasible: bool


def evaluate_objectives(problem: ProblemSpec, point: np.ndarray) -> np.ndarray:
    point = _check_point(problem, point)
    return np.array([obj.value(point) for obj in problem.objectives], dtype=float)


def evaluate_gradients(problem: ProblemSpec, point: np.ndarray) -> np.ndarray:
    """Stack objective gradients into an (n_objectives, dimension) matrix."""
    point = _check_point(problem, point)
    rows = []
    for t, obj in enumerate(problem.objectives):
        g = np.asarray(obj.gradient(point), dtype=float).reshape(-1)
        if g.shape != (problem.dimension,):
            raise ContractViolation(
                f"gradient oracle {t} returned shape {g.shape}, expected ({problem.dimension},)"
            )
        rows.append(g)
    return np.vstack(rows)


def constraint_values(problem: ProblemSpec, point: np.ndarray) -> np.ndarray:
    point = _check_point(problem, point)
    if not problem.constraints:
        return np.zeros(0)
    return np.array([c.value(point) for c in problem.constraints], dtype=float)


def check_feasibility(problem: ProblemSpec, point: np.ndarray, tol: float = 1e-8) -> FeasibilityReport:
    point = _check_point(problem, point)
    values = constraint_values(problem, point)
    violated = tuple(int(i) for i in np.flatnonzero(values > tol))
    worst = float(values.max()) if values.size else 0.0
    bound_idx: tuple[int, ...] = ()
    if problem.variable_bounds is not None:
        vb = problem.variable_bounds
        breach = np.maximum(vb.lower - point, point - vb.upper)
        bound_idx = tuple(int(i) for i in np.flatnonzero(breach > tol))
        worst = max(worst, float(breach.max()))
    worst = max(worst, 0.0)
    return FeasibilityReport(
        max_violation=worst,
        violated_indices=violated,
        violated_bounds=bound_idx,
        is_feasible=worst <= tol,
    )


def feasibility_residual(problem: ProblemSpec, point: np.ndarray) -> float:
    return check_feasibility(problem, point).max_violation


def strict_interior_margin(problem: ProblemSpec, point: np.ndarray) -> float:
    """Smallest slack to any constraint or bound; positive means strictly interior.

    Offered as a diagnostic only; the solver never requires a strictly
    interior point, just a feasible one.
    """
    point = _check_point(problem, point)
    margin = np.inf
    values = constraint_values(problem, point)
    if values.size:
        margin = min(margin, float(-values.max()))
    if problem.variable_bounds is not None:
        vb = problem.variable_bounds
        slack = np.minimum(point - vb.lower, vb.upper - point)
        margin = min(margin, float(slack.min()))
    return margin


def finite_diff_check(problem: ProblemSpec, point: np.ndarray, h: float = 1e-6) -> float:
    """Worst relative disagreement between gradient oracles and central differences.

    Returns max over objectives and coordinates of
    |fd - oracle| / (1 + |oracle|).
    """
    point = _check_point(problem, point)
    if h <= 0:
        raise ContractViolation("step h must be positive")
    grads = evaluate_gradients(problem, point)
    worst = 0.0
    for t, obj in enumerate(problem.objectives):
        for j in range(problem.dimension):
            e = np.zeros(problem.dimension)
            e[j] = h
            fd = (obj.value(point + e) - obj.value(point - e)) / (2.0 * h)
            worst = max(worst, abs(fd - grads[t, j]) / (1.0 + abs(grads[t, j])))
    return worst


def linear_constraints_agree(problem: ProblemSpec, points: Sequence[np.ndarray], tol: float = 1e-12) -> bool:
    """Spot-check that constraint oracles match the linear view at the given points."""
    if problem.linear_constraints is None:
        return True
    lc = problem.linear_constraints
    for p in points:
        p = _check_point(problem, p)
        oracle = constraint_values(problem, p)
        lin = lc.a @ p - lc.b
        if oracle.size and np.max(np.abs(oracle - lin)) > tol:
            return False
    return True


def _check_point(problem: ProblemSpec, point: np.ndarray) -> np.ndarray:
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.shape != (problem.dimension,):
        raise ContractViolation(
            f"point has shape {point.shape}, expected ({problem.dimension},)"
        )
    return point
