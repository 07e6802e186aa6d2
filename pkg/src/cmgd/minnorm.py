"""Minimum-norm point in the convex hull of gradient rows.

The balanced descent direction for an unconstrained multi-objective step
is the negated minimum-norm element of the gradient hull.  We compute it
with Frank-Wolfe plus away steps over the weight simplex and certify the
result through the supporting-hyperplane test: x is the minimum-norm
point of conv{p_1..p_n} iff x.p_j >= |x|^2 for every j.

Restricting the hull by step feasibility constraints breaks the descent
guarantee; ``restricted_hull_counterexample`` builds a concrete instance
where the restricted point ascends one objective, which is why the main
solver runs feasibility through direction subproblems instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    Constraint,
    ContractViolation,
    LinearConstraints,
    Objective,
    ProblemSpec,
)


@dataclass(frozen=True)
class MinNormResult:
    """Hull weights alpha, the combined point w = P^T alpha, and its squared norm."""

    alpha: np.ndarray
    w: np.ndarray
    norm_sq: float
    certificate_ok: bool
    iterations: int


def wolfe_certificate(x: np.ndarray, points: np.ndarray, tol: float = 1e-7) -> bool:
    """True when x.p_j >= |x|^2 - tol for every row p_j."""
    x = np.asarray(x, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return bool(np.all(points @ x >= float(x @ x) - tol))


def min_norm_point(
    points: np.ndarray,
    tol: float = 1e-9,
    max_iter: int | None = None,
) -> MinNormResult:
    """Minimum-norm point of the convex hull of the given rows.

    Frank-Wolfe with away steps and exact line search on the quadratic.
    Stops when the duality gap |w|^2 - min_j w.p_j drops to ``tol``; ties in
    the linear minimization are broken by lowest index.  Non-convergence is
    reported through ``certificate_ok`` rather than raised.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0 or pts.shape[0] < 1:
        raise ContractViolation("need at least one point")
    if not np.all(np.isfinite(pts)):
        raise ContractViolation("points must be finite")
    n, _ = pts.shape
    if max_iter is None:
        max_iter = max(10 * n * pts.shape[1], 50)

    gram_diag = np.einsum("ij,ij->i", pts, pts)
    start = int(np.argmin(gram_diag))
    alpha = np.zeros(n)
    alpha[start] = 1.0
    w = pts[start].copy()

    it = 0
    gap = np.inf
    for it in range(1, max_iter + 1):
        scores = pts @ w
        norm_sq = float(w @ w)
        j_fw = int(np.argmin(scores))
        gap = norm_sq - float(scores[j_fw])
        if gap <= tol:
            break

        support = np.flatnonzero(alpha > 0)
        j_away = int(support[np.argmax(scores[support])])

        fw_gain = norm_sq - float(scores[j_fw])
        away_gain = float(scores[j_away]) - norm_sq
        if fw_gain >= away_gain:
            direction = pts[j_fw] - w
            gamma_max = 1.0
            toward = j_fw
            away = -1
        else:
            direction = w - pts[j_away]
            a_j = alpha[j_away]
            gamma_max = a_j / (1.0 - a_j) if a_j < 1.0 else 0.0
            toward = -1
            away = j_away

        denom = float(direction @ direction)
        if denom <= 0.0 or gamma_max <= 0.0:
            break
        gamma = min(max(-float(w @ direction) / denom, 0.0), gamma_max)
        if gamma <= 0.0:
            break

        if toward >= 0:
            alpha *= 1.0 - gamma
            alpha[toward] += gamma
        else:
            alpha *= 1.0 + gamma
            alpha[away] -= gamma
            alpha[away] = max(alpha[away], 0.0)
        alpha = np.maximum(alpha, 0.0)
        alpha /= alpha.sum()
        w = pts.T @ alpha

    w = pts.T @ alpha
    norm_sq = float(w @ w)
    ok = wolfe_certificate(w, pts, tol=tol)
    return MinNormResult(alpha=alpha, w=w, norm_sq=norm_sq, certificate_ok=ok, iterations=it)


@dataclass(frozen=True)
class RestrictedHullCounterexample:
    """Instance where the feasibility-restricted hull point fails to descend.

    Two linear objectives with gradients (-1, 2) and (3, 1) at the origin,
    one half-space constraint on the step.  Restricting the hull weights so
    the trial step point - w stays feasible pushes the combined vector w to
    a spot with w.g_1 < 0, so stepping along -w increases objective one.
    """

    gradients: np.ndarray
    point: np.ndarray
    problem: ProblemSpec
    restricted_w: np.ndarray
    direction: np.ndarray
    ascent_index: int


def restricted_hull_counterexample() -> RestrictedHullCounterexample:
    g1 = np.array([-1.0, 2.0])
    g2 = np.array([3.0, 1.0])
    grads = np.vstack([g1, g2])
    point = np.zeros(2)

    # constraint on positions y: -y_2 <= 1.1, strictly satisfied at the origin
    a_row = np.array([[0.0, -1.0]])
    b_row = np.array([1.1])
    problem = ProblemSpec(
        dimension=2,
        objectives=(
            Objective(value=lambda x, g=g1: float(g @ x), gradient=lambda x, g=g1: g.copy()),
            Objective(value=lambda x, g=g2: float(g @ x), gradient=lambda x, g=g2: g.copy()),
        ),
        constraints=(
            Constraint(value=lambda x: float(-x[1] - 1.1), gradient=lambda x: np.array([0.0, -1.0])),
        ),
        linear_constraints=LinearConstraints(a=a_row, b=b_row),
        name="restricted-hull-counterexample",
    )

    # hull point w(s) = g1 + s (g2 - g1); the step point - w is feasible iff
    # w_2 <= 1.1, i.e. s >= 0.9.  The unrestricted minimizer s = 6/17 is cut
    # off, so the restricted minimum-norm point sits at the boundary s = 0.9.
    seg = g2 - g1
    s_free = -float(g1 @ seg) / float(seg @ seg)
    s_lo = (2.0 - 1.1) / 1.0
    s = min(max(s_free, s_lo), 1.0)
    w = g1 + s * seg
    scores = grads @ (-w)
    ascent = int(np.argmax(scores))
    if scores[ascent] <= 0.0:
        raise AssertionError("fixture must exhibit an ascent objective")
    return RestrictedHullCounterexample(
        gradients=grads,
        point=point,
        problem=problem,
        restricted_w=w,
        direction=-w,
        ascent_index=ascent,
    )
