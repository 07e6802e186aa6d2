"""Two-stage descent loop and multi-start orchestration.

Stage 1 drives the worst-case directional derivative to zero (weak
stationarity), stage 2 then drives the best-case one (stationarity).
Each stage alternates a direction subproblem with a monotone step
search and stops on its certificate, its iteration budget, or a stall.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .direction import (
    DirectionOptions,
    DirectionStatus,
    stage1_direction,
    stage2_direction,
)
from .linesearch import StepOptions, monotone_step
from .model import (
    ContractViolation,
    ProblemSpec,
    check_feasibility,
    constraint_values,
    evaluate_gradients,
    evaluate_objectives,
    feasibility_residual,
)


class Termination(Enum):
    WEAK_THEN_STATIONARY = "WeakStationaryThenStationary"
    MAX_ITER_STAGE1 = "MaxIterStage1"
    MAX_ITER_STAGE2 = "MaxIterStage2"
    STALLED = "Stalled"


@dataclass(frozen=True)
class SolveOptions:
    """Budgets and tolerances for the two-stage loop.

    ``tol`` and ``feas_tol`` take precedence over the copies nested in
    ``direction`` and ``step``.
    """

    m1: int = 200
    m2: int = 50
    tol: float = 1e-7
    feas_tol: float = 1e-8
    seed: int | None = None
    stall_steps: int = 3
    stage1_tol_factor: float = 0.1
    direction: DirectionOptions = field(default_factory=DirectionOptions)
    step: StepOptions = field(default_factory=StepOptions)

    def __post_init__(self) -> None:
        if self.m1 < 0 or self.m2 < 0:
            raise ContractViolation("iteration budgets must be >= 0")
        if not self.tol > 0.0:
            raise ContractViolation("tol must be positive")
        if not 0.0 < self.stage1_tol_factor <= 1.0:
            raise ContractViolation("stage1_tol_factor must be in (0, 1]")


@dataclass(frozen=True)
class IterateRecord:
    """One visited point: the step and certificate value computed there."""

    point: np.ndarray
    objectives: np.ndarray
    eta: float
    h: float
    stage: int
    feasibility: float


@dataclass(frozen=True)
class Trajectory:
    iterates: tuple[IterateRecord, ...]
    termination: Termination
    stage1_exit: str
    stage2_exit: str | None
    stage1_eta: float | None
    stage2_eta: float | None
    message: str = ""

    @property
    def final_point(self) -> np.ndarray:
        return self.iterates[-1].point

    @property
    def final_objectives(self) -> np.ndarray:
        return self.iterates[-1].objectives

    @property
    def steps_taken(self) -> int:
        return len(self.iterates) - 1


_DirectionFn = Callable[..., object]


def _record(problem: ProblemSpec, x: np.ndarray, eta: float, h: float,
            stage: int) -> IterateRecord:
    return IterateRecord(
        point=x.copy(),
        objectives=evaluate_objectives(problem, x),
        eta=eta,
        h=h,
        stage=stage,
        feasibility=feasibility_residual(problem, x),
    )


def _run_stage(problem: ProblemSpec, x: np.ndarray, stage: int,
               direction_fn: _DirectionFn, max_iter: int,
               dopts: DirectionOptions, sopts: StepOptions,
               stall_steps: int,
               records: list[IterateRecord]) -> tuple[str, np.ndarray, float, str]:
    """Returns (exit kind, final point, certificate eta, message).

    Exit kinds: "stationary", "max_iter", "stalled", "failed".
    A vanishing step does not move the point; ``stall_steps`` of them
    in a row end the stage.
    """
    stall = 0
    for _ in range(max_iter):
        grads = evaluate_gradients(problem, x)
        res = direction_fn(problem, x, grads, dopts)
        if res.status is DirectionStatus.STATIONARY:
            return "stationary", x, res.eta, res.message
        if res.status is DirectionStatus.SUBPROBLEM_FAILED:
            return "failed", x, res.eta, res.message
        step = monotone_step(problem, x, res.d, sopts)
        records.append(_record(problem, x, res.eta, step.h, stage))
        if step.h <= sopts.h_min:
            stall += 1
            if stall >= stall_steps:
                return "stalled", x, res.eta, "step search stalled"
            continue
        stall = 0
        x = x + step.h * res.d
    return "max_iter", x, float("nan"), ""


def two_stage_solve(problem: ProblemSpec, x0: np.ndarray,
                    opts: SolveOptions | None = None) -> Trajectory:
    """Run stage 1 to its certificate or budget, then stage 2.

    Raises ContractViolation when ``x0`` is infeasible; no repair is
    attempted.
    """
    if opts is None:
        opts = SolveOptions()
    x0 = np.asarray(x0, dtype=float).reshape(-1).copy()
    report = check_feasibility(problem, x0, tol=opts.feas_tol)
    if not report.is_feasible:
        raise ContractViolation(
            f"infeasible start: max violation {report.max_violation:.3e} "
            f"exceeds {opts.feas_tol:.1e}")

    # Stage 1 runs to a tighter threshold so the hand-off point is
    # accurate enough for stage 2 to certify at tol; the stage-2
    # optimum can sit a constant factor below the stage-1 one.
    dopts1 = replace(opts.direction,
                     stationarity_tol=opts.tol * opts.stage1_tol_factor,
                     feas_tol=opts.feas_tol)
    dopts2 = replace(opts.direction, stationarity_tol=opts.tol,
                     feas_tol=opts.feas_tol)
    sopts = replace(opts.step, feas_tol=opts.feas_tol)

    records: list[IterateRecord] = []
    kind1, x, eta1, msg1 = _run_stage(
        problem, x0, 1, stage1_direction, opts.m1, dopts1, sopts,
        opts.stall_steps, records)

    kind2: str | None = None
    eta2 = float("nan")
    msg2 = ""
    if kind1 != "failed":
        kind2, x, eta2, msg2 = _run_stage(
            problem, x, 2, stage2_direction, opts.m2, dopts2, sopts,
            opts.stall_steps, records)

    if kind1 == "failed" or kind2 == "failed":
        termination = Termination.STALLED
    elif kind2 == "stationary":
        termination = Termination.WEAK_THEN_STATIONARY
    elif kind2 == "stalled":
        termination = Termination.STALLED
    elif kind1 == "max_iter":
        termination = Termination.MAX_ITER_STAGE1
    else:
        termination = Termination.MAX_ITER_STAGE2

    final_stage = 2 if kind2 is not None else 1
    final_eta = eta2 if kind2 is not None else eta1
    records.append(_record(problem, x, final_eta, 0.0, final_stage))

    message = "; ".join(m for m in (msg1, msg2) if m)
    return Trajectory(
        iterates=tuple(records),
        termination=termination,
        stage1_exit=kind1,
        stage2_exit=kind2,
        stage1_eta=eta1 if np.isfinite(eta1) else None,
        stage2_eta=eta2 if kind2 is not None and np.isfinite(eta2) else None,
        message=message,
    )


def _worst_violation_name(problem: ProblemSpec, x: np.ndarray) -> tuple[str, float]:
    worst_name, worst_val = "", 0.0
    if problem.n_constraints:
        cv = constraint_values(problem, x)
        j = int(np.argmax(cv))
        if cv[j] > worst_val:
            c = problem.constraints[j]
            worst_name = c.name or f"constraint[{j}]"
            worst_val = float(cv[j])
    if problem.variable_bounds is not None:
        lo = problem.variable_bounds.lower - x
        hi = x - problem.variable_bounds.upper
        for label, v in (("lower bound", lo), ("upper bound", hi)):
            j = int(np.argmax(v))
            if v[j] > worst_val:
                worst_name = f"{label}[{j}]"
                worst_val = float(v[j])
    return worst_name, worst_val


def sample_feasible_starts(problem: ProblemSpec, count: int,
                           lower: np.ndarray, upper: np.ndarray,
                           seed: int | None = None,
                           feas_tol: float = 1e-8,
                           max_rejects: int = 100_000) -> list[np.ndarray]:
    """Rejection-sample ``count`` feasible points uniformly from a box."""
    lower = np.asarray(lower, dtype=float).reshape(-1)
    upper = np.asarray(upper, dtype=float).reshape(-1)
    if lower.shape != (problem.dimension,) or upper.shape != (problem.dimension,):
        raise ContractViolation("sampling box does not match problem dimension")
    if np.any(lower > upper):
        raise ContractViolation("sampling box has lower > upper")
    rng = np.random.default_rng(seed)
    points: list[np.ndarray] = []
    for i in range(count):
        worst_name, worst_val = "", -np.inf
        for _ in range(max_rejects):
            x = rng.uniform(lower, upper)
            if check_feasibility(problem, x, tol=feas_tol).is_feasible:
                points.append(x)
                break
            name, val = _worst_violation_name(problem, x)
            if val > worst_val:
                worst_name, worst_val = name, val
        else:
            raise ContractViolation(
                f"no feasible start found for index {i} after {max_rejects} "
                f"samples; worst violation {worst_val:.3e} at {worst_name}")
    return points


def _worker_count(n_jobs: int) -> int:
    raw = os.environ.get("CMGD_THREADS", "1")
    try:
        workers = int(raw)
    except ValueError:
        workers = 1
    return max(1, min(workers, n_jobs)) if n_jobs else 1


def multi_start(problem: ProblemSpec,
                starts: Sequence[np.ndarray] | tuple[int, tuple[np.ndarray, np.ndarray]],
                opts: SolveOptions | None = None) -> list[Trajectory]:
    """Solve from several starts; results keep the start order.

    ``starts`` is either explicit points or ``(count, (lower, upper))``
    for seeded rejection sampling from the box. Runs are independent;
    set CMGD_THREADS to solve them concurrently.
    """
    if opts is None:
        opts = SolveOptions()
    if (isinstance(starts, tuple) and len(starts) == 2
            and isinstance(starts[0], (int, np.integer))):
        count, box = starts
        points = sample_feasible_starts(problem, int(count), box[0], box[1],
                                        seed=opts.seed, feas_tol=opts.feas_tol)
    else:
        points = [np.asarray(s, dtype=float).reshape(-1) for s in starts]
    if not points:
        return []
    workers = _worker_count(len(points))
    if workers <= 1:
        return [two_stage_solve(problem, p, opts) for p in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda p: two_stage_solve(problem, p, opts), points))
