"""Dominance relations and non-dominated filtering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ContractViolation

_DUP_TOL = 1e-12


@dataclass(frozen=True)
class FrontEntry:
    decision: np.ndarray
    objectives: np.ndarray
    origin: str = ""


@dataclass(frozen=True)
class ParetoFront:
    entries: tuple[FrontEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def objective_matrix(self) -> np.ndarray:
        if not self.entries:
            return np.empty((0, 0))
        return np.array([e.objectives for e in self.entries])


def dominates(a: np.ndarray, b: np.ndarray) -> bool:
    """True iff ``a`` is no worse everywhere and strictly better somewhere."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise ContractViolation(
            f"objective length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return bool(np.all(a <= b) and np.any(a < b))


def _as_entry(item) -> FrontEntry:
    if isinstance(item, FrontEntry):
        return item
    decision, objectives = item[0], item[1]
    origin = item[2] if len(item) > 2 else ""
    return FrontEntry(
        decision=np.asarray(decision, dtype=float).reshape(-1),
        objectives=np.asarray(objectives, dtype=float).reshape(-1),
        origin=str(origin),
    )


def non_dominated_filter(points: Sequence) -> ParetoFront:
    """Keep the points no other input point dominates.

    Input order is preserved among survivors; objective vectors that
    coincide within 1e-12 componentwise keep only the first occurrence.
    """
    entries = [_as_entry(p) for p in points]
    if entries:
        dim = entries[0].objectives.shape[0]
        for e in entries[1:]:
            if e.objectives.shape[0] != dim:
                raise ContractViolation(
                    f"objective length mismatch: {e.objectives.shape[0]} vs {dim}")
    survivors: list[FrontEntry] = []
    for i, e in enumerate(entries):
        dominated = False
        for j, other in enumerate(entries):
            if j != i and dominates(other.objectives, e.objectives):
                dominated = True
                break
        if dominated:
            continue
        duplicate = any(
            np.all(np.abs(kept.objectives - e.objectives) <= _DUP_TOL)
            for kept in survivors)
        if not duplicate:
            survivors.append(e)
    return ParetoFront(entries=tuple(survivors))


def merge_fronts(fronts: Sequence[ParetoFront]) -> ParetoFront:
    """Filter the concatenation; origin labels survive for counting."""
    pooled: list[FrontEntry] = []
    dim: int | None = None
    for front in fronts:
        for e in front.entries:
            if dim is None:
                dim = e.objectives.shape[0]
            elif e.objectives.shape[0] != dim:
                raise ContractViolation(
                    f"objective length mismatch across fronts: "
                    f"{e.objectives.shape[0]} vs {dim}")
            pooled.append(e)
    return non_dominated_filter(pooled)
