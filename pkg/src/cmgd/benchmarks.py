"""Built-in benchmark problems.

Three families: a 3-variable toy with a known Pareto segment, a
three-regime piecewise-linear speed-density calibration, and a
synthetic multi-criteria portfolio. Each returns a ProblemSpec with
analytic gradients and an exact linear constraint view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import (
    Constraint,
    ContractViolation,
    LinearConstraints,
    Objective,
    ProblemSpec,
    VariableBounds,
)

_SQRT3 = math.sqrt(3.0)


# ---------------------------------------------------------------------------
# toy problem


def toy_problem() -> ProblemSpec:
    """Two exponential objectives on R^3 inside the slab |x1+x2+x3| <= 1.

    The Pareto set is the segment {t*(1,1,1) : t in [-1/3, 1/3]}; each
    objective's unconstrained minimizer lies outside the slab.
    """
    anchor1 = np.full(3, -1.0 / _SQRT3)
    anchor2 = np.full(3, 1.0 / _SQRT3)

    def make(anchor: np.ndarray, name: str) -> Objective:
        def value(x: np.ndarray) -> float:
            d = x - anchor
            return 1.0 - math.exp(-float(d @ d))

        def gradient(x: np.ndarray) -> np.ndarray:
            d = x - anchor
            return 2.0 * d * math.exp(-float(d @ d))

        return Objective(value=value, gradient=gradient, name=name)

    ones = np.ones(3)
    constraints = (
        Constraint(value=lambda x: float(x.sum()) - 1.0,
                   gradient=lambda x: ones.copy(), name="sum_upper"),
        Constraint(value=lambda x: -float(x.sum()) - 1.0,
                   gradient=lambda x: -ones.copy(), name="sum_lower"),
    )
    linear = LinearConstraints(
        a=np.array([[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0]]),
        b=np.array([1.0, 1.0]),
    )
    return ProblemSpec(
        dimension=3,
        objectives=(make(anchor1, "f1"), make(anchor2, "f2")),
        constraints=constraints,
        linear_constraints=linear,
        name="toy",
    )


def toy_analytic_front(t: float) -> tuple[float, float]:
    """Objective pair at x = t*(1,1,1) on the Pareto segment."""
    t = float(t)
    if not -1.0 / 3.0 - 1e-12 <= t <= 1.0 / 3.0 + 1e-12:
        raise ContractViolation(f"t={t} outside [-1/3, 1/3]")
    f1 = 1.0 - math.exp(-3.0 * (t + 1.0 / _SQRT3) ** 2)
    f2 = 1.0 - math.exp(-3.0 * (t - 1.0 / _SQRT3) ** 2)
    return f1, f2


# ---------------------------------------------------------------------------
# speed-density calibration


@dataclass(frozen=True)
class SpeedDensityDataset:
    """Per-record traffic measurements; densities positive, speeds >= 0."""

    flow: np.ndarray
    density: np.ndarray
    speed: np.ndarray
    skipped: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for label in ("flow", "density", "speed"):
            arr = np.asarray(getattr(self, label), dtype=float).reshape(-1)
            object.__setattr__(self, label, arr)
        n = self.density.shape[0]
        if self.flow.shape[0] != n or self.speed.shape[0] != n:
            raise ContractViolation("flow/density/speed lengths differ")
        if n == 0:
            raise ContractViolation("dataset has no records")
        if not np.all(np.isfinite(self.density)) or np.any(self.density <= 0.0):
            raise ContractViolation("densities must be finite and positive")
        if not np.all(np.isfinite(self.speed)) or np.any(self.speed < 0.0):
            raise ContractViolation("speeds must be finite and nonnegative")

    def __len__(self) -> int:
        return int(self.density.shape[0])

    @property
    def max_density(self) -> float:
        return float(self.density.max())

    @property
    def records(self) -> list[tuple[float, float, float]]:
        return [(float(q), float(r), float(v))
                for q, r, v in zip(self.flow, self.density, self.speed)]


@dataclass(frozen=True)
class FdModelParams:
    """Intercept/slope per regime, ordered (a1, b1, a2, b2, a3, b3)."""

    a1: float
    b1: float
    a2: float
    b2: float
    a3: float
    b3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.b1, self.a2, self.b2, self.a3, self.b3])


class Weighting(Enum):
    UNIFORM = "uniform"
    INVERSE_BIN = "inverse_bin"


def piecewise_speed(params: FdModelParams | np.ndarray, density: np.ndarray,
                    breakpoints: tuple[float, float] = (40.0, 65.0)) -> np.ndarray:
    """Model speed a_r - b_r * rho with the regime picked per record."""
    p = params.as_array() if isinstance(params, FdModelParams) else np.asarray(params, dtype=float)
    rho = np.asarray(density, dtype=float)
    b1, b2 = breakpoints
    out = np.where(rho <= b1, p[0] - p[1] * rho,
                   np.where(rho <= b2, p[2] - p[3] * rho, p[4] - p[5] * rho))
    return out


def generate_speed_density(params: FdModelParams,
                           counts: tuple[int, int, int],
                           seed: int | None = None,
                           noise_sigma: float = 0.0,
                           max_density: float = 120.0,
                           breakpoints: tuple[float, float] = (40.0, 65.0),
                           min_density: float = 2.0) -> SpeedDensityDataset:
    """Sample densities per regime, apply the model, add Gaussian noise.

    Speeds are clamped at zero so the dataset invariant holds even for
    large noise. Flow is density times speed.
    """
    b1, b2 = breakpoints
    if not min_density < b1 < b2 < max_density:
        raise ContractViolation("need min_density < breakpoints < max_density")
    rng = np.random.default_rng(seed)
    parts = []
    for count, lo, hi in zip(counts, (min_density, b1, b2), (b1, b2, max_density)):
        if count < 0:
            raise ContractViolation("counts must be nonnegative")
        parts.append(rng.uniform(lo + 1e-9, hi, size=count))
    rho = np.concatenate(parts)
    v = piecewise_speed(params, rho, breakpoints)
    if noise_sigma > 0.0:
        v = v + rng.normal(0.0, noise_sigma, size=rho.shape[0])
    v = np.maximum(v, 0.0)
    return SpeedDensityDataset(flow=rho * v, density=rho, speed=v)


def save_speed_density(data: SpeedDensityDataset, path: str | Path) -> None:
    """Write one whitespace-separated record per line at full precision."""
    lines = [f"{q:.17g} {r:.17g} {v:.17g}"
             for q, r, v in zip(data.flow, data.density, data.speed)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_speed_density(path: str | Path) -> SpeedDensityDataset:
    """Parse flow/density/speed text; malformed lines are skipped with
    a line-numbered note in ``skipped``."""
    text = Path(path).read_text()
    flow: list[float] = []
    density: list[float] = []
    speed: list[float] = []
    skipped: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 3:
            skipped.append(f"line {lineno}: expected 3 fields, got {len(fields)}")
            continue
        try:
            q, r, v = (float(fields[i]) for i in range(3))
        except ValueError:
            skipped.append(f"line {lineno}: non-numeric field")
            continue
        if not (math.isfinite(r) and math.isfinite(v) and math.isfinite(q)):
            skipped.append(f"line {lineno}: non-finite value")
            continue
        if r <= 0.0 or v < 0.0:
            skipped.append(f"line {lineno}: density must be > 0 and speed >= 0")
            continue
        flow.append(q)
        density.append(r)
        speed.append(v)
    if not flow:
        raise ValueError(
            f"no valid records in {path}"
            + (f" ({len(skipped)} lines skipped)" if skipped else ""))
    return SpeedDensityDataset(flow=np.array(flow), density=np.array(density),
                               speed=np.array(speed), skipped=tuple(skipped))


def compute_bin_weights(data: SpeedDensityDataset,
                        bin_width: float = 5.0) -> np.ndarray:
    """Inverse-bin-frequency record weights, mean-normalized to 1.

    weight = N / (bin count * number of nonempty bins), so sparse
    density ranges count more in the fit.
    """
    if not bin_width > 0.0:
        raise ContractViolation("bin_width must be positive")
    idx = np.floor(data.density / bin_width).astype(int)
    bins, inverse, counts = np.unique(idx, return_inverse=True, return_counts=True)
    n = len(data)
    w = n / (counts[inverse] * len(bins))
    return w / w.mean()


def fd_constraint_matrix(breakpoints: tuple[float, float],
                         max_density: float) -> tuple[np.ndarray, np.ndarray]:
    """Rows A p <= 0 keeping the piecewise model decreasing, nonnegative,
    and non-increasing across regime joins. Parameter order
    (a1, b1, a2, b2, a3, b3)."""
    b1, b2 = float(breakpoints[0]), float(breakpoints[1])
    rho = float(max_density)
    if not 0.0 < b1 < b2:
        raise ContractViolation("breakpoints must satisfy 0 < b1 < b2")
    if rho <= b2:
        raise ContractViolation("max density must exceed the second breakpoint")
    a = np.array([
        [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0],       # a1 >= 0
        [0.0, -1.0, 0.0, 0.0, 0.0, 0.0],       # b1 >= 0
        [-1.0, b1, 0.0, 0.0, 0.0, 0.0],        # speed >= 0 at first join
        [-1.0, b1, 1.0, -b1, 0.0, 0.0],        # non-increasing across join 1
        [0.0, 0.0, 0.0, b1 - b2, 0.0, 0.0],    # regime 2 decreasing
        [0.0, 0.0, -1.0, b2, 1.0, -b2],        # non-increasing across join 2
        [0.0, 0.0, 0.0, 0.0, 0.0, b2 - rho],   # regime 3 decreasing
        [0.0, 0.0, 0.0, 0.0, -1.0, rho],       # speed >= 0 at max density
    ])
    return a, np.zeros(8)


def _regime_masks(density: np.ndarray,
                  breakpoints: tuple[float, float]) -> list[np.ndarray]:
    b1, b2 = breakpoints
    return [density <= b1, (density > b1) & (density <= b2), density > b2]


def fd_problem(data: SpeedDensityDataset,
               breakpoints: tuple[float, float] = (40.0, 65.0),
               weighting: Weighting = Weighting.INVERSE_BIN,
               bin_width: float = 5.0) -> ProblemSpec:
    """Weighted least-squares calibration, one objective per regime.

    All constraints are affine in the six parameters, so the exact
    linear path applies.
    """
    masks = _regime_masks(data.density, breakpoints)
    for r, mask in enumerate(masks, start=1):
        if not np.any(mask):
            raise ContractViolation(f"regime {r} has no records")
    if weighting is Weighting.UNIFORM:
        w_all = np.ones(len(data))
    else:
        w_all = compute_bin_weights(data, bin_width)

    objectives = []
    for r, mask in enumerate(masks):
        rho = data.density[mask].copy()
        v = data.speed[mask].copy()
        w = w_all[mask].copy()
        ia, ib = 2 * r, 2 * r + 1

        def value(p: np.ndarray, rho=rho, v=v, w=w, ia=ia, ib=ib) -> float:
            e = v - (p[ia] - p[ib] * rho)
            return float(w @ (e * e))

        def gradient(p: np.ndarray, rho=rho, v=v, w=w, ia=ia, ib=ib) -> np.ndarray:
            e = v - (p[ia] - p[ib] * rho)
            g = np.zeros(6)
            g[ia] = -2.0 * float(w @ e)
            g[ib] = 2.0 * float(w @ (e * rho))
            return g

        objectives.append(Objective(value=value, gradient=gradient,
                                    name=f"sse_regime{r + 1}"))

    a, b = fd_constraint_matrix(breakpoints, data.max_density)
    constraints = tuple(
        Constraint(value=lambda p, row=a[i]: float(row @ p),
                   gradient=lambda p, row=a[i]: row.copy(),
                   name=f"shape_row{i + 1}")
        for i in range(a.shape[0]))
    return ProblemSpec(
        dimension=6,
        objectives=tuple(objectives),
        constraints=constraints,
        linear_constraints=LinearConstraints(a=a, b=b),
        name="speed_density",
    )


def fd_reference_params() -> FdModelParams:
    """Strictly feasible parameters used by the synthetic fixtures."""
    return FdModelParams(a1=75.0, b1=0.45, a2=84.0, b2=0.70, a3=60.0, b3=0.35)


# ---------------------------------------------------------------------------
# portfolio


@dataclass(frozen=True)
class PortfolioInstance:
    n: int
    m: int
    expected_return: np.ndarray
    cost: np.ndarray
    sigma: np.ndarray
    factor: np.ndarray
    eps: float
    blocks: tuple[tuple[int, int], ...]
    lower: np.ndarray
    upper: np.ndarray


def portfolio_problem(n: int, m: int, seed: int | None = None,
                      lower: float = 0.05, upper: float = 0.25,
                      eps: float = 1e-6,
                      k: int | None = None) -> tuple[ProblemSpec, PortfolioInstance]:
    """Return/risk/cost objectives over the simplex with industry bands.

    Assets split into m contiguous equal blocks; block sums must stay in
    [lower, upper]. Covariance is a random rank-k factor model plus
    eps * I, so it is positive definite by construction.
    """
    if n <= 0 or m <= 0 or n % m != 0:
        raise ContractViolation("need n > 0, m > 0, and m dividing n")
    if not (m * lower <= 1.0 <= m * upper):
        raise ContractViolation("industry bands exclude the full allocation")
    if not eps > 0.0:
        raise ContractViolation("eps must be positive")
    if k is None:
        k = max(1, n // 10)
    rng = np.random.default_rng(seed)
    r = rng.uniform(0.05, 0.15, size=n)
    c = rng.uniform(0.01, 0.10, size=n)
    factor = rng.uniform(-1.0, 1.0, size=(n, k)) / math.sqrt(k)
    sigma = factor @ factor.T
    sigma[np.diag_indices(n)] += eps

    block = n // m
    blocks = tuple((j * block, (j + 1) * block) for j in range(m))

    def risk_value(x: np.ndarray) -> float:
        y = factor.T @ x
        return float(y @ y) + eps * float(x @ x)

    def risk_gradient(x: np.ndarray) -> np.ndarray:
        return 2.0 * (factor @ (factor.T @ x)) + 2.0 * eps * x

    objectives = (
        Objective(value=lambda x: -float(r @ x),
                  gradient=lambda x: -r.copy(), name="neg_return"),
        Objective(value=risk_value, gradient=risk_gradient, name="risk"),
        Objective(value=lambda x: float(c @ x),
                  gradient=lambda x: c.copy(), name="cost"),
    )

    rows: list[np.ndarray] = []
    rhs: list[float] = []
    ones = np.ones(n)
    rows.append(ones)
    rhs.append(1.0)
    rows.append(-ones)
    rhs.append(-1.0)
    for start, stop in blocks:
        ind = np.zeros(n)
        ind[start:stop] = 1.0
        rows.append(ind)
        rhs.append(upper)
        rows.append(-ind)
        rhs.append(-lower)
    a = np.array(rows)
    b = np.array(rhs)

    constraints = tuple(
        Constraint(value=lambda x, row=a[i], bi=b[i]: float(row @ x) - bi,
                   gradient=lambda x, row=a[i]: row.copy(),
                   name=_portfolio_row_name(i, m))
        for i in range(a.shape[0]))

    problem = ProblemSpec(
        dimension=n,
        objectives=objectives,
        constraints=constraints,
        linear_constraints=LinearConstraints(a=a, b=b),
        variable_bounds=VariableBounds(lower=np.zeros(n),
                                       upper=np.full(n, np.inf)),
        name="portfolio",
    )
    instance = PortfolioInstance(
        n=n, m=m, expected_return=r, cost=c, sigma=sigma, factor=factor,
        eps=eps, blocks=blocks,
        lower=np.full(m, lower), upper=np.full(m, upper),
    )
    return problem, instance


def _portfolio_row_name(i: int, m: int) -> str:
    if i == 0:
        return "budget_upper"
    if i == 1:
        return "budget_lower"
    j, hi = divmod(i - 2, 2)
    side = "upper" if hi == 0 else "lower"
    return f"industry{j + 1}_{side}"


def portfolio_starts(instance: PortfolioInstance, count: int,
                     seed: int | None = None) -> list[np.ndarray]:
    """Feasible interior points: Dirichlet industry weights inside the
    bands, then a Dirichlet split within each block."""
    rng = np.random.default_rng(seed)
    m = instance.m
    lo = instance.lower
    hi = instance.upper
    points = []
    for _ in range(count):
        for _ in range(10_000):
            w = lo + rng.dirichlet(np.ones(m)) * (1.0 - lo.sum())
            if np.all(w <= hi):
                break
        else:
            raise ContractViolation("industry band sampler failed")
        x = np.empty(instance.n)
        for j, (start, stop) in enumerate(instance.blocks):
            x[start:stop] = rng.dirichlet(np.ones(stop - start)) * w[j]
        points.append(x)
    return points
