"""Post-hoc analytics for search runs.

Anytime regret curves of the validation-selected incumbent, cross-seed
mean/std aggregation, and Spearman rank correlation between a low-budget
stand-in error and the table's errors at every budget.  Selection is
always by validation, reporting covers validation and test.
"""

from __future__ import annotations

import dataclasses
import math
from typing import NamedTuple, Sequence

import numpy as np

from .benchtab import BUDGETS, BenchTable, MAX_BUDGET, best_in_space
from .enumeration import distinct_pruned
from .optimizers import Trajectory
from .relax import ArchWeights, sample_architecture
from .space import Architecture, SearchSpaceSpec


class RegretPoint(NamedTuple):
    t_sim: float
    epoch: int
    val_regret: float
    test_regret: float


@dataclasses.dataclass(frozen=True)
class RegretCurve:
    """Anytime regret of one search run, indexed by epoch."""

    algorithm: str
    seed: int
    points: tuple[RegretPoint, ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("regret curve cannot be empty")
        times = [p.t_sim for p in self.points]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("t_sim must be nondecreasing")
        if any(p.val_regret < 0 or p.test_regret < 0 for p in self.points):
            raise ValueError("regrets must be nonnegative")
        vals = [p.val_regret for p in self.points]
        if any(b > a for a, b in zip(vals, vals[1:])):
            raise ValueError("incumbent val_regret must be nonincreasing")

    def epochs(self) -> tuple[int, ...]:
        return tuple(p.epoch for p in self.points)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "points": [p._asdict() for p in self.points],
        }


def regret_trajectory(
    trajectory: Trajectory, table: BenchTable, spec: SearchSpaceSpec
) -> RegretCurve:
    """Anytime regret of the running validation incumbent.

    The incumbent at an epoch is the lowest-val@108 architecture seen so
    far (earliest on ties); both regrets are measured for it against the
    space optimum at 108 epochs.  Simulated wall clock adds to the search
    time the 108-epoch training time of each newly selected incumbent,
    since measuring a selection means training it once.
    """
    _, best_val = best_in_space(table, spec, MAX_BUDGET, metric="validation")
    _, best_test = best_in_space(table, spec, MAX_BUDGET, metric="test")
    points = []
    incumbent: Architecture | None = None
    incumbent_val = math.inf
    trained = 0.0
    for entry in trajectory.entries:
        val = table.validation_error(entry.architecture, MAX_BUDGET)
        if val < incumbent_val:
            incumbent = entry.architecture
            incumbent_val = val
            trained += table.training_time(incumbent, MAX_BUDGET)
        points.append(
            RegretPoint(
                t_sim=entry.t_search + trained,
                epoch=entry.epoch,
                val_regret=incumbent_val - best_val,
                test_regret=table.test_error(incumbent, MAX_BUDGET) - best_test,
            )
        )
    return RegretCurve(
        algorithm=trajectory.kind, seed=trajectory.seed, points=tuple(points)
    )


@dataclasses.dataclass(frozen=True)
class AggregateBands:
    """Pointwise mean and population std over same-grid regret curves."""

    algorithm: str
    epochs: tuple[int, ...]
    t_sim_mean: tuple[float, ...]
    t_sim_std: tuple[float, ...]
    val_mean: tuple[float, ...]
    val_std: tuple[float, ...]
    test_mean: tuple[float, ...]
    test_std: tuple[float, ...]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def aggregate_runs(curves: Sequence[RegretCurve]) -> AggregateBands:
    if len(curves) < 2:
        raise ValueError("aggregation needs at least 2 curves")
    grid = curves[0].epochs()
    for curve in curves[1:]:
        if curve.epochs() != grid:
            raise ValueError(
                f"mismatched epoch grids: {grid} vs {curve.epochs()}"
            )
    algorithms = {curve.algorithm for curve in curves}
    if len(algorithms) != 1:
        raise ValueError(f"refusing to aggregate across algorithms {algorithms}")

    def bands(field: str) -> tuple[tuple[float, ...], tuple[float, ...]]:
        rows = np.array(
            [[getattr(p, field) for p in curve.points] for curve in curves]
        )
        return (
            tuple(rows.mean(axis=0).tolist()),
            tuple(rows.std(axis=0).tolist()),
        )

    t_mean, t_std = bands("t_sim")
    val_mean, val_std = bands("val_regret")
    test_mean, test_std = bands("test_regret")
    return AggregateBands(
        algorithm=curves[0].algorithm,
        epochs=grid,
        t_sim_mean=t_mean,
        t_sim_std=t_std,
        val_mean=val_mean,
        val_std=val_std,
        test_mean=test_mean,
        test_std=test_std,
    )


def _midranks(values: Sequence[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    order = np.argsort(arr, kind="stable")
    ordered = arr[order]
    ranks = np.empty(arr.size)
    start = 0
    while start < arr.size:
        stop = start
        while stop + 1 < arr.size and ordered[stop + 1] == ordered[start]:
            stop += 1
        ranks[order[start : stop + 1]] = 0.5 * (start + stop) + 1.0
        start = stop + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Pearson correlation of mid-ranks; None when a side has no rank variance."""
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ValueError("need at least 2 observations")
    rx = _midranks(xs)
    ry = _midranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        return None
    return float(np.clip(float(rx @ ry) / denom, -1.0, 1.0))


def correlation_sweep(
    weights_history: Sequence[ArchWeights],
    table: BenchTable,
    spec: SearchSpaceSpec,
    snapshots: Sequence[int],
    *,
    fidelity_budget: int = 12,
    policy_samples: int | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Spearman between the stand-in error and each budget's table error.

    Returns a (len(snapshots), len(BUDGETS)) matrix.  Per architecture
    the stand-in error is its table validation error at
    ``fidelity_budget``; a few-batch evaluation under the snapshot
    weights would need real training.  By default every loose-end-free
    architecture of the space is ranked, so rows differ only through the
    population; with ``policy_samples`` the population is that many
    draws from the snapshot's weights instead, and rows track how the
    policy's preferences sharpen.  Cells with no rank variance are NaN.
    """
    for snapshot in snapshots:
        if not 0 <= snapshot < len(weights_history):
            raise ValueError(
                f"snapshot {snapshot} outside the recorded "
                f"{len(weights_history)} epochs"
            )
    if policy_samples is not None and rng is None:
        raise ValueError("policy sampling requires an rng")
    full_population = (
        distinct_pruned(spec) if policy_samples is None else None
    )
    matrix = np.empty((len(snapshots), len(BUDGETS)))
    for row, snapshot in enumerate(snapshots):
        if full_population is not None:
            population = full_population
        else:
            weights = weights_history[snapshot]
            population = [
                sample_architecture(weights, rng) for _ in range(policy_samples)
            ]
        standin = [
            table.validation_error(arch, fidelity_budget) for arch in population
        ]
        for col, budget in enumerate(BUDGETS):
            truth = [table.validation_error(arch, budget) for arch in population]
            rho = spearman(standin, truth)
            matrix[row, col] = math.nan if rho is None else rho
    return matrix
