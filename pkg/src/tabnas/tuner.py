"""Multi-fidelity hyperparameter tuning for the search engines.

SuccessiveHalving ladders over search-epoch budgets, repeated until a
total evaluation budget (counted in full-budget-equivalent runs) is
spent, with an optional TPE-style kernel-density proposer shared across
ladders.  ``run_tuner`` binds the machinery to an optimizer kind and a
benchmark table: one objective evaluation runs the optimizer for
``budget`` search epochs and scores the selected architecture's
validation error at 108 epochs, charging simulated wall-clock
t_sim = t_search + training time of the selected architecture.

The tuning objective is audited: it never reads test errors.  Test
regret is attached to the incumbents afterwards from the raw table.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
import math
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .benchtab import AuditedTable, BenchTable, MAX_BUDGET, best_in_space
from .optimizers import OptimizerConfig, make_estimator
from .space import Architecture, build_space

_SAMPLERS = ("random", "kde")

#: Fraction of history treated as "good" by the density proposer.
_KDE_GAMMA = 0.15
# Kept small on purpose: a whole rung is proposed under one fitted model, and
# the argmax over a large candidate pool herds every proposal onto the same
# density ridge.
_KDE_CANDIDATES = 4
#: One candidate in five is drawn uniformly so the model cannot lock in.
_KDE_UNIFORM_FRACTION = 0.2
_BANDWIDTH_FLOOR = 0.06


# ---------------------------------------------------------------------------
# Configuration space.
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class Continuous:
    name: str
    lo: float
    hi: float
    log: bool = False

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: need lo < hi")
        if self.log and self.lo <= 0:
            raise ValueError(f"{self.name}: log scale requires lo > 0")

    def sample(self, rng: np.random.Generator) -> float:
        return self.from_unit(rng.random())

    def to_unit(self, value: float) -> float:
        if self.log:
            return math.log(value / self.lo) / math.log(self.hi / self.lo)
        return (value - self.lo) / (self.hi - self.lo)

    def from_unit(self, z: float) -> float:
        z = min(max(z, 0.0), 1.0)
        if self.log:
            value = self.lo * math.exp(z * math.log(self.hi / self.lo))
        else:
            value = self.lo + z * (self.hi - self.lo)
        return float(min(max(value, self.lo), self.hi))


@dataclasses.dataclass(frozen=True)
class Integer:
    name: str
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: need lo < hi")

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.lo, self.hi + 1))

    def to_unit(self, value: int) -> float:
        return (value - self.lo) / (self.hi - self.lo)

    def from_unit(self, z: float) -> int:
        z = min(max(z, 0.0), 1.0)
        return int(min(max(round(self.lo + z * (self.hi - self.lo)), self.lo), self.hi))


@dataclasses.dataclass(frozen=True)
class Categorical:
    name: str
    values: tuple

    def __post_init__(self) -> None:
        if len(self.values) < 2:
            raise ValueError(f"{self.name}: need at least 2 values")
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"{self.name}: duplicate values")

    def sample(self, rng: np.random.Generator):
        return self.values[int(rng.integers(len(self.values)))]


Dimension = Continuous | Integer | Categorical


@dataclasses.dataclass(frozen=True)
class ConfigSpace:
    dimensions: tuple[Dimension, ...]

    def __post_init__(self) -> None:
        if not self.dimensions:
            raise ValueError("configuration space cannot be empty")
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate dimension names: {names}")

    def __len__(self) -> int:
        return len(self.dimensions)

    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dimensions)

    def sample(self, rng: np.random.Generator) -> dict:
        return {d.name: d.sample(rng) for d in self.dimensions}


def config_space_preset(level: int) -> ConfigSpace:
    """The three nested tuning spaces (2-, 3-, 9-dimensional)."""
    if level not in (1, 2, 3):
        raise ValueError(f"preset level must be 1, 2 or 3, got {level}")
    dims: list[Dimension] = [
        Continuous("logit_l2", 1e-5, 1.0, log=True),
        Continuous("noise_prob", 0.0, 1.0),
    ]
    if level >= 2:
        dims.append(Continuous("arch_lr", 1e-3, 1.0, log=True))
    if level == 3:
        dims.extend(
            [
                Continuous("baseline_decay", 0.0, 0.99),
                Integer("samples_per_step", 2, 16),
                Continuous("tau_start", 1.0, 5.0, log=True),
                Continuous("tau_end", 0.01, 1.0, log=True),
                Categorical("fidelity_budget", (4, 12, 36)),
                Continuous("selection_noise", 0.0, 0.05),
            ]
        )
    return ConfigSpace(tuple(dims))


# ---------------------------------------------------------------------------
# SuccessiveHalving engine.
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class TunerConfig:
    min_budget: int = 25
    max_budget: int = 100
    eta: int = 2
    eval_budget: float = 280.0
    sampler: str = "random"
    bracket_rotation: bool = False
    workers: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.min_budget < 1:
            raise ValueError("min_budget must be at least 1")
        if not self.min_budget < self.max_budget:
            raise ValueError("min_budget must be smaller than max_budget")
        if self.eta < 2:
            raise ValueError("eta must be at least 2")
        if self.eval_budget <= 0:
            raise ValueError("eval_budget must be positive")
        if self.sampler not in _SAMPLERS:
            raise ValueError(f"sampler must be one of {_SAMPLERS}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


def budget_ladder(min_budget: int, max_budget: int, eta: int) -> list[int]:
    """Geometric rungs min*eta^i capped at (and ending with) max."""
    if min_budget < 1 or min_budget > max_budget:
        raise ValueError(f"need 1 <= min_budget <= max_budget, got "
                         f"({min_budget}, {max_budget})")
    if eta < 2:
        raise ValueError("eta must be at least 2")
    rungs = []
    budget = min_budget
    while budget < max_budget:
        rungs.append(budget)
        budget *= eta
    rungs.append(max_budget)
    return rungs


def ladder_populations(n: int, eta: int, rungs: int) -> list[int]:
    """Per-rung member counts: n, then ceil(previous / eta)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    counts = [n]
    for _ in range(rungs - 1):
        counts.append(math.ceil(counts[-1] / eta))
    return counts


class ObjectiveValue(NamedTuple):
    score: float
    cost: float


class Evaluation(NamedTuple):
    sample_index: int
    budget: int
    config: dict
    score: float
    cost: float
    cumulative_cost: float


class Incumbent(NamedTuple):
    cumulative_cost: float
    sample_index: int
    budget: int
    config: dict
    score: float


@dataclasses.dataclass(frozen=True)
class TuneTrace:
    evaluations: tuple[Evaluation, ...]
    incumbents: tuple[Incumbent, ...]


def _coerce(value, budget: int) -> ObjectiveValue:
    if isinstance(value, ObjectiveValue):
        return value
    return ObjectiveValue(float(value), float(budget))


def _evaluate_rung(
    objective, members: list[tuple[int, dict]], budget: int, workers: int
) -> list[ObjectiveValue]:
    def call(member):
        index, config = member
        try:
            return _coerce(objective(config, budget), budget)
        except Exception as exc:
            raise RuntimeError(
                f"objective failed for sample {index} at budget {budget}: "
                f"{config!r}"
            ) from exc

    if workers == 1 or len(members) == 1:
        return [call(member) for member in members]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        # map preserves member order, so results commit deterministically
        return list(pool.map(call, members))


def successive_halving(
    objective: Callable[[dict, int], ObjectiveValue | float],
    space: ConfigSpace,
    config: TunerConfig,
    rng: np.random.Generator,
    n: int | None = None,
    propose: Callable[[list[tuple[dict, float]], np.random.Generator], dict]
    | None = None,
) -> TuneTrace:
    """Repeated SuccessiveHalving ladders within the evaluation budget.

    Each ladder proposes ``n`` configurations (default eta**rungs), runs
    them up the budget ladder promoting the best ceil(m/eta) per rung
    (ties to the earlier sample index), and commits results in
    sample-index order.  Ladders repeat until the next one would not fit
    in ``config.eval_budget`` full-budget-equivalent evaluations; the
    first always runs.  ``propose`` overrides the sampler; otherwise
    ``sampler="kde"`` routes proposals through the density model.
    """
    full_ladder = budget_ladder(config.min_budget, config.max_budget, config.eta)
    evaluations: list[Evaluation] = []
    cumulative = 0.0
    spent = 0.0
    next_index = 0
    bracket = 0
    while True:
        if config.bracket_rotation:
            rungs = full_ladder[bracket % len(full_ladder):]
        else:
            rungs = full_ladder
        count = n if n is not None else config.eta ** len(rungs)
        populations = ladder_populations(count, config.eta, len(rungs))
        ladder_cost = sum(
            pop * budget / config.max_budget
            for pop, budget in zip(populations, rungs)
        )
        if evaluations and spent + ladder_cost > config.eval_budget:
            break
        needs_history = propose is not None or config.sampler == "kde"
        members = []
        for _ in range(count):
            if needs_history:
                history = [(e.config, e.score) for e in evaluations]
                if propose is not None:
                    proposal = propose(history, rng)
                else:
                    proposal = kde_propose(history, space, rng)
            else:
                proposal = space.sample(rng)
            members.append((next_index, proposal))
            next_index += 1
        alive = members
        for position, budget in enumerate(rungs):
            results = _evaluate_rung(objective, alive, budget, config.workers)
            for (index, proposal), value in zip(alive, results):
                cumulative += value.cost
                spent += budget / config.max_budget
                evaluations.append(
                    Evaluation(
                        sample_index=index,
                        budget=budget,
                        config=proposal,
                        score=value.score,
                        cost=value.cost,
                        cumulative_cost=cumulative,
                    )
                )
            if position + 1 < len(rungs):
                keep = math.ceil(len(alive) / config.eta)
                ranked = sorted(
                    range(len(alive)),
                    key=lambda i: (results[i].score, alive[i][0]),
                )
                alive = [alive[i] for i in sorted(ranked[:keep])]
        bracket += 1
    incumbents: list[Incumbent] = []
    for evaluation in evaluations:
        if not incumbents or evaluation.score < incumbents[-1].score:
            incumbents.append(
                Incumbent(
                    cumulative_cost=evaluation.cumulative_cost,
                    sample_index=evaluation.sample_index,
                    budget=evaluation.budget,
                    config=evaluation.config,
                    score=evaluation.score,
                )
            )
    return TuneTrace(evaluations=tuple(evaluations), incumbents=tuple(incumbents))


# ---------------------------------------------------------------------------
# Kernel-density proposer.
# ---------------------------------------------------------------------------


def _bandwidth(points: np.ndarray) -> float:
    scott = 1.06 * float(points.std()) * len(points) ** -0.2
    return max(scott, _BANDWIDTH_FLOOR)


def _log_density(z: float, points: np.ndarray, bandwidth: float) -> float:
    scaled = (z - points) / bandwidth
    density = float(np.exp(-0.5 * scaled**2).mean()) / (
        bandwidth * math.sqrt(2.0 * math.pi)
    )
    return math.log(max(density, 1e-300))


def kde_propose(
    history: Sequence[tuple[dict, float]],
    space: ConfigSpace,
    rng: np.random.Generator,
) -> dict:
    """TPE-style proposal: maximize good/bad density ratio.

    Below d+2 history points this is exactly the random sampler.
    """
    if len(history) < len(space) + 2:
        return space.sample(rng)
    # rung re-evaluations repeat configs; keep each config's best score
    best_scores: dict[str, tuple[dict, float]] = {}
    for config, score in history:
        key = json.dumps(config, sort_keys=True)
        if key not in best_scores or score < best_scores[key][1]:
            best_scores[key] = (config, score)
    distinct = list(best_scores.values())
    ranked = sorted(range(len(distinct)), key=lambda i: (distinct[i][1], i))
    n_good = max(1, math.ceil(_KDE_GAMMA * len(distinct)))
    good = [distinct[i][0] for i in ranked[:n_good]]
    bad = [distinct[i][0] for i in ranked[n_good:]]

    models = {}
    for dim in space.dimensions:
        if isinstance(dim, Categorical):
            k = len(dim.values)
            good_counts = np.array(
                [sum(c[dim.name] == v for c in good) for v in dim.values]
            )
            good_p = (good_counts + 1.0) / (len(good) + k)
            if bad:
                bad_counts = np.array(
                    [sum(c[dim.name] == v for c in bad) for v in dim.values]
                )
                bad_p = (bad_counts + 1.0) / (len(bad) + k)
            else:
                bad_p = np.full(k, 1.0 / k)
            models[dim.name] = (good_p, bad_p)
        else:
            good_z = np.array([dim.to_unit(c[dim.name]) for c in good])
            if bad:
                bad_z = np.array([dim.to_unit(c[dim.name]) for c in bad])
            else:
                bad_z = None  # degenerate history: rate against a flat density
            models[dim.name] = (
                good_z,
                _bandwidth(good_z),
                bad_z,
                None if bad_z is None else _bandwidth(bad_z),
            )

    best = None
    best_ratio = -math.inf
    for _ in range(_KDE_CANDIDATES):
        uniform = rng.random() < _KDE_UNIFORM_FRACTION
        candidate = {}
        ratio = 0.0
        for dim in space.dimensions:
            if isinstance(dim, Categorical):
                good_p, bad_p = models[dim.name]
                if uniform:
                    choice = int(rng.integers(len(dim.values)))
                else:
                    choice = int(rng.choice(len(dim.values), p=good_p))
                candidate[dim.name] = dim.values[choice]
                ratio += math.log(good_p[choice]) - math.log(bad_p[choice])
            else:
                good_z, good_h, bad_z, bad_h = models[dim.name]
                if uniform:
                    z = rng.random()
                else:
                    center = good_z[int(rng.integers(len(good_z)))]
                    z = min(max(center + good_h * rng.normal(), 0.0), 1.0)
                candidate[dim.name] = dim.from_unit(z)
                ratio += _log_density(z, good_z, good_h)
                if bad_z is not None:
                    ratio -= _log_density(z, bad_z, bad_h)
        if ratio > best_ratio:
            best, best_ratio = candidate, ratio
    return best


# ---------------------------------------------------------------------------
# Optimizer-tuning objective.
# ---------------------------------------------------------------------------


class TunedIncumbent(NamedTuple):
    t_sim: float
    config: dict
    val_error: float
    val_regret: float
    test_regret: float
    architecture: Architecture


@dataclasses.dataclass(frozen=True)
class TunerResult:
    kind: str
    space_id: int
    sampler: str
    trace: TuneTrace
    incumbents: tuple[TunedIncumbent, ...]
    audit_reads: dict


def _evaluation_seed(seed: int, config: dict) -> int:
    payload = json.dumps(config, sort_keys=True).encode()
    digest = hashlib.blake2b(
        payload + seed.to_bytes(8, "little", signed=True), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def _config_key(config: dict) -> str:
    return json.dumps(config, sort_keys=True)


def run_tuner(
    optimizer_kind: str,
    space_id: int,
    table: BenchTable,
    config_space: ConfigSpace,
    tuner_config: TunerConfig,
) -> TunerResult:
    """Tune an optimizer's hyperparameters against a benchmark table.

    One objective evaluation runs the optimizer for ``budget`` search
    epochs with the sampled hyperparameters (seeded deterministically
    from the config itself) and scores its selected architecture's
    validation error at 108 epochs; the charged cost is
    t_search + t_train(selected, 108).  The objective reads metrics
    through an audit wrapper, and a test-error read during tuning is a
    hard error.  Incumbent test regrets are filled in afterwards from
    the raw table.
    """
    spec = build_space(space_id)
    audited = AuditedTable(table)
    selected: dict[tuple[str, int], Architecture] = {}

    def objective(config: dict, budget: int) -> ObjectiveValue:
        optimizer = OptimizerConfig(
            kind=optimizer_kind,
            epochs=int(budget),
            seed=_evaluation_seed(tuner_config.seed, config),
            **config,
        )
        estimator = make_estimator(optimizer).fit(spec, audited, record_test=False)
        architecture = estimator.selected_architecture_
        selected[(_config_key(config), int(budget))] = architecture
        t_sim = estimator.trajectory_.entries[-1].t_search + audited.training_time(
            architecture, MAX_BUDGET
        )
        return ObjectiveValue(score=estimator.best_val_, cost=t_sim)

    rng = np.random.default_rng(tuner_config.seed)
    trace = successive_halving(objective, config_space, tuner_config, rng)
    if audited.reads["test"]:
        raise RuntimeError(
            f"tuning objective read test errors {audited.reads['test']} times"
        )

    _, best_val = best_in_space(table, spec, MAX_BUDGET, metric="validation")
    _, best_test = best_in_space(table, spec, MAX_BUDGET, metric="test")
    incumbents = []
    for incumbent in trace.incumbents:
        architecture = selected[(_config_key(incumbent.config), incumbent.budget)]
        incumbents.append(
            TunedIncumbent(
                t_sim=incumbent.cumulative_cost,
                config=incumbent.config,
                val_error=incumbent.score,
                val_regret=incumbent.score - best_val,
                test_regret=table.test_error(architecture, MAX_BUDGET) - best_test,
                architecture=architecture,
            )
        )
    return TunerResult(
        kind=optimizer_kind,
        space_id=space_id,
        sampler=tuner_config.sampler,
        trace=trace,
        incumbents=tuple(incumbents),
        audit_reads=dict(audited.reads),
    )
