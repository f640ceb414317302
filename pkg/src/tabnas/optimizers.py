"""Search engines producing per-epoch architecture trajectories.

Six optimizers share the estimator interface: construct with
hyperparameters, call ``fit(spec, table)``, then read ``trajectory_``,
``selected_architecture_`` and ``best_val_`` (the logit-based engines
also keep their final ``weights_``).  Four are relaxation-based:
a score-function gradient follower, a Gumbel single-path sampler with
temperature annealing, a REINFORCE policy with moving baseline, and
random search under weight sharing (uniform sampling ranked at reduced
fidelity).  Two are discrete baselines evaluating at the full budget:
uniform random search and aging evolution.

The relaxation-based optimizers never see full-budget errors during
search; their objective is the validation error at ``fidelity_budget``
(default 12 of the 108-epoch ladder), the stand-in for a shared-weights
model's cheap validation pass.

Simulated time: ``t_search`` accumulates the table's training time for
every metric the algorithm itself needs, at the budget it queries it.
The per-epoch bookkeeping reads (val/test at 108 of the recorded
architecture) exist for later analysis and are not charged.
"""

from __future__ import annotations

import collections
import dataclasses
import itertools
import math
from typing import Iterable, NamedTuple

import numpy as np
from sklearn.base import BaseEstimator

from .benchtab import BenchTable, MAX_BUDGET, BUDGETS
from .relax import (
    ArchWeights,
    arch_log_prob_gradient,
    categorical_log_prob_gradient,
    discretize,
    enumerate_subset_probs,
    init_weights,
    sample_architecture,
    subset_log_prob_gradient,
)
from .space import Architecture, OPS, SearchSpaceSpec, assemble_architecture, build_space

KINDS = ("DARTS_SF", "GDAS", "ENAS_PG", "RANDOM_WS", "RANDOM_SEARCH", "REG_EVOLUTION")

#: Raw-assignment count above which exact enumeration is refused.
_EXACT_LIMIT = 200_000


@dataclasses.dataclass(frozen=True)
class OptimizerConfig:
    """Bundle of every optimizer knob; each engine reads its own subset."""

    kind: str
    epochs: int = 50
    arch_lr: float = 0.05
    logit_l2: float = 0.0
    samples_per_step: int = 8
    tau_start: float = 5.0
    tau_end: float = 0.1
    baseline_decay: float = 0.9
    population_size: int = 20
    tournament_size: int = 5
    fidelity_budget: int = 12
    selection_noise: float = 0.01
    noise_prob: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        # 0 is admitted so a no-update run stays expressible.
        if self.arch_lr < 0:
            raise ValueError("arch_lr must be nonnegative")
        if self.logit_l2 < 0:
            raise ValueError("logit_l2 must be nonnegative")
        if self.samples_per_step < 2:
            raise ValueError("samples_per_step must be at least 2")
        if not self.tau_start >= self.tau_end > 0:
            raise ValueError("need tau_start >= tau_end > 0")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ValueError("baseline_decay must lie in [0, 1)")
        if self.tournament_size > self.population_size:
            raise ValueError("tournament cannot exceed the population")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be at least 1")
        if self.fidelity_budget not in BUDGETS:
            raise ValueError(f"fidelity_budget must be one of {BUDGETS}")
        if self.selection_noise < 0:
            raise ValueError("selection_noise must be nonnegative")
        if not 0.0 <= self.noise_prob <= 1.0:
            raise ValueError("noise_prob must lie in [0, 1]")


@dataclasses.dataclass(frozen=True)
class TrajectoryEntry:
    epoch: int
    architecture: Architecture
    val_108: float
    test_108: float
    objective: float
    t_search: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "architecture": self.architecture.to_text(),
            "val_108": self.val_108,
            "test_108": self.test_108,
            "objective": self.objective,
            "t_search": self.t_search,
        }


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Per-epoch record of a search run.

    ``entries`` holds one element per search epoch; engines with a
    separate final-selection phase append one more entry for it, so the
    length is epochs or epochs + 1.
    """

    kind: str
    seed: int
    entries: tuple[TrajectoryEntry, ...]
    selected: Architecture

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("trajectory cannot be empty")
        times = [e.t_search for e in self.entries]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("t_search must be nondecreasing")

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "selected": self.selected.to_text(),
            "entries": [e.to_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Trajectory":
        return cls(
            kind=payload["kind"],
            seed=payload["seed"],
            selected=Architecture.from_text(payload["selected"]),
            entries=tuple(
                TrajectoryEntry(
                    epoch=e["epoch"],
                    architecture=Architecture.from_text(e["architecture"]),
                    val_108=e["val_108"],
                    test_108=e["test_108"],
                    objective=e["objective"],
                    t_search=e["t_search"],
                )
                for e in payload["entries"]
            ),
        )


class _Meter:
    """Charges simulated training seconds for the queries a search makes."""

    def __init__(self, table: BenchTable, record_test: bool = True) -> None:
        self.table = table
        self.record_test = record_test
        self.t_search = 0.0

    def val(self, arch: Architecture, budget: int) -> float:
        self.t_search += self.table.training_time(arch, budget)
        return self.table.validation_error(arch, budget)

    def peek(self, arch: Architecture) -> tuple[float, float]:
        """Uncharged full-budget metrics for trajectory bookkeeping."""
        val = self.table.validation_error(arch, MAX_BUDGET)
        if not self.record_test:
            return val, float("nan")
        return val, self.table.test_error(arch, MAX_BUDGET)


# ---------------------------------------------------------------------------
# Exact objective over an enumerable space.
# ---------------------------------------------------------------------------


class _SpacePack(NamedTuple):
    spec: SearchSpaceSpec
    archs: tuple[Architecture, ...]
    pools: tuple[tuple[tuple[int, ...], ...], ...]  # per choosing node
    columns: tuple[np.ndarray, ...]  # per decision, aligned with decisions()


_PACKS: dict[int, _SpacePack] = {}


def _space_pack(spec: SearchSpaceSpec) -> _SpacePack:
    if spec.space_id in _PACKS:
        return _PACKS[spec.space_id]
    blocks = spec.num_blocks
    pools = tuple(
        tuple(
            itertools.combinations(
                spec.parent_candidates(node), spec.parent_count(node)
            )
        )
        for node in spec.choosing_nodes()
    )
    total = math.prod(len(p) for p in pools) * len(OPS) ** blocks
    if total > _EXACT_LIMIT:
        raise ValueError(
            f"space {spec.space_id} has {total} raw assignments, too large "
            "to enumerate exactly; use the sampling estimator"
        )
    archs = []
    rows = []
    for topo_idx in itertools.product(*(range(len(p)) for p in pools)):
        parents = [pools[d][i] for d, i in enumerate(topo_idx)]
        for ops_idx in itertools.product(range(len(OPS)), repeat=blocks):
            archs.append(
                assemble_architecture(
                    spec,
                    parents[:blocks],
                    parents[blocks],
                    [OPS[i] for i in ops_idx],
                )
            )
            row = []
            for j in range(blocks):
                row.append(topo_idx[j])
                row.append(ops_idx[j])
            row.append(topo_idx[blocks])
            rows.append(row)
    matrix = np.asarray(rows, dtype=np.int64)
    pack = _SpacePack(
        spec=spec,
        archs=tuple(archs),
        pools=pools,
        columns=tuple(matrix[:, d] for d in range(matrix.shape[1])),
    )
    _PACKS[spec.space_id] = pack
    return pack


def _decision_choice_probs(
    weights: ArchWeights, pack: _SpacePack
) -> list[np.ndarray]:
    """Per decision (in decisions() order), the probability of each choice."""
    spec = weights.spec
    out = []
    for j in range(1, spec.num_blocks + 1):
        subset_probs = enumerate_subset_probs(
            weights.alpha[j - 1], spec.parent_count(j)
        )
        out.append(np.array([subset_probs[s] for s in pack.pools[j - 1]]))
        beta = weights.beta[j - 1]
        shifted = np.exp(beta - beta.max())
        out.append(shifted / shifted.sum())
    subset_probs = enumerate_subset_probs(weights.gamma, spec.output_parent_count)
    out.append(np.array([subset_probs[s] for s in pack.pools[-1]]))
    return out


def _error_vector(pack: _SpacePack, table: BenchTable, budget: int) -> np.ndarray:
    return np.array([table.validation_error(a, budget) for a in pack.archs])


def exact_expected_error(
    weights: ArchWeights, table: BenchTable, budget: int
) -> float:
    """Sum over every architecture of P(arch) * val_error(arch, budget)."""
    pack = _space_pack(weights.spec)
    choice_probs = _decision_choice_probs(weights, pack)
    mass = np.ones(len(pack.archs))
    for probs, column in zip(choice_probs, pack.columns):
        mass *= probs[column]
    return float(mass @ _error_vector(pack, table, budget))


def exact_expected_error_gradient(
    weights: ArchWeights, table: BenchTable, budget: int
) -> np.ndarray:
    """Exact gradient of exact_expected_error, flat vector layout."""
    spec = weights.spec
    pack = _space_pack(spec)
    choice_probs = _decision_choice_probs(weights, pack)
    mass = np.ones(len(pack.archs))
    for probs, column in zip(choice_probs, pack.columns):
        mass *= probs[column]
    weighted = mass * _error_vector(pack, table, budget)
    pieces = []
    decision = 0
    for j in range(1, spec.num_blocks + 1):
        marginals = np.bincount(
            pack.columns[decision],
            weights=weighted,
            minlength=len(pack.pools[j - 1]),
        )
        grad = np.zeros(j)
        for c, subset in enumerate(pack.pools[j - 1]):
            if marginals[c] != 0.0:
                grad += marginals[c] * subset_log_prob_gradient(
                    weights.alpha[j - 1], subset
                )
        pieces.append(grad)
        decision += 1
        marginals = np.bincount(
            pack.columns[decision], weights=weighted, minlength=len(OPS)
        )
        grad = np.zeros(len(OPS))
        for c in range(len(OPS)):
            if marginals[c] != 0.0:
                grad += marginals[c] * categorical_log_prob_gradient(
                    weights.beta[j - 1], c
                )
        pieces.append(grad)
        decision += 1
    marginals = np.bincount(
        pack.columns[decision], weights=weighted, minlength=len(pack.pools[-1])
    )
    grad = np.zeros(spec.output_node)
    for c, subset in enumerate(pack.pools[-1]):
        if marginals[c] != 0.0:
            grad += marginals[c] * subset_log_prob_gradient(weights.gamma, subset)
    pieces.append(grad)
    return np.concatenate(pieces)


class GradientEstimate(NamedTuple):
    gradient: np.ndarray
    estimate: float
    samples: tuple[Architecture, ...]


def score_function_gradient(
    weights: ArchWeights,
    table: BenchTable,
    budget: int,
    n_samples: int,
    rng: np.random.Generator,
) -> GradientEstimate:
    """Leave-one-out score-function estimate of the objective gradient.

    (1/n) sum_s (err_s - b_s) d log P(a_s), with b_s the mean error of the
    other samples; unbiased for the gradient of exact_expected_error.
    """
    if n_samples < 2:
        raise ValueError("need at least 2 samples for the leave-one-out baseline")
    samples = tuple(sample_architecture(weights, rng) for _ in range(n_samples))
    errors = np.array([table.validation_error(a, budget) for a in samples])
    total = errors.sum()
    gradient = np.zeros(weights.num_logits())
    for arch, err in zip(samples, errors):
        baseline = (total - err) / (n_samples - 1)
        if err != baseline:
            gradient += (err - baseline) * arch_log_prob_gradient(weights, arch)
    gradient /= n_samples
    return GradientEstimate(
        gradient=gradient, estimate=float(errors.mean()), samples=samples
    )


# ---------------------------------------------------------------------------
# The six search engines.
# ---------------------------------------------------------------------------


def _uniform_pools(spec: SearchSpaceSpec) -> tuple[tuple[tuple[int, ...], ...], ...]:
    return tuple(
        tuple(
            itertools.combinations(
                spec.parent_candidates(node), spec.parent_count(node)
            )
        )
        for node in spec.choosing_nodes()
    )


def sample_uniform_architecture(
    spec: SearchSpaceSpec,
    rng: np.random.Generator,
    pools: tuple[tuple[tuple[int, ...], ...], ...] | None = None,
) -> Architecture:
    """One architecture uniform over raw decision tuples.

    Same distribution as the relaxation sampler with uniform weights, but
    a plain pool-index draw, cheap enough for exhaustive-sampling tests.
    """
    if pools is None:
        pools = _uniform_pools(spec)
    picks = [pool[int(rng.integers(len(pool)))] for pool in pools]
    ops = [OPS[int(rng.integers(len(OPS)))] for _ in range(spec.num_blocks)]
    return assemble_architecture(spec, picks[:-1], picks[-1], ops)


class _SearchBase(BaseEstimator):
    """Shared fit plumbing; subclasses implement _search."""

    _kind = ""

    def _config(self) -> OptimizerConfig:
        """Validated view of this estimator's parameters."""
        fields = {f.name for f in dataclasses.fields(OptimizerConfig)}
        params = {k: v for k, v in self.get_params().items() if k in fields}
        return OptimizerConfig(kind=self._kind, **params)

    def fit(
        self, spec: SearchSpaceSpec, table: BenchTable, record_test: bool = True
    ) -> "_SearchBase":
        """Run the search; ``record_test=False`` skips the test-error
        bookkeeping so an audited tuning run never touches test data."""
        config = self._config()
        rng = np.random.default_rng(config.seed)
        meter = _Meter(table, record_test)
        entries, selected, weights = self._search(spec, meter, rng, config)
        self.trajectory_ = Trajectory(
            kind=self._kind, seed=config.seed, entries=tuple(entries), selected=selected
        )
        self.selected_architecture_ = selected
        if weights is not None:
            self.weights_ = weights
        self.best_val_ = table.validation_error(selected, MAX_BUDGET)
        return self

    def _entry(self, meter, epoch, arch, objective) -> TrajectoryEntry:
        val, test = meter.peek(arch)
        return TrajectoryEntry(
            epoch=epoch,
            architecture=arch,
            val_108=val,
            test_108=test,
            objective=objective,
            t_search=meter.t_search,
        )

    def _search(self, spec, meter, rng, config):
        raise NotImplementedError


class DartsSearch(_SearchBase):
    """Gradient descent on the logits of the expected fidelity error.

    The estimator follows score-function gradients by default; with
    ``exact_gradient=True`` (enumerable spaces only) it descends the true
    expectation, which makes the per-epoch objective provably
    nonincreasing for small enough learning rates.
    """

    _kind = "DARTS_SF"

    def __init__(
        self,
        epochs: int = 50,
        arch_lr: float = 0.05,
        logit_l2: float = 0.0,
        samples_per_step: int = 8,
        fidelity_budget: int = 12,
        exact_gradient: bool = False,
        seed: int = 0,
    ):
        self.epochs = epochs
        self.arch_lr = arch_lr
        self.logit_l2 = logit_l2
        self.samples_per_step = samples_per_step
        self.fidelity_budget = fidelity_budget
        self.exact_gradient = exact_gradient
        self.seed = seed

    def _search(self, spec, meter, rng, config):
        weights = init_weights(spec)
        entries = []
        for epoch in range(config.epochs):
            if self.exact_gradient:
                gradient = exact_expected_error_gradient(
                    weights, meter.table, config.fidelity_budget
                )
                objective = exact_expected_error(
                    weights, meter.table, config.fidelity_budget
                )
                meter.val(discretize(weights), config.fidelity_budget)
            else:
                step = score_function_gradient(
                    weights,
                    meter.table,
                    config.fidelity_budget,
                    config.samples_per_step,
                    rng,
                )
                gradient, objective = step.gradient, step.estimate
                for arch in step.samples:
                    meter.t_search += meter.table.training_time(
                        arch, config.fidelity_budget
                    )
            vector = weights.as_vector()
            weights = weights.replace_vector(
                vector - config.arch_lr * (gradient + 2.0 * config.logit_l2 * vector)
            )
            entries.append(self._entry(meter, epoch, discretize(weights), objective))
        return entries, discretize(weights), weights


class GdasSearch(_SearchBase):
    """Single-path sampler: one architecture per epoch drawn at an annealed
    temperature, logits nudged by that path's error alone."""

    _kind = "GDAS"

    def __init__(
        self,
        epochs: int = 50,
        arch_lr: float = 0.05,
        logit_l2: float = 0.0,
        tau_start: float = 5.0,
        tau_end: float = 0.1,
        fidelity_budget: int = 12,
        seed: int = 0,
    ):
        self.epochs = epochs
        self.arch_lr = arch_lr
        self.logit_l2 = logit_l2
        self.tau_start = tau_start
        self.tau_end = tau_end
        self.fidelity_budget = fidelity_budget
        self.seed = seed

    @staticmethod
    def _tau(config: OptimizerConfig, epoch: int) -> float:
        if config.epochs == 1:
            return config.tau_start
        frac = epoch / (config.epochs - 1)
        # barycentric form so both endpoints are hit exactly
        return config.tau_start * (1.0 - frac) + config.tau_end * frac

    def _search(self, spec, meter, rng, config):
        weights = init_weights(spec)
        entries = []
        for epoch in range(config.epochs):
            tau = self._tau(config, epoch)
            scaled = weights.replace_vector(weights.as_vector() / tau)
            arch = sample_architecture(scaled, rng)
            err = meter.val(arch, config.fidelity_budget)
            gradient = arch_log_prob_gradient(scaled, arch) / tau
            vector = weights.as_vector()
            weights = weights.replace_vector(
                vector
                - config.arch_lr * (err * gradient + 2.0 * config.logit_l2 * vector)
            )
            entries.append(self._entry(meter, epoch, discretize(weights), err))
        return entries, discretize(weights), weights


class EnasSearch(_SearchBase):
    """REINFORCE on a tabular policy, moving-average baseline, and a final
    100-sample selection ranked at the fidelity budget."""

    _kind = "ENAS_PG"

    FINAL_SAMPLES = 100

    def __init__(
        self,
        epochs: int = 50,
        arch_lr: float = 0.05,
        logit_l2: float = 0.0,
        samples_per_step: int = 8,
        baseline_decay: float = 0.9,
        fidelity_budget: int = 12,
        seed: int = 0,
    ):
        self.epochs = epochs
        self.arch_lr = arch_lr
        self.logit_l2 = logit_l2
        self.samples_per_step = samples_per_step
        self.baseline_decay = baseline_decay
        self.fidelity_budget = fidelity_budget
        self.seed = seed

    def _search(self, spec, meter, rng, config):
        weights = init_weights(spec)
        entries = []
        baseline = None
        for epoch in range(config.epochs):
            samples = [
                sample_architecture(weights, rng)
                for _ in range(config.samples_per_step)
            ]
            rewards = np.array(
                [-meter.val(a, config.fidelity_budget) for a in samples]
            )
            if baseline is None:
                baseline = float(rewards.mean())
            ascent = np.zeros(weights.num_logits())
            for arch, reward in zip(samples, rewards):
                if reward != baseline:
                    ascent += (reward - baseline) * arch_log_prob_gradient(
                        weights, arch
                    )
            ascent /= config.samples_per_step
            vector = weights.as_vector()
            weights = weights.replace_vector(
                vector
                + config.arch_lr * ascent
                - config.arch_lr * 2.0 * config.logit_l2 * vector
            )
            baseline = config.baseline_decay * baseline + (
                1.0 - config.baseline_decay
            ) * float(rewards.mean())
            entries.append(
                self._entry(
                    meter, epoch, discretize(weights), float(-rewards.mean())
                )
            )
        candidates = [
            sample_architecture(weights, rng) for _ in range(self.FINAL_SAMPLES)
        ]
        scores = [meter.val(a, config.fidelity_budget) for a in candidates]
        best = min(range(len(candidates)), key=lambda i: (scores[i], i))
        selected = candidates[best]
        entries.append(
            self._entry(meter, config.epochs, selected, scores[best])
        )
        return entries, selected, weights


class RandomWeightSharingSearch(_SearchBase):
    """Uniform sampling ranked at the fidelity budget: best-so-far per
    epoch, then a 1000-sample pool whose noisy ranking shortlists 5 for
    full-budget evaluation."""

    _kind = "RANDOM_WS"

    POOL = 1000
    SHORTLIST = 5

    def __init__(
        self,
        epochs: int = 50,
        fidelity_budget: int = 12,
        selection_noise: float = 0.01,
        noise_prob: float = 1.0,
        seed: int = 0,
    ):
        self.epochs = epochs
        self.fidelity_budget = fidelity_budget
        self.selection_noise = selection_noise
        self.noise_prob = noise_prob
        self.seed = seed

    def _search(self, spec, meter, rng, config):
        pools = _uniform_pools(spec)
        entries = []
        best_arch = None
        best_err = math.inf
        for epoch in range(config.epochs):
            arch = sample_uniform_architecture(spec, rng, pools)
            err = meter.val(arch, config.fidelity_budget)
            if err < best_err:
                best_arch, best_err = arch, err
            entries.append(self._entry(meter, epoch, best_arch, best_err))
        pool = [
            sample_uniform_architecture(spec, rng, pools) for _ in range(self.POOL)
        ]
        errors = [meter.val(a, config.fidelity_budget) for a in pool]
        scores = []
        for err in errors:
            noise = 0.0
            if rng.random() < config.noise_prob:
                noise = config.selection_noise * rng.normal()
            scores.append(err + noise)
        order = sorted(range(self.POOL), key=lambda i: (scores[i], i))
        shortlist = order[: self.SHORTLIST]
        finals = [meter.val(pool[i], MAX_BUDGET) for i in shortlist]
        winner = min(range(len(shortlist)), key=lambda i: (finals[i], i))
        selected = pool[shortlist[winner]]
        entries.append(
            self._entry(meter, config.epochs, selected, errors[shortlist[winner]])
        )
        return entries, selected, None


class RandomSearch(_SearchBase):
    """Uniform sampling evaluated at the full budget; incumbent by val@108."""

    _kind = "RANDOM_SEARCH"

    def __init__(self, epochs: int = 50, seed: int = 0):
        self.epochs = epochs
        self.seed = seed

    def _search(self, spec, meter, rng, config):
        pools = _uniform_pools(spec)
        entries = []
        best_arch = None
        best_val = math.inf
        for epoch in range(config.epochs):
            arch = sample_uniform_architecture(spec, rng, pools)
            val = meter.val(arch, MAX_BUDGET)
            if val < best_val:
                best_arch, best_val = arch, val
            entries.append(self._entry(meter, epoch, best_arch, val))
        return entries, best_arch, None


class RegularizedEvolutionSearch(_SearchBase):
    """Aging evolution: tournament parent selection by val@108, one-decision
    mutation, oldest member evicted."""

    _kind = "REG_EVOLUTION"

    def __init__(
        self,
        epochs: int = 50,
        population_size: int = 20,
        tournament_size: int = 5,
        seed: int = 0,
    ):
        self.epochs = epochs
        self.population_size = population_size
        self.tournament_size = tournament_size
        self.seed = seed

    @staticmethod
    def _mutate(
        spec: SearchSpaceSpec, arch: Architecture, rng: np.random.Generator
    ) -> Architecture:
        """Change exactly one decision: an op, or one node's parent set."""
        blocks = spec.num_blocks
        block_parents = [arch.parents(j) for j in range(1, blocks + 1)]
        output_parents = arch.parents(spec.output_node)
        ops = list(arch.ops)
        if rng.random() < 0.5:
            j = int(rng.integers(blocks))
            others = [op for op in OPS if op != ops[j]]
            ops[j] = others[int(rng.integers(len(others)))]
        else:
            current = list(block_parents) + [output_parents]
            mutable = []
            for node in spec.choosing_nodes():
                pool = list(
                    itertools.combinations(
                        spec.parent_candidates(node), spec.parent_count(node)
                    )
                )
                if len(pool) >= 2:
                    mutable.append((node, pool))
            node, pool = mutable[int(rng.integers(len(mutable)))]
            alternatives = [s for s in pool if s != current[node - 1]]
            replacement = alternatives[int(rng.integers(len(alternatives)))]
            if node <= blocks:
                block_parents[node - 1] = replacement
            else:
                output_parents = replacement
        return assemble_architecture(spec, block_parents, output_parents, ops)

    def _search(self, spec, meter, rng, config):
        pools = _uniform_pools(spec)
        population = collections.deque()
        best_arch = None
        best_val = math.inf
        for _ in range(config.population_size):
            arch = sample_uniform_architecture(spec, rng, pools)
            val = meter.val(arch, MAX_BUDGET)
            population.append((arch, val))
            if val < best_val:
                best_arch, best_val = arch, val
        entries = []
        for epoch in range(config.epochs):
            contenders = [
                population[int(rng.integers(len(population)))]
                for _ in range(config.tournament_size)
            ]
            parent = min(contenders, key=lambda pair: pair[1])[0]
            child = self._mutate(spec, parent, rng)
            val = meter.val(child, MAX_BUDGET)
            population.append((child, val))
            population.popleft()
            if val < best_val:
                best_arch, best_val = child, val
            entries.append(self._entry(meter, epoch, best_arch, val))
        return entries, best_arch, None


_ENGINES = {
    "DARTS_SF": DartsSearch,
    "GDAS": GdasSearch,
    "ENAS_PG": EnasSearch,
    "RANDOM_WS": RandomWeightSharingSearch,
    "RANDOM_SEARCH": RandomSearch,
    "REG_EVOLUTION": RegularizedEvolutionSearch,
}


def make_estimator(config: OptimizerConfig) -> _SearchBase:
    """The estimator for a config, with only its own knobs applied."""
    klass = _ENGINES[config.kind]
    accepted = klass().get_params()
    params = {
        k: v
        for k, v in dataclasses.asdict(config).items()
        if k in accepted
    }
    return klass(**params)


def run_search(
    spec: SearchSpaceSpec, table: BenchTable, config: OptimizerConfig
) -> Trajectory:
    return make_estimator(config).fit(spec, table).trajectory_


def _run_kind(kind):
    def runner(spec, table, config):
        if config.kind != kind:
            config = dataclasses.replace(config, kind=kind)
        return run_search(spec, table, config)

    runner.__name__ = f"run_{kind.lower()}"
    return runner


run_darts_sf = _run_kind("DARTS_SF")
run_gdas = _run_kind("GDAS")
run_enas_pg = _run_kind("ENAS_PG")
run_random_ws = _run_kind("RANDOM_WS")
run_random_search = _run_kind("RANDOM_SEARCH")
run_regularized_evolution = _run_kind("REG_EVOLUTION")
