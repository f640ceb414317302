"""Continuous relaxation of cell choices.

Every discrete decision of a search space gets a real logit vector:
``alpha_j`` over the parent candidates of choice block j, ``beta_j`` over
the three ops of block j, and ``gamma`` over the output's parent
candidates.  Softmax of a vector is that decision's mixture distribution;
architectures are drawn by sampling ops from their categoricals and
parent sets without replacement from the remaining softmax mass
(Plackett-Luce).  Discretization takes argmax/top-k with ties broken to
the lowest index.

The module is tensor-free: it manipulates probability vectors only, and
exposes exact set probabilities and analytic log-probability gradients so
score-function estimators can be checked against enumeration.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import math
from typing import Iterator, NamedTuple

import numpy as np

from .space import Architecture, OPS, SearchSpaceSpec, assemble_architecture, build_space


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def _frozen_array(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.ndim != 1:
        raise ValueError("logit vectors must be one-dimensional")
    if not np.all(np.isfinite(array)):
        raise ValueError("logits must be finite")
    array.setflags(write=False)
    return array


@dataclasses.dataclass(frozen=True, eq=False)
class ArchWeights:
    """Per-decision logits for one search space.

    Vector layout (``as_vector`` order): alpha_1, beta_1, ..., alpha_B,
    beta_B, gamma.
    """

    spec: SearchSpaceSpec
    alpha: tuple[np.ndarray, ...]
    beta: tuple[np.ndarray, ...]
    gamma: np.ndarray

    def __post_init__(self) -> None:
        blocks = self.spec.num_blocks
        if len(self.alpha) != blocks or len(self.beta) != blocks:
            raise ValueError("need one alpha and one beta vector per block")
        object.__setattr__(
            self, "alpha", tuple(_frozen_array(a) for a in self.alpha)
        )
        object.__setattr__(self, "beta", tuple(_frozen_array(b) for b in self.beta))
        object.__setattr__(self, "gamma", _frozen_array(self.gamma))
        for j, vector in enumerate(self.alpha, start=1):
            if len(vector) != j:
                raise ValueError(f"alpha_{j} must have {j} candidates")
        for j, vector in enumerate(self.beta, start=1):
            if len(vector) != len(OPS):
                raise ValueError(f"beta_{j} must have {len(OPS)} candidates")
        if len(self.gamma) != self.spec.output_node:
            raise ValueError(
                f"gamma must have {self.spec.output_node} candidates"
            )

    def decisions(self) -> Iterator[tuple[str, np.ndarray]]:
        """(name, logits) pairs in the canonical vector order."""
        for j in range(1, self.spec.num_blocks + 1):
            yield f"alpha_{j}", self.alpha[j - 1]
            yield f"beta_{j}", self.beta[j - 1]
        yield "gamma", self.gamma

    def as_vector(self) -> np.ndarray:
        return np.concatenate([logits for _, logits in self.decisions()])

    def replace_vector(self, vector: np.ndarray) -> "ArchWeights":
        """New weights with the same shapes, logits taken from ``vector``."""
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.num_logits(),):
            raise ValueError(
                f"vector must have length {self.num_logits()}, got {vector.shape}"
            )
        alpha, beta = [], []
        offset = 0
        for j in range(1, self.spec.num_blocks + 1):
            alpha.append(vector[offset : offset + j])
            offset += j
            beta.append(vector[offset : offset + len(OPS)])
            offset += len(OPS)
        gamma = vector[offset:]
        return ArchWeights(
            spec=self.spec, alpha=tuple(alpha), beta=tuple(beta), gamma=gamma
        )

    def num_logits(self) -> int:
        blocks = self.spec.num_blocks
        return blocks * (blocks + 1) // 2 + len(OPS) * blocks + self.spec.output_node

    def to_json(self) -> str:
        payload = {"space": self.spec.space_id}
        for name, logits in self.decisions():
            payload[name] = [float(v) for v in logits]
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "ArchWeights":
        payload = json.loads(text)
        spec = build_space(payload["space"])
        blocks = spec.num_blocks
        return cls(
            spec=spec,
            alpha=tuple(payload[f"alpha_{j}"] for j in range(1, blocks + 1)),
            beta=tuple(payload[f"beta_{j}"] for j in range(1, blocks + 1)),
            gamma=payload["gamma"],
        )


@dataclasses.dataclass(frozen=True, eq=False)
class DecisionDistributions:
    """One probability vector per decision, same naming as ArchWeights."""

    probs: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        for name, vector in self.probs.items():
            if np.any(vector < 0.0) or abs(vector.sum() - 1.0) > 1e-9:
                raise ValueError(f"decision {name} is not a distribution")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.probs[name]


def init_weights(
    spec: SearchSpaceSpec,
    scheme: str = "zeros",
    sigma: float = 1.0,
    seed: int | None = None,
) -> ArchWeights:
    """Zero logits (uniform mixtures) or i.i.d. gaussian logits per seed."""
    blocks = spec.num_blocks
    if scheme == "zeros":
        draw = lambda size: np.zeros(size)
    elif scheme == "gaussian":
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        rng = np.random.default_rng(seed)
        draw = lambda size: rng.normal(0.0, sigma, size)
    else:
        raise ValueError(f"unknown init scheme: {scheme!r}")
    return ArchWeights(
        spec=spec,
        alpha=tuple(draw(j) for j in range(1, blocks + 1)),
        beta=tuple(draw(len(OPS)) for _ in range(blocks)),
        gamma=draw(spec.output_node),
    )


def mixture_probs(weights: ArchWeights) -> DecisionDistributions:
    """Numerically stable softmax, independently per decision vector."""
    return DecisionDistributions(
        probs={name: _softmax(logits) for name, logits in weights.decisions()}
    )


class GumbelSample(NamedTuple):
    soft: DecisionDistributions
    hard: dict[str, np.ndarray]


def gumbel_softmax(
    weights: ArchWeights, temperature: float, rng: np.random.Generator
) -> GumbelSample:
    """Per decision: soft = softmax((logits + G)/tau), hard = its argmax."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    soft = {}
    hard = {}
    for name, logits in weights.decisions():
        uniforms = np.maximum(rng.random(len(logits)), 1e-300)
        gumbels = -np.log(-np.log(uniforms))
        perturbed = logits + gumbels
        soft[name] = _softmax(perturbed / temperature)
        onehot = np.zeros(len(logits))
        onehot[int(np.argmax(perturbed))] = 1.0
        hard[name] = onehot
    return GumbelSample(soft=DecisionDistributions(probs=soft), hard=hard)


def _top_k(logits: np.ndarray, k: int) -> tuple[int, ...]:
    order = sorted(range(len(logits)), key=lambda i: (-logits[i], i))
    return tuple(sorted(order[:k]))


def discretize(weights: ArchWeights, spec: SearchSpaceSpec | None = None) -> Architecture:
    """argmax op and top-k parents per decision; ties to the lowest index."""
    if spec is None:
        spec = weights.spec
    elif spec != weights.spec:
        raise ValueError("weights belong to a different search space")
    ops = [OPS[int(np.argmax(beta))] for beta in weights.beta]
    block_parents = [
        _top_k(weights.alpha[j - 1], spec.parent_count(j))
        for j in range(1, spec.num_blocks + 1)
    ]
    output_parents = _top_k(weights.gamma, spec.output_parent_count)
    return assemble_architecture(spec, block_parents, output_parents, ops)


def _categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    r = rng.random()
    return min(int(np.searchsorted(np.cumsum(probs), r, side="right")), len(probs) - 1)


def _sample_subset(
    probs: np.ndarray, k: int, rng: np.random.Generator
) -> tuple[int, ...]:
    """k draws without replacement, renormalizing the remaining mass."""
    remaining = probs.astype(float).copy()
    picked = []
    for _ in range(k):
        idx = _categorical(remaining / remaining.sum(), rng)
        picked.append(idx)
        remaining[idx] = 0.0
    return tuple(sorted(picked))


def sample_architecture(
    weights: ArchWeights, rng: np.random.Generator, uniform: bool = False
) -> Architecture:
    """Draw an architecture; ``uniform`` ignores the logit values."""
    spec = weights.spec
    if uniform:
        weights = init_weights(spec, "zeros")
    probs = mixture_probs(weights)
    ops = [
        OPS[_categorical(probs[f"beta_{j}"], rng)]
        for j in range(1, spec.num_blocks + 1)
    ]
    block_parents = [
        _sample_subset(probs[f"alpha_{j}"], spec.parent_count(j), rng)
        for j in range(1, spec.num_blocks + 1)
    ]
    output_parents = _sample_subset(probs["gamma"], spec.output_parent_count, rng)
    return assemble_architecture(spec, block_parents, output_parents, ops)


# ---------------------------------------------------------------------------
# Exact probabilities and analytic gradients of the sampling law.
# ---------------------------------------------------------------------------


def _subset_prob_from_probs(probs: np.ndarray, subset: tuple[int, ...]) -> float:
    """P(set) = sum over draw orders of prod p_i / (remaining mass).

    The remaining mass is summed over the not-yet-drawn candidates rather
    than computed as 1 - drawn, which would cancel catastrophically when
    one candidate holds nearly all the mass.
    """
    total = 0.0
    indices = range(len(probs))
    for order in itertools.permutations(subset):
        drawn: set[int] = set()
        term = 1.0
        for idx in order:
            remaining = sum(probs[c] for c in indices if c not in drawn)
            term *= probs[idx] / remaining
            drawn.add(idx)
        total += term
    return total


def subset_log_prob(logits: np.ndarray, subset: tuple[int, ...]) -> float:
    """Exact log-probability that ``subset`` is the sampled parent set."""
    logits = np.asarray(logits, dtype=float)
    subset = tuple(subset)
    if len(set(subset)) != len(subset):
        raise ValueError("subset entries must be distinct")
    if any(not 0 <= i < len(logits) for i in subset):
        raise ValueError("subset index out of range")
    return math.log(_subset_prob_from_probs(_softmax(logits), subset))


def subset_log_prob_gradient(
    logits: np.ndarray, subset: tuple[int, ...]
) -> np.ndarray:
    """d log P(subset) / d logits, exact.

    For each draw order, d term/d p_m collects the numerator factor of m
    once plus every later denominator that m's drawn mass has shrunk; the
    result is chained through the softmax Jacobian.
    """
    logits = np.asarray(logits, dtype=float)
    probs = _softmax(logits)
    subset = tuple(subset)
    indices = range(len(probs))
    total = 0.0
    d_probs = np.zeros(len(logits))
    for order in itertools.permutations(subset):
        drawn: set[int] = set()
        term = 1.0
        denominators = []
        for idx in order:
            denominators.append(sum(probs[c] for c in indices if c not in drawn))
            term *= probs[idx] / denominators[-1]
            drawn.add(idx)
        total += term
        for pos, idx in enumerate(order):
            sensitivity = 1.0 / probs[idx] + sum(
                1.0 / denominators[i] for i in range(pos + 1, len(order))
            )
            d_probs[idx] += term * sensitivity
    grad_probs = d_probs / total
    return probs * (grad_probs - float(probs @ grad_probs))


def enumerate_subset_probs(
    logits: np.ndarray, k: int
) -> dict[tuple[int, ...], float]:
    """Exact probability of every k-subset; values sum to 1."""
    logits = np.asarray(logits, dtype=float)
    probs = _softmax(logits)
    return {
        subset: _subset_prob_from_probs(probs, subset)
        for subset in itertools.combinations(range(len(logits)), k)
    }


def categorical_log_prob_gradient(logits: np.ndarray, index: int) -> np.ndarray:
    """d log softmax(logits)[index] / d logits = onehot - softmax."""
    probs = _softmax(np.asarray(logits, dtype=float))
    grad = -probs
    grad[index] += 1.0
    return grad


def _raw_choices(weights: ArchWeights, arch: Architecture):
    """Recover per-decision choices from a raw (unpruned) architecture."""
    spec = weights.spec
    if arch.num_nodes != spec.num_nodes:
        raise ValueError("architecture shape does not match the search space")
    choices = []
    for j in range(1, spec.num_blocks + 1):
        subset = arch.parents(j)
        if len(subset) != spec.parent_count(j):
            raise ValueError("architecture shape does not match the search space")
        op_index = OPS.index(arch.ops[j - 1])
        choices.append((subset, op_index))
    output_parents = arch.parents(spec.output_node)
    if len(output_parents) != spec.output_parent_count:
        raise ValueError("architecture shape does not match the search space")
    return choices, output_parents


def arch_log_prob(weights: ArchWeights, arch: Architecture) -> float:
    """log P(arch) under sample_architecture's law, exact."""
    choices, output_parents = _raw_choices(weights, arch)
    total = 0.0
    for j, (subset, op_index) in enumerate(choices, start=1):
        total += subset_log_prob(weights.alpha[j - 1], subset)
        probs = _softmax(weights.beta[j - 1])
        total += math.log(probs[op_index])
    total += subset_log_prob(weights.gamma, output_parents)
    return total


def arch_log_prob_gradient(weights: ArchWeights, arch: Architecture) -> np.ndarray:
    """d log P(arch) / d logits, flat and aligned with ``as_vector``."""
    choices, output_parents = _raw_choices(weights, arch)
    pieces = []
    for j, (subset, op_index) in enumerate(choices, start=1):
        pieces.append(subset_log_prob_gradient(weights.alpha[j - 1], subset))
        pieces.append(categorical_log_prob_gradient(weights.beta[j - 1], op_index))
    pieces.append(subset_log_prob_gradient(weights.gamma, output_parents))
    return np.concatenate(pieces)
