from __future__ import annotations

import itertools

import numpy as np
import pytest

from tabnas.space import OPS, Architecture, assemble_architecture, build_space


@pytest.fixture(scope="session")
def space1():
    return build_space(1)


@pytest.fixture(scope="session")
def space2():
    return build_space(2)


@pytest.fixture(scope="session")
def space3():
    return build_space(3)


def random_raw_architecture(spec, rng: np.random.Generator) -> Architecture:
    """Uniform draw over the raw choice tuples of a space."""
    block_parents = []
    for node in spec.choosing_nodes():
        candidates = list(spec.parent_candidates(node))
        k = spec.parent_count(node)
        picks = sorted(rng.choice(len(candidates), size=k, replace=False).tolist())
        block_parents.append(tuple(candidates[i] for i in picks))
    ops = tuple(OPS[i] for i in rng.integers(0, len(OPS), size=spec.num_blocks))
    return assemble_architecture(spec, block_parents[:-1], block_parents[-1], ops)


def random_architecture(rng: np.random.Generator, max_nodes: int = 7) -> Architecture:
    """Arbitrary small cell, not necessarily from any space template."""
    n = int(rng.integers(2, max_nodes + 1))
    width = n * (n - 1) // 2
    bits = int(rng.integers(0, 2**width))
    ops = tuple(OPS[i] for i in rng.integers(0, len(OPS), size=n - 2))
    return Architecture(num_nodes=n, ops=ops, bits=bits)


def brute_force_isomorphic(a: Architecture, b: Architecture) -> bool:
    """Reference isomorphism check: try every interior relabeling."""
    if a.num_nodes != b.num_nodes or sorted(a.ops) != sorted(b.ops):
        return False
    n = a.num_nodes
    edges_b = set(b.edges())
    for perm in itertools.permutations(range(1, n - 1)):
        label = (0, *perm, n - 1)
        mapped = {(label[i], label[j]) for i, j in a.edges()}
        if mapped != edges_b:
            continue
        if all(b.ops[label[i] - 1] == a.ops[i - 1] for i in range(1, n - 1)):
            return True
    return False
