"""Constrained cell search spaces over small DAGs.

A cell is a directed acyclic graph on at most 7 nodes: a fixed input node,
up to 5 interior choice blocks, and a fixed output node.  Interior nodes
carry one op each; the cell has at most 9 edges.  A search space fixes the
number of choice blocks and the exact number of parents every choice block
and the output node must pick, which keeps the edge total at exactly 9
before pruning.

Nodes are indexed topologically: 0 is the input, 1..B are the choice
blocks, B+1 is the output.  Adjacency is strictly upper triangular and is
stored as a bitmask over the upper triangle in row-major order.
"""

from __future__ import annotations

import dataclasses
from typing import Iterator, Sequence

CONV3X3 = "CONV3X3"
CONV1X1 = "CONV1X1"
MAXPOOL3X3 = "MAXPOOL3X3"

#: Allowed interior ops, in tie-break order (lowest index wins ties).
OPS: tuple[str, ...] = (CONV3X3, CONV1X1, MAXPOOL3X3)

MAX_NODES = 7
MAX_EDGES = 9

_SPACE_BLOCK_PARENTS = {
    1: (1, 2, 2, 2),
    2: (1, 1, 2, 2),
    3: (1, 1, 1, 2, 2),
}
_SPACE_OUTPUT_PARENTS = {1: 2, 2: 3, 3: 2}


def triangle_size(num_nodes: int) -> int:
    """Number of strictly-upper-triangular entries for ``num_nodes`` nodes."""
    return num_nodes * (num_nodes - 1) // 2


def triangle_index(num_nodes: int, i: int, j: int) -> int:
    """Row-major position of edge (i, j), i < j, in the upper triangle."""
    if not 0 <= i < j < num_nodes:
        raise ValueError(f"not an upper-triangle pair: ({i}, {j})")
    return i * (num_nodes - 1) - i * (i - 1) // 2 + (j - i - 1)


@dataclasses.dataclass(frozen=True)
class SearchSpaceSpec:
    """Parent-count template defining one constrained search space."""

    space_id: int
    block_parent_counts: tuple[int, ...]
    output_parent_count: int

    def __post_init__(self) -> None:
        counts = self.block_parent_counts
        for j, k in enumerate(counts, start=1):
            # block j may only draw parents from nodes 0..j-1
            if not 1 <= k <= j:
                raise ValueError(f"block {j} cannot pick {k} of {j} candidates")
        if not 1 <= self.output_parent_count <= len(counts) + 1:
            raise ValueError("output parent count out of range")
        total = sum(counts) + self.output_parent_count
        if total != MAX_EDGES:
            raise ValueError(f"parent counts must sum to {MAX_EDGES}, got {total}")
        if self.num_nodes > MAX_NODES:
            raise ValueError(f"more than {MAX_NODES} nodes")

    @property
    def num_blocks(self) -> int:
        return len(self.block_parent_counts)

    @property
    def num_nodes(self) -> int:
        return self.num_blocks + 2

    @property
    def output_node(self) -> int:
        return self.num_blocks + 1

    def parent_candidates(self, node: int) -> range:
        """Candidate parents of ``node``: every node with a smaller index."""
        if not 1 <= node <= self.output_node:
            raise ValueError(f"node {node} picks no parents")
        return range(node)

    def parent_count(self, node: int) -> int:
        if node == self.output_node:
            return self.output_parent_count
        return self.block_parent_counts[node - 1]

    def choosing_nodes(self) -> range:
        """Nodes that pick a parent set (all blocks plus the output)."""
        return range(1, self.output_node + 1)


def build_space(space_id: int) -> SearchSpaceSpec:
    """Return the spec for search space 1, 2 or 3."""
    if space_id not in _SPACE_BLOCK_PARENTS:
        raise ValueError(f"unknown search space: {space_id}")
    return SearchSpaceSpec(
        space_id=space_id,
        block_parent_counts=_SPACE_BLOCK_PARENTS[space_id],
        output_parent_count=_SPACE_OUTPUT_PARENTS[space_id],
    )


@dataclasses.dataclass(frozen=True)
class Architecture:
    """A concrete cell: interior ops plus an upper-triangular adjacency.

    ``bits`` holds the upper triangle as an integer bitmask; bit
    ``triangle_index(num_nodes, i, j)`` is set iff the edge i -> j exists.
    """

    num_nodes: int
    ops: tuple[str, ...]
    bits: int

    def __post_init__(self) -> None:
        if len(self.ops) != self.num_nodes - 2:
            raise ValueError("need exactly one op per interior node")
        if self.bits < 0 or self.bits >> triangle_size(self.num_nodes):
            raise ValueError("adjacency bits out of range for node count")

    @property
    def num_blocks(self) -> int:
        return self.num_nodes - 2

    @property
    def output_node(self) -> int:
        return self.num_nodes - 1

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.bits >> triangle_index(self.num_nodes, i, j) & 1)

    def edges(self) -> Iterator[tuple[int, int]]:
        n = self.num_nodes
        for i in range(n - 1):
            for j in range(i + 1, n):
                if self.has_edge(i, j):
                    yield (i, j)

    @property
    def num_edges(self) -> int:
        return self.bits.bit_count()

    def parents(self, node: int) -> tuple[int, ...]:
        return tuple(i for i in range(node) if self.has_edge(i, node))

    def children(self, node: int) -> tuple[int, ...]:
        return tuple(
            j for j in range(node + 1, self.num_nodes) if self.has_edge(node, j)
        )

    def adjacency_matrix(self) -> list[list[int]]:
        n = self.num_nodes
        matrix = [[0] * n for _ in range(n)]
        for i, j in self.edges():
            matrix[i][j] = 1
        return matrix

    def to_text(self) -> str:
        """Serialize as 'OP,OP,...|row-major upper-triangle bitstring'."""
        width = triangle_size(self.num_nodes)
        bitstring = "".join(
            "1" if self.bits >> p & 1 else "0" for p in range(width)
        )
        return ",".join(self.ops) + "|" + bitstring

    @classmethod
    def from_text(cls, text: str) -> "Architecture":
        """Parse the ``to_text`` form, validating shape and labels."""
        ops_part, sep, bits_part = text.partition("|")
        if not sep:
            raise ValueError("missing '|' separator between ops and adjacency")
        ops = tuple(ops_part.split(",")) if ops_part else ()
        for op in ops:
            if op not in OPS:
                raise ValueError(f"unknown op label: {op!r}")
        num_nodes = len(ops) + 2
        width = triangle_size(num_nodes)
        if len(bits_part) != width:
            raise ValueError(
                f"adjacency bitstring must have {width} bits for "
                f"{num_nodes} nodes, got {len(bits_part)}"
            )
        bits = 0
        for p, char in enumerate(bits_part):
            if char == "1":
                bits |= 1 << p
            elif char != "0":
                raise ValueError(f"adjacency bitstring must be 0/1, got {char!r}")
        return cls(num_nodes=num_nodes, ops=ops, bits=bits)


def assemble_architecture(
    spec: SearchSpaceSpec,
    block_parents: Sequence[Sequence[int]],
    output_parents: Sequence[int],
    ops: Sequence[str],
) -> Architecture:
    """Build the raw architecture picked by explicit per-node parent sets."""
    if len(block_parents) != spec.num_blocks or len(ops) != spec.num_blocks:
        raise ValueError("need one parent set and one op per choice block")
    n = spec.num_nodes
    bits = 0
    for node, parents in enumerate([*block_parents, output_parents], start=1):
        for i in parents:
            bits |= 1 << triangle_index(n, i, node)
    return Architecture(num_nodes=n, ops=tuple(ops), bits=bits)


@dataclasses.dataclass(frozen=True)
class ValidityReport:
    """Outcome of ``validate_architecture`` with per-rule violations."""

    ok: bool
    violations: tuple[str, ...]


def validate_architecture(arch: Architecture) -> ValidityReport:
    """Check the cell constraints: node/edge budget, ops, connectivity."""
    violations = []
    if arch.num_nodes > MAX_NODES:
        violations.append(f"{arch.num_nodes} nodes exceed the limit of {MAX_NODES}")
    if arch.num_edges > MAX_EDGES:
        violations.append(f"{arch.num_edges} edges exceed the limit of {MAX_EDGES}")
    for node, op in enumerate(arch.ops, start=1):
        if op not in OPS:
            violations.append(f"node {node} has unknown op {op!r}")
    if not _reaches_output(arch, 0):
        violations.append("no directed path from input to output")
    return ValidityReport(ok=not violations, violations=tuple(violations))


def _reaches_output(arch: Architecture, start: int) -> bool:
    target = arch.output_node
    stack = [start]
    seen = {start}
    while stack:
        node = stack.pop()
        if node == target:
            return True
        for child in arch.children(node):
            if child not in seen:
                seen.add(child)
                stack.append(child)
    return False


def live_interior_nodes(arch: Architecture) -> tuple[int, ...]:
    """Interior nodes with a directed path to the output (reverse BFS)."""
    reachable = {arch.output_node}
    frontier = [arch.output_node]
    while frontier:
        node = frontier.pop()
        for parent in arch.parents(node):
            if parent not in reachable:
                reachable.add(parent)
                frontier.append(parent)
    return tuple(
        node for node in range(1, arch.output_node) if node in reachable
    )


def prune_loose_ends(arch: Architecture) -> Architecture:
    """Drop interior nodes with no path to the output; reindex compactly.

    Surviving nodes keep their relative order, edges are the induced ones.
    The input and output nodes always survive.  Idempotent.
    """
    live = live_interior_nodes(arch)
    keep = (0, *live, arch.output_node)
    relabel = {old: new for new, old in enumerate(keep)}
    n = len(keep)
    bits = 0
    for i, j in arch.edges():
        if i in relabel and j in relabel:
            bits |= 1 << triangle_index(n, relabel[i], relabel[j])
    ops = tuple(arch.ops[node - 1] for node in live)
    return Architecture(num_nodes=n, ops=ops, bits=bits)
