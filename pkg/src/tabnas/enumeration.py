"""Exhaustive space enumeration, counting conventions, canonical keys.

Counting is exact: dedup happens on explicit encodings of the graphs, and
isomorphism classes come from a brute-force search over all relabelings of
the interior nodes (at most 5! = 120), never from a probabilistic hash.

Four counting conventions are implemented because the reference counts
reported for these spaces do not all follow from one reading of the
parent-count templates:

* ``exact_k`` (default): every choosing node picks exactly its parent
  count; architectures are counted as assembled, pruning compacts node
  indices.
* ``implicit_output_edge``: as ``exact_k``, but an input->output edge is
  always added to the assembled graph (merged when already chosen).
  Under exactly-k parent sets the added edge is constant across the
  space, so this provably changes no count; it is kept for the record.
* ``op_collapse``: as ``exact_k``, but the "with loose ends" row ignores
  the op choices of loose ends, i.e. blocks with no outgoing edge (their
  op feeds nothing, so it cannot matter).  Reproduces the reported
  "with loose ends" figures for spaces 1 and 3; space 2's reported
  figure is the plain ``exact_k`` product instead.
* ``slot_pruned``: as ``exact_k``, but the "without loose ends" row keeps
  pruned nodes' index slots instead of compacting (a dead block leaves a
  hole rather than shifting later blocks down).  Reproduces the reported
  figure for space 1; spaces 2 and 3 stay near misses under every
  convention here.

``convention_report`` runs all four against the reported counts and says
which figures match; residual mismatches are reported, not patched over.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from typing import Iterator, Sequence

from .space import (
    OPS,
    Architecture,
    SearchSpaceSpec,
    triangle_index,
    triangle_size,
)

EXACT_K = "exact_k"
IMPLICIT_OUTPUT_EDGE = "implicit_output_edge"
OP_COLLAPSE = "op_collapse"
SLOT_PRUNED = "slot_pruned"
CONVENTIONS = (EXACT_K, IMPLICIT_OUTPUT_EDGE, OP_COLLAPSE, SLOT_PRUNED)

#: Space size figures reported for these templates in the benchmarking
#: literature, used only as comparison targets by the convention study.
REPORTED_COUNTS = {
    1: {"with_loose_ends": 6240, "without_loose_ends": 3702, "without_isomorphism": 2685},
    2: {"with_loose_ends": 29160, "without_loose_ends": 12510, "without_isomorphism": 7773},
    3: {"with_loose_ends": 363648, "without_loose_ends": 137406, "without_isomorphism": 55854},
}

_MAX_INTERIOR = 5


def _check_convention(convention: str) -> None:
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown counting convention: {convention!r}")


def _tri_table(n: int) -> list[list[int]]:
    table = [[-1] * n for _ in range(n)]
    for i in range(n - 1):
        for j in range(i + 1, n):
            table[i][j] = triangle_index(n, i, j)
    return table


_TRI = {n: _tri_table(n) for n in range(2, 8)}


def enumerate_topologies(spec: SearchSpaceSpec) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Yield every parent-set choice, blocks first then output, in
    lexicographic order.  Each element is a sorted tuple of parent nodes."""
    pools = [
        list(itertools.combinations(spec.parent_candidates(node), spec.parent_count(node)))
        for node in spec.choosing_nodes()
    ]
    return itertools.product(*pools)


def topology_count(spec: SearchSpaceSpec) -> int:
    """Closed-form number of parent-set choices (no op labels)."""
    count = 1
    for node in spec.choosing_nodes():
        count *= math.comb(len(spec.parent_candidates(node)), spec.parent_count(node))
    return count


def _topology_bits(spec: SearchSpaceSpec, topology, convention: str) -> int:
    n = spec.num_nodes
    tri = _TRI[n]
    bits = 0
    for node, parents in enumerate(topology, start=1):
        row = tri
        for i in parents:
            bits |= 1 << row[i][node]
    if convention == IMPLICIT_OUTPUT_EDGE:
        bits |= 1 << tri[0][n - 1]
    return bits


def _live_blocks(n: int, bits: int) -> tuple[int, ...]:
    """Interior nodes with a directed path to the output, from raw bits."""
    tri = _TRI[n]
    reachable = {n - 1}
    frontier = [n - 1]
    while frontier:
        node = frontier.pop()
        for i in range(node):
            if bits >> tri[i][node] & 1 and i not in reachable:
                reachable.add(i)
                frontier.append(i)
    return tuple(node for node in range(1, n - 1) if node in reachable)


def _pruned_bits(n: int, bits: int, live: tuple[int, ...]) -> tuple[int, int]:
    keep = (0, *live, n - 1)
    relabel = {old: new for new, old in enumerate(keep)}
    pn = len(keep)
    tri_old = _TRI[n]
    tri_new = _TRI[pn]
    pbits = 0
    for i in range(n - 1):
        ri = relabel.get(i)
        if ri is None:
            continue
        for j in range(i + 1, n):
            rj = relabel.get(j)
            if rj is not None and bits >> tri_old[i][j] & 1:
                pbits |= 1 << tri_new[ri][rj]
    return pn, pbits


def enumerate_architectures(
    spec: SearchSpaceSpec, convention: str = EXACT_K
) -> Iterator[Architecture]:
    """Yield every raw architecture of the space, deterministically.

    Topologies vary slowest, op assignments fastest; both in lexicographic
    order.  ``op_collapse`` shares ``exact_k`` assembly (the collapse is a
    counting rule, not a different graph).
    """
    _check_convention(convention)
    n = spec.num_nodes
    blocks = spec.num_blocks
    for topology in enumerate_topologies(spec):
        bits = _topology_bits(spec, topology, convention)
        for ops in itertools.product(OPS, repeat=blocks):
            yield Architecture(num_nodes=n, ops=ops, bits=bits)


# ---------------------------------------------------------------------------
# Canonical labeling by brute force over interior relabelings.
# ---------------------------------------------------------------------------

# (n, bits) -> (minimal adjacency encoding, inverse relabelings reaching it)
_CANON_CACHE: dict[tuple[int, int], tuple[int, tuple[tuple[int, ...], ...]]] = {}


def _canonical_topology(n: int, bits: int) -> tuple[int, tuple[tuple[int, ...], ...]]:
    """Minimal MSB-first upper-triangle encoding over valid relabelings.

    A relabeling permutes interior nodes only and is valid when it keeps
    every edge pointing from a lower to a higher index (any isomorphism
    between two topologically indexed DAGs is of this form).  Returns the
    minimal encoding and every inverse relabeling that achieves it, so op
    labels can be minimized afterwards without redoing the graph work.
    """
    cached = _CANON_CACHE.get((n, bits))
    if cached is not None:
        return cached
    m = triangle_size(n)
    tri = _TRI[n]
    edges = [
        (i, j)
        for i in range(n - 1)
        for j in range(i + 1, n)
        if bits >> tri[i][j] & 1
    ]
    best_enc = None
    best_invs: list[tuple[int, ...]] = []
    top = m - 1
    for perm in itertools.permutations(range(1, n - 1)):
        label = (0, *perm, n - 1)
        enc = 0
        for i, j in edges:
            ni = label[i]
            nj = label[j]
            if ni > nj:
                enc = -1
                break
            enc |= 1 << (top - tri[ni][nj])
        if enc < 0:
            continue
        if best_enc is None or enc < best_enc:
            best_enc = enc
            best_invs = []
        if enc == best_enc:
            inv = [0] * (n - 2)
            for old, new in enumerate(perm, start=1):
                inv[new - 1] = old
            best_invs.append(tuple(inv))
    result = (best_enc, tuple(best_invs))
    _CANON_CACHE[(n, bits)] = result
    return result


def _pack(n: int, enc: int, ops_values: Sequence[int]) -> int:
    value = enc
    for op in ops_values:
        value = value << 2 | op
    return value << 3 | n


def _unpack(value: int) -> tuple[int, int, tuple[int, ...]]:
    n = value & 7
    value >>= 3
    blocks = n - 2
    ops = [0] * blocks
    for slot in range(blocks - 1, -1, -1):
        ops[slot] = value & 3
        value >>= 2
    return n, value, tuple(ops)


def _bits_from_enc(n: int, enc: int) -> int:
    m = triangle_size(n)
    bits = 0
    for p in range(m):
        if enc >> (m - 1 - p) & 1:
            bits |= 1 << p
    return bits


def _canonical_packed(n: int, bits: int, ops_values: Sequence[int]) -> int:
    if n - 2 > _MAX_INTERIOR:
        raise ValueError(
            f"cannot canonicalize {n - 2} interior nodes (limit {_MAX_INTERIOR})"
        )
    enc, invs = _canonical_topology(n, bits)
    best_ops = min(tuple(ops_values[inv[t] - 1] for t in range(n - 2)) for inv in invs)
    return _pack(n, enc, best_ops)


def _ops_values(arch: Architecture) -> tuple[int, ...]:
    try:
        return tuple(OPS.index(op) + 1 for op in arch.ops)
    except ValueError:
        raise ValueError(f"architecture has ops outside {OPS}") from None


def canonical_key(arch: Architecture) -> str:
    """Isomorphism-invariant key: equal keys iff some interior relabeling
    maps one architecture onto the other, ops carried along.  The key is
    the hex packing of the lexicographically minimal (adjacency encoding,
    op labels) pair over all relabelings, so it is exact and decodable."""
    return format(_canonical_packed(arch.num_nodes, arch.bits, _ops_values(arch)), "016x")


def canonical_form(arch: Architecture) -> Architecture:
    """The representative architecture encoded by ``canonical_key``."""
    return decode_key(canonical_key(arch))


def decode_key(key: str) -> Architecture:
    """Rebuild the canonical representative from its hex key."""
    n, enc, ops_values = _unpack(int(key, 16))
    if not 2 <= n <= 7:
        raise ValueError(f"malformed key: {key!r}")
    ops = tuple(OPS[v - 1] for v in ops_values)
    return Architecture(num_nodes=n, ops=ops, bits=_bits_from_enc(n, enc))


# ---------------------------------------------------------------------------
# Counting.
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class SpaceStats:
    """Exact size figures for one space under one counting convention."""

    space_id: int
    convention: str
    raw_choice_count: int
    with_loose_ends: int
    without_loose_ends: int
    without_isomorphism: int


def _ops_code_tables(blocks: int) -> tuple[list[int], list[tuple[int, ...]]]:
    codes = []
    slots = []
    for values in itertools.product((1, 2, 3), repeat=blocks):
        code = 0
        for v in values:
            code = code << 2 | v
        codes.append(code)
        slots.append(values)
    return codes, slots


def _blocks_with_children(n: int, bits: int) -> tuple[int, ...]:
    tri = _TRI[n]
    return tuple(
        node
        for node in range(1, n - 1)
        if any(bits >> tri[node][j] & 1 for j in range(node + 1, n))
    )


def _slot_pruned_bits(n: int, bits: int, live: tuple[int, ...]) -> int:
    """Drop edges incident to dead blocks but keep every node's index."""
    tri = _TRI[n]
    keep = {0, n - 1, *live}
    pbits = 0
    for i in range(n - 1):
        if i not in keep:
            continue
        for j in range(i + 1, n):
            if j in keep and bits >> tri[i][j] & 1:
                pbits |= 1 << tri[i][j]
    return pbits


def _masked_codes(
    slots: list[tuple[int, ...]], blocks: int, kept_slots: tuple[int, ...], cache: dict
) -> list[int]:
    """Full-width op codes with the slots outside ``kept_slots`` zeroed."""
    codes = cache.get(kept_slots)
    if codes is None:
        kept = set(kept_slots)
        codes = []
        for values in slots:
            code = 0
            for slot in range(blocks):
                code = code << 2 | (values[slot] if slot in kept else 0)
            codes.append(code)
        cache[kept_slots] = codes
    return codes


def _pack_ops_only(values: tuple[int, ...]) -> int:
    code = 0
    for v in values:
        code = code << 2 | v
    return code << 3


class _TopologySummary:
    """Per-topology precomputation shared by every op assignment."""

    __slots__ = ("raw_base", "raw_codes", "pruned_base", "pruned_codes")

    def __init__(
        self,
        spec: SearchSpaceSpec,
        bits: int,
        convention: str,
        codes: list[int],
        slots: list[tuple[int, ...]],
        caches: dict[str, dict],
    ) -> None:
        n = spec.num_nodes
        blocks = spec.num_blocks
        self.raw_base = bits << (2 * blocks)
        if convention == OP_COLLAPSE:
            fed = tuple(node - 1 for node in _blocks_with_children(n, bits))
            self.raw_codes = _masked_codes(slots, blocks, fed, caches["masked"])
        else:
            self.raw_codes = codes
        live = _live_blocks(n, bits)
        live_slots = tuple(node - 1 for node in live)
        if convention == SLOT_PRUNED:
            pbits = _slot_pruned_bits(n, bits, live)
            self.pruned_base = pbits << (2 * blocks)
            self.pruned_codes = _masked_codes(slots, blocks, live_slots, caches["masked"])
        else:
            pn, pbits = _pruned_bits(n, bits, live)
            self.pruned_base = (pbits << (2 * len(live) + 3)) | pn
            pruned = caches["compact"].get(live_slots)
            if pruned is None:
                pruned = [
                    _pack_ops_only(tuple(values[s] for s in live_slots))
                    for values in slots
                ]
                caches["compact"][live_slots] = pruned
            self.pruned_codes = pruned


def count_stats(spec: SearchSpaceSpec, convention: str = EXACT_K) -> SpaceStats:
    """One-pass enumeration with hash-set dedup for all three rows.

    ``with_loose_ends`` dedups architectures as assembled under the
    convention, ``without_loose_ends`` dedups their pruned forms, and
    ``without_isomorphism`` dedups canonical keys of the pruned forms.
    """
    _check_convention(convention)
    blocks = spec.num_blocks
    codes, slots = _ops_code_tables(blocks)
    caches: dict[str, dict] = {"masked": {}, "compact": {}}

    raw_seen: set[int] = set()
    pruned_seen: set[int] = set()
    # The isomorphism row always dedups canonical keys of compacted prunes,
    # so the slot_pruned run keeps a compacted set alongside its row set.
    compact_seen = pruned_seen
    compact_summaries: dict[int, _TopologySummary] = {}
    if convention == SLOT_PRUNED:
        compact_seen = set()
    topologies = 0
    raw_add = raw_seen.add
    pruned_add = pruned_seen.add
    compact_add = compact_seen.add
    for topology in enumerate_topologies(spec):
        topologies += 1
        bits = _topology_bits(spec, topology, convention)
        summary = _TopologySummary(spec, bits, convention, codes, slots, caches)
        raw_base = summary.raw_base
        pruned_base = summary.pruned_base
        if convention == SLOT_PRUNED:
            compact = compact_summaries.get(bits)
            if compact is None:
                compact = _TopologySummary(spec, bits, EXACT_K, codes, slots, caches)
                compact_summaries[bits] = compact
            for raw_code, pruned_code, compact_code in zip(
                summary.raw_codes, summary.pruned_codes, compact.pruned_codes
            ):
                raw_add(raw_base | raw_code)
                pruned_add(pruned_base | pruned_code)
                compact_add(compact.pruned_base | compact_code)
        else:
            for raw_code, pruned_code in zip(summary.raw_codes, summary.pruned_codes):
                raw_add(raw_base | raw_code)
                pruned_add(pruned_base | pruned_code)

    iso_seen: set[int] = set()
    for packed in compact_seen:
        pn = packed & 7
        rest = packed >> 3
        pblocks = pn - 2
        ops_values = []
        for _ in range(pblocks):
            ops_values.append(rest & 3)
            rest >>= 2
        ops_values.reverse()
        pbits = rest
        iso_seen.add(_canonical_packed(pn, pbits, ops_values))

    return SpaceStats(
        space_id=spec.space_id,
        convention=convention,
        raw_choice_count=topologies * 3**blocks,
        with_loose_ends=len(raw_seen),
        without_loose_ends=len(pruned_seen),
        without_isomorphism=len(iso_seen),
    )


def distinct_pruned(spec: SearchSpaceSpec) -> list[Architecture]:
    """Every distinct loose-end-free architecture, in first-seen order."""
    seen: set[int] = set()
    out: list[Architecture] = []
    n = spec.num_nodes
    blocks = spec.num_blocks
    codes, slots = _ops_code_tables(blocks)
    for topology in enumerate_topologies(spec):
        bits = _topology_bits(spec, topology, EXACT_K)
        live = _live_blocks(n, bits)
        pn, pbits = _pruned_bits(n, bits, live)
        base = (pbits << (2 * len(live) + 3)) | pn
        live_slots = tuple(node - 1 for node in live)
        for values in slots:
            packed = base | _pack_ops_only(tuple(values[s] for s in live_slots))
            if packed not in seen:
                seen.add(packed)
                ops = tuple(OPS[values[s] - 1] for s in live_slots)
                out.append(Architecture(num_nodes=pn, ops=ops, bits=pbits))
    return out


def canonical_architectures(spec: SearchSpaceSpec) -> list[Architecture]:
    """One canonical representative per isomorphism class of the pruned
    space, sorted by key."""
    keyed: dict[int, None] = {}
    for arch in distinct_pruned(spec):
        keyed.setdefault(_canonical_packed(arch.num_nodes, arch.bits, _ops_values(arch)))
    return [decode_key(format(packed, "016x")) for packed in sorted(keyed)]


# ---------------------------------------------------------------------------
# Convention study.
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class ConventionReportRow:
    space_id: int
    convention: str
    row: str
    computed: int
    reported: int
    match: bool


def convention_report(
    space_ids: Sequence[int] = (1, 2, 3),
    conventions: Sequence[str] = CONVENTIONS,
) -> list[ConventionReportRow]:
    """Compare every convention's counts against the reported figures."""
    from .space import build_space

    rows = []
    for space_id in space_ids:
        spec = build_space(space_id)
        for convention in conventions:
            stats = count_stats(spec, convention)
            for row in ("with_loose_ends", "without_loose_ends", "without_isomorphism"):
                computed = getattr(stats, row)
                reported = REPORTED_COUNTS[space_id][row]
                rows.append(
                    ConventionReportRow(
                        space_id=space_id,
                        convention=convention,
                        row=row,
                        computed=computed,
                        reported=reported,
                        match=computed == reported,
                    )
                )
    return rows


def render_convention_report(rows: Sequence[ConventionReportRow]) -> str:
    lines = [
        f"{'space':>5}  {'convention':<22} {'row':<22} {'computed':>9} {'reported':>9}  match"
    ]
    for r in rows:
        lines.append(
            f"{r.space_id:>5}  {r.convention:<22} {r.row:<22} "
            f"{r.computed:>9} {r.reported:>9}  {'yes' if r.match else 'NO'}"
        )
    matches = sum(r.match for r in rows)
    lines.append(f"{matches}/{len(rows)} figures match")
    return "\n".join(lines)
