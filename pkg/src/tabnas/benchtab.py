"""Tabular benchmark storage: per-architecture metrics at four budgets.

A table maps the canonical key of a pruned architecture to validation
error, test error and training time at each training budget, with three
repeats per budget.  Queries prune and canonicalize the asked-for
architecture first, so any two isomorphic cells read the same record.

``generate_surrogate_table`` builds a synthetic table that is a
deterministic function of (canonical key, seed): every random draw comes
from integer-only hashing of (seed, key, field tag), so the same inputs
give a bit-identical table on any platform.  Base errors land in
[0.05, 0.60] and blend a smooth structural score (op mix, edge count,
surviving blocks; all decodable from the key) with key-hashed noise, which
gives the error landscape the locality that population-based search needs
to have an edge over blind sampling.  Errors shrink monotonically toward
the base as the budget grows, repeats are jittered by at most 0.01, test
errors carry an independent per-budget offset, and training time grows
linearly with budget.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from typing import NamedTuple, NoReturn

from .enumeration import canonical_architectures, canonical_key
from .space import CONV1X1, CONV3X3, Architecture, SearchSpaceSpec, prune_loose_ends

BUDGETS = (4, 12, 36, 108)
REPEATS = 3
MAX_BUDGET = 108

_METRICS = ("validation", "test", "time")


class RepeatMetrics(NamedTuple):
    val: float
    test: float
    time: float


class BudgetSummary(NamedTuple):
    """Mean over the three repeats of every metric at one budget."""

    val_error: float
    test_error: float
    training_time: float


@dataclasses.dataclass(frozen=True)
class BenchRecord:
    key: str
    architecture: Architecture
    metrics: dict[int, tuple[RepeatMetrics, ...]]


class TableFormatError(ValueError):
    """A table file failed schema validation; message names the line."""


@dataclasses.dataclass(frozen=True)
class Provenance:
    """Where a table came from: ingested from a file, or synthesized."""

    kind: str
    seed: int | None = None

    def __str__(self) -> str:
        if self.seed is None:
            return self.kind
        return f"{self.kind}(seed={self.seed})"


INGESTED = Provenance("INGESTED")


@dataclasses.dataclass
class BenchTable:
    """Key-addressed metric store; treated as immutable once built."""

    records: dict[str, BenchRecord]
    provenance: Provenance = INGESTED

    def __post_init__(self) -> None:
        self._key_cache: dict[Architecture, str] = {}
        self._verified_spaces: set[int] = set()

    def __len__(self) -> int:
        return len(self.records)

    def key_of(self, arch: Architecture) -> str:
        key = self._key_cache.get(arch)
        if key is None:
            key = canonical_key(prune_loose_ends(arch))
            self._key_cache[arch] = key
        return key

    def _record(self, arch: Architecture) -> BenchRecord:
        key = self.key_of(arch)
        record = self.records.get(key)
        if record is None:
            raise KeyError(f"architecture not in benchmark: {key}")
        return record

    def repeats(self, arch: Architecture, budget: int) -> tuple[RepeatMetrics, ...]:
        """Raw per-repeat metrics, for variance studies; not aggregated."""
        if budget not in BUDGETS:
            raise ValueError(f"budget must be one of {BUDGETS}, got {budget}")
        return self._record(arch).metrics[budget]

    def _mean(self, arch: Architecture, budget: int, field: int) -> float:
        repeats = self.repeats(arch, budget)
        return sum(r[field] for r in repeats) / len(repeats)

    def validation_error(self, arch: Architecture, budget: int) -> float:
        return self._mean(arch, budget, 0)

    def test_error(self, arch: Architecture, budget: int) -> float:
        return self._mean(arch, budget, 1)

    def training_time(self, arch: Architecture, budget: int) -> float:
        return self._mean(arch, budget, 2)


def query(table: BenchTable, arch: Architecture, budget: int) -> BudgetSummary:
    """Repeat-averaged metrics for the pruned, canonicalized architecture."""
    return BudgetSummary(
        val_error=table.validation_error(arch, budget),
        test_error=table.test_error(arch, budget),
        training_time=table.training_time(arch, budget),
    )


def _require_coverage(table: BenchTable, spec: SearchSpaceSpec) -> None:
    if spec.space_id in table._verified_spaces:
        return
    space_keys = sorted(canonical_key(a) for a in canonical_architectures(spec))
    for key in space_keys:
        if key not in table.records:
            raise ValueError(
                f"table is missing architecture {key} of space {spec.space_id}"
            )
    table._verified_spaces.add(spec.space_id)


def best_in_space(
    table: BenchTable,
    spec: SearchSpaceSpec,
    budget: int = MAX_BUDGET,
    metric: str = "validation",
) -> tuple[str, float]:
    """Minimum repeat-averaged metric over the whole pruned space.

    Requires the table to cover every canonical key of the space; ties are
    broken by the lexicographically smallest key.
    """
    if metric not in ("validation", "test"):
        raise ValueError(f"metric must be validation or test, got {metric!r}")
    if budget not in BUDGETS:
        raise ValueError(f"budget must be one of {BUDGETS}, got {budget}")
    _require_coverage(table, spec)
    field = 0 if metric == "validation" else 1
    best_key = None
    best_value = None
    for key in table.records:
        repeats = table.records[key].metrics[budget]
        value = sum(r[field] for r in repeats) / len(repeats)
        if (
            best_value is None
            or value < best_value
            or (value == best_value and key < best_key)
        ):
            best_key, best_value = key, value
    return best_key, best_value


class AuditedTable:
    """Table wrapper that counts metric reads; used to prove the tuner's
    objective never touches test errors."""

    def __init__(self, table: BenchTable) -> None:
        self._table = table
        self.reads = {name: 0 for name in _METRICS}

    def key_of(self, arch: Architecture) -> str:
        return self._table.key_of(arch)

    def validation_error(self, arch: Architecture, budget: int) -> float:
        self.reads["validation"] += 1
        return self._table.validation_error(arch, budget)

    def test_error(self, arch: Architecture, budget: int) -> float:
        self.reads["test"] += 1
        return self._table.test_error(arch, budget)

    def training_time(self, arch: Architecture, budget: int) -> float:
        self.reads["time"] += 1
        return self._table.training_time(arch, budget)


# ---------------------------------------------------------------------------
# Deterministic surrogate generation.
# ---------------------------------------------------------------------------

_TAGS = {
    "base": 1,
    "start": 2,
    "wobble": 3,
    "val": 4,
    "test_offset": 5,
    "test": 6,
    "time": 7,
    "time_jitter": 8,
}

#: Budget position on the error decay curve: 1 at the smallest budget,
#: 0 at the largest (where the error reaches its base level).
_DECAY = {4: 1.0, 12: 0.55, 36: 0.25, 108: 0.0}


def _draw(seed: int, key_int: int, tag: str, *indices: int) -> float:
    """Uniform in [0, 1) from integer-only hashing; platform independent."""
    h = hashlib.blake2b(digest_size=8)
    for value in (seed, key_int, _TAGS[tag], *indices):
        h.update(int(value).to_bytes(8, "little", signed=False))
    return int.from_bytes(h.digest(), "little") / 2.0**64


def _structure_score(arch: Architecture) -> float:
    """Smooth quality score in [0, 1]; higher means lower error."""
    blocks = max(arch.num_blocks, 1)
    heavy = sum(op == CONV3X3 for op in arch.ops) / blocks
    light = sum(op == CONV1X1 for op in arch.ops) / blocks
    return (
        0.5 * heavy
        + 0.2 * light
        + 0.2 * (arch.num_edges / 9.0)
        + 0.1 * (arch.num_blocks / 5.0)
    )


def _clip(value: float) -> float:
    return min(max(value, 0.0), 1.0)


def surrogate_record(arch: Architecture, seed: int) -> BenchRecord:
    """Metrics for one canonical architecture; see the module docstring."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    key = canonical_key(arch)
    key_int = int(key, 16)
    score = _structure_score(arch)
    mix = _clip(0.72 * (1.0 - score) + 0.28 * _draw(seed, key_int, "base"))
    base = 0.05 + 0.55 * mix
    spread = (0.92 - base) * (0.35 + 0.3 * _draw(seed, key_int, "start"))
    per_epoch = 10.0 + 30.0 * _draw(seed, key_int, "time")
    metrics: dict[int, tuple[RepeatMetrics, ...]] = {}
    for budget in BUDGETS:
        wobble = 0.004 * (2.0 * _draw(seed, key_int, "wobble", budget) - 1.0)
        mean_val = base + spread * _DECAY[budget] + wobble
        offset = 0.035 * (2.0 * _draw(seed, key_int, "test_offset", budget) - 1.0)
        mean_test = _clip(mean_val + offset)
        repeats = []
        for repeat in range(REPEATS):
            val = _clip(
                mean_val + 0.007 * (2.0 * _draw(seed, key_int, "val", budget, repeat) - 1.0)
            )
            test = _clip(
                mean_test
                + 0.007 * (2.0 * _draw(seed, key_int, "test", budget, repeat) - 1.0)
            )
            time = budget * per_epoch * (
                1.0 + 0.04 * (2.0 * _draw(seed, key_int, "time_jitter", budget, repeat) - 1.0)
            )
            repeats.append(RepeatMetrics(val=val, test=test, time=time))
        metrics[budget] = tuple(repeats)
    return BenchRecord(key=key, architecture=arch, metrics=metrics)


def generate_surrogate_table(spec: SearchSpaceSpec, seed: int) -> BenchTable:
    """One record per isomorphism class of the pruned space."""
    records = {}
    for arch in canonical_architectures(spec):
        record = surrogate_record(arch, seed)
        records[record.key] = record
    table = BenchTable(records=records, provenance=Provenance("SURROGATE", seed))
    table._verified_spaces.add(spec.space_id)
    return table


# ---------------------------------------------------------------------------
# Line-delimited JSON serialization.
# ---------------------------------------------------------------------------


def _record_to_json(record: BenchRecord) -> str:
    arch = record.architecture
    ops_part, _, bits_part = arch.to_text().partition("|")
    payload = {
        "key": record.key,
        "ops": ops_part.split(",") if ops_part else [],
        "adjacency": bits_part,
        "metrics": {
            str(budget): [
                {"val": r.val, "test": r.test, "time": r.time}
                for r in record.metrics[budget]
            ]
            for budget in BUDGETS
        },
    }
    return json.dumps(payload, separators=(",", ":"))


def dump_table(table: BenchTable) -> str:
    """Serialize with records sorted by key; trailing newline included."""
    lines = [_record_to_json(table.records[key]) for key in sorted(table.records)]
    return "\n".join(lines) + "\n"


def save_table(table: BenchTable, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dump_table(table))


def _parse_record(line: str, line_number: int) -> BenchRecord:
    def fail(message: str) -> NoReturn:
        raise TableFormatError(f"line {line_number}: {message}")

    try:
        payload = json.loads(line)
    except json.JSONDecodeError as err:
        fail(f"invalid JSON ({err.msg})")
    if not isinstance(payload, dict):
        fail("record must be a JSON object")
    for field in ("key", "ops", "adjacency", "metrics"):
        if field not in payload:
            fail(f"missing field {field!r}")
    try:
        arch = Architecture.from_text(
            ",".join(payload["ops"]) + "|" + payload["adjacency"]
        )
    except (TypeError, ValueError) as err:
        fail(f"bad architecture: {err}")
    try:
        recomputed = canonical_key(arch)
    except ValueError as err:
        fail(str(err))
    if recomputed != payload["key"]:
        fail(f"key mismatch: stored {payload['key']}, recomputed {recomputed}")
    raw_metrics = payload["metrics"]
    if not isinstance(raw_metrics, dict):
        fail("metrics must be an object keyed by budget")
    metrics: dict[int, tuple[RepeatMetrics, ...]] = {}
    for budget in BUDGETS:
        entry = raw_metrics.get(str(budget))
        if entry is None:
            fail(f"missing budget {budget}")
        if not isinstance(entry, list) or len(entry) != REPEATS:
            fail(f"budget {budget} needs exactly {REPEATS} repeats")
        repeats = []
        for repeat in entry:
            try:
                triple = RepeatMetrics(
                    val=float(repeat["val"]),
                    test=float(repeat["test"]),
                    time=float(repeat["time"]),
                )
            except (TypeError, KeyError):
                fail(f"budget {budget} repeats need val/test/time numbers")
            if not (0.0 <= triple.val <= 1.0 and 0.0 <= triple.test <= 1.0):
                fail(f"budget {budget} errors must lie in [0, 1]")
            if triple.time <= 0.0:
                fail(f"budget {budget} training time must be positive")
            repeats.append(triple)
        metrics[budget] = tuple(repeats)
    unknown = set(raw_metrics) - {str(b) for b in BUDGETS}
    if unknown:
        fail(f"unknown budget {sorted(unknown)[0]}")
    return BenchRecord(key=payload["key"], architecture=arch, metrics=metrics)


def load_table(path) -> BenchTable:
    """Parse and validate a JSONL table; fails on the first bad record."""
    records: dict[str, BenchRecord] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            record = _parse_record(line, line_number)
            if record.key in records:
                raise TableFormatError(
                    f"line {line_number}: duplicate key {record.key}"
                )
            records[record.key] = record
    return BenchTable(records=records)


def file_digest(path) -> str:
    """Hex sha256 of a file's bytes, for manifests and ingest checks."""
    h = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
