"""Tabular harness for one-shot architecture search over small cell spaces."""

__version__ = "0.1.0"

from .analysis import (
    AggregateBands,
    RegretCurve,
    aggregate_runs,
    correlation_sweep,
    regret_trajectory,
    spearman,
)
from .benchtab import (
    BUDGETS,
    MAX_BUDGET,
    AuditedTable,
    BenchTable,
    best_in_space,
    dump_table,
    generate_surrogate_table,
    load_table,
    save_table,
)
from .enumeration import (
    SpaceStats,
    canonical_architectures,
    canonical_key,
    convention_report,
    count_stats,
    distinct_pruned,
    enumerate_architectures,
)
from .optimizers import (
    KINDS,
    OptimizerConfig,
    Trajectory,
    exact_expected_error,
    make_estimator,
    run_search,
    sample_uniform_architecture,
    score_function_gradient,
)
from .relax import ArchWeights, discretize, init_weights, sample_architecture
from .space import (
    Architecture,
    SearchSpaceSpec,
    build_space,
    prune_loose_ends,
    validate_architecture,
)
from .tuner import (
    ConfigSpace,
    TunerConfig,
    TunerResult,
    budget_ladder,
    config_space_preset,
    kde_propose,
    run_tuner,
    successive_halving,
)

__all__ = [
    "__version__",
    "AggregateBands",
    "ArchWeights",
    "Architecture",
    "AuditedTable",
    "BUDGETS",
    "BenchTable",
    "ConfigSpace",
    "KINDS",
    "MAX_BUDGET",
    "OptimizerConfig",
    "RegretCurve",
    "SearchSpaceSpec",
    "SpaceStats",
    "Trajectory",
    "TunerConfig",
    "TunerResult",
    "aggregate_runs",
    "best_in_space",
    "budget_ladder",
    "build_space",
    "canonical_architectures",
    "canonical_key",
    "config_space_preset",
    "convention_report",
    "correlation_sweep",
    "count_stats",
    "discretize",
    "distinct_pruned",
    "dump_table",
    "enumerate_architectures",
    "exact_expected_error",
    "generate_surrogate_table",
    "init_weights",
    "kde_propose",
    "load_table",
    "make_estimator",
    "prune_loose_ends",
    "regret_trajectory",
    "run_search",
    "run_tuner",
    "sample_architecture",
    "sample_uniform_architecture",
    "save_table",
    "score_function_gradient",
    "spearman",
    "successive_halving",
    "validate_architecture",
]
