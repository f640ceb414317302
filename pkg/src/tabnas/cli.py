"""Command-line front end wiring the whole pipeline.

Subcommands: space statistics, enumeration, surrogate table generation,
table ingest checks, weight discretization, search runs, hyperparameter
tuning, correlation sweeps, and manifest replay.  Every command writes a
run manifest (manifest.json) into --out before any result file, records
the digest of its input table, and writes files atomically via a
temp-file rename, so an interrupted run never leaves a truncated result.

Randomness policy: commands taking one --seed expand it where several
streams are needed (numpy SeedSequence spawning here, the documented
per-config hashing inside the tuner); `search` takes the explicit seed
list its trajectories are labeled with.

Exit status: 0 on success, 1 on runtime failure with a one-line
diagnostic on stderr, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import datetime
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import aggregate_runs, correlation_sweep, regret_trajectory
from .benchtab import (
    BUDGETS,
    dump_table,
    file_digest,
    generate_surrogate_table,
    load_table,
)
from .enumeration import (
    CONVENTIONS,
    canonical_architectures,
    canonical_key,
    convention_report,
    count_stats,
    render_convention_report,
)
from .optimizers import OptimizerConfig, make_estimator, run_search
from .relax import discretize, init_weights
from .space import build_space, prune_loose_ends
from .tuner import TunerConfig, config_space_preset, run_tuner

_ALGOS = {
    "darts": "DARTS_SF",
    "gdas": "GDAS",
    "enas": "ENAS_PG",
    "random-ws": "RANDOM_WS",
    "random-search": "RANDOM_SEARCH",
    "regularized-evolution": "REG_EVOLUTION",
}
#: engines that expose architectural weights after fitting
_LOGIT_ALGOS = ("darts", "gdas", "enas")

_SEARCH_OVERRIDES = (
    "fidelity_budget",
    "arch_lr",
    "logit_l2",
    "samples_per_step",
    "tau_start",
    "tau_end",
    "baseline_decay",
    "population_size",
    "tournament_size",
    "selection_noise",
    "noise_prob",
)


# ---------------------------------------------------------------------------
# Output plumbing.
# ---------------------------------------------------------------------------


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_json(path: Path, payload) -> None:
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _write_text(path, buffer.getvalue())


def _prepare_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _strip_out_flag(argv) -> list[str]:
    kept = []
    skip = False
    for token in argv:
        if skip:
            skip = False
            continue
        if token == "--out":
            skip = True
            continue
        if token.startswith("--out="):
            continue
        kept.append(token)
    return kept


def _resolved_config(args) -> dict:
    config = {}
    for key, value in vars(args).items():
        if key in ("handler", "command", "out") or key.startswith("_"):
            continue
        config[key] = str(value) if isinstance(value, Path) else value
    return config


def _write_manifest(args, out: Path, *, seeds=(), table_path=None) -> None:
    table = None
    if table_path is not None:
        table = {"path": str(table_path), "digest": file_digest(table_path)}
    payload = {
        "command": args.command,
        "argv": _strip_out_flag(args._argv),
        "config": _resolved_config(args),
        "seeds": list(seeds),
        "table": table,
        "version": __version__,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    _write_json(out / "manifest.json", payload)


def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in text.split(",")]


# ---------------------------------------------------------------------------
# Command handlers.
# ---------------------------------------------------------------------------


def _cmd_stats(args):
    spec = build_space(args.space)
    stats = dataclasses.asdict(count_stats(spec, args.convention))
    out = _prepare_out(args)
    _write_manifest(args, out)
    _write_json(out / "stats.json", stats)
    print(json.dumps(stats, indent=2, sort_keys=True))


def _cmd_enumerate(args):
    spec = build_space(args.space)
    out = _prepare_out(args)
    _write_manifest(args, out)
    archs = canonical_architectures(spec)
    payload = {
        "space": args.space,
        "count": len(archs),
        "architectures": [
            {"key": canonical_key(arch), "text": arch.to_text()} for arch in archs
        ],
    }
    _write_json(out / "enumeration.json", payload)
    if args.report:
        rows = convention_report((args.space,))
        _write_text(out / "convention_report.txt", render_convention_report(rows))


def _cmd_gen_table(args):
    spec = build_space(args.space)
    out = _prepare_out(args)
    _write_manifest(args, out, seeds=[args.seed])
    table = generate_surrogate_table(spec, args.seed)
    _write_text(out / "table.jsonl", dump_table(table))


def _cmd_ingest_check(args):
    table = load_table(args.table)
    out = _prepare_out(args)
    _write_manifest(args, out, table_path=args.table)
    report = {
        "path": str(args.table),
        "digest": file_digest(args.table),
        "records": len(table.records),
        "budgets": list(BUDGETS),
        "provenance": dataclasses.asdict(table.provenance)
        if table.provenance is not None
        else None,
    }
    _write_json(out / "report.json", report)
    print(f"ok: {report['records']} records, digest {report['digest'][:12]}")


def _cmd_discretize(args):
    spec = build_space(args.space)
    out = _prepare_out(args)
    _write_manifest(args, out, seeds=[args.seed])
    weights = init_weights(spec, scheme=args.scheme, sigma=args.sigma, seed=args.seed)
    arch = discretize(weights, spec)
    payload = {
        "space": args.space,
        "scheme": args.scheme,
        "architecture": arch.to_text(),
        "key": canonical_key(prune_loose_ends(arch)),
        "edges": sum(1 for _ in arch.edges()),
    }
    _write_json(out / "architecture.json", payload)
    print(payload["architecture"])


def _cmd_search(args):
    kind = _ALGOS[args.algo]
    spec = build_space(args.space)
    table = load_table(args.table)
    out = _prepare_out(args)
    _write_manifest(args, out, seeds=args.seeds, table_path=args.table)
    overrides = {
        name: value
        for name in _SEARCH_OVERRIDES
        if (value := getattr(args, name)) is not None
    }

    def one(seed: int):
        config = OptimizerConfig(kind=kind, epochs=args.epochs, seed=seed, **overrides)
        return run_search(spec, table, config)

    if args.workers > 1 and len(args.seeds) > 1:
        with concurrent.futures.ThreadPoolExecutor(args.workers) as pool:
            trajectories = list(pool.map(one, args.seeds))
    else:
        trajectories = [one(seed) for seed in args.seeds]

    for trajectory in trajectories:
        _write_json(
            out / f"trajectory_seed{trajectory.seed}.json", trajectory.to_dict()
        )
    curves = [regret_trajectory(t, table, spec) for t in trajectories]
    rows = [
        (curve.seed, p.epoch, p.t_sim, p.val_regret, p.test_regret)
        for curve in curves
        for p in curve.points
    ]
    _write_csv(
        out / "regret.csv",
        ("seed", "epoch", "t_sim", "val_regret", "test_regret"),
        rows,
    )
    if len(curves) >= 2:
        _write_json(out / "aggregate.json", aggregate_runs(curves).to_dict())


def _cmd_tune(args):
    kind = _ALGOS[args.algo]
    table = load_table(args.table)
    out = _prepare_out(args)
    _write_manifest(args, out, seeds=[args.seed], table_path=args.table)
    tuner_config = TunerConfig(
        min_budget=args.min_budget,
        max_budget=args.max_budget,
        eta=args.eta,
        eval_budget=args.eval_budget,
        sampler=args.sampler,
        bracket_rotation=args.bracket_rotation,
        workers=args.workers,
        seed=args.seed,
    )
    result = run_tuner(
        kind, args.space, table, config_space_preset(args.config_space), tuner_config
    )
    rows = [
        (
            inc.t_sim,
            inc.val_error,
            inc.val_regret,
            inc.test_regret,
            json.dumps(inc.config, sort_keys=True),
        )
        for inc in result.incumbents
    ]
    _write_csv(
        out / "incumbents.csv",
        ("t_sim", "val_error", "val_regret", "test_regret", "config"),
        rows,
    )
    _write_json(
        out / "tuning.json",
        {
            "kind": result.kind,
            "space": result.space_id,
            "sampler": result.sampler,
            "evaluations": len(result.trace.evaluations),
            "audit_reads": result.audit_reads,
            "best_val_regret": result.incumbents[-1].val_regret,
        },
    )


def _cmd_correlate(args):
    spec = build_space(args.space)
    table = load_table(args.table)
    out = _prepare_out(args)
    _write_manifest(args, out, seeds=[args.seed], table_path=args.table)
    if args.policy_samples is not None:
        if args.algo not in _LOGIT_ALGOS:
            raise ValueError(
                f"--policy-samples needs a weight-carrying engine, one of "
                f"{_LOGIT_ALGOS}"
            )
        engine_entropy, sweep_entropy = np.random.SeedSequence(args.seed).spawn(2)
        config = OptimizerConfig(
            kind=_ALGOS[args.algo],
            epochs=args.epochs,
            seed=int(engine_entropy.generate_state(1)[0]),
        )
        estimator = make_estimator(config).fit(spec, table)
        # before/after pair: how much the trained policy sharpens the sweep
        history = [init_weights(spec), estimator.weights_]
        snapshots = [0, 1]
        matrix = correlation_sweep(
            history,
            table,
            spec,
            snapshots,
            fidelity_budget=args.fidelity,
            policy_samples=args.policy_samples,
            rng=np.random.default_rng(sweep_entropy),
        )
    else:
        history = [init_weights(spec)]
        snapshots = [0]
        matrix = correlation_sweep(
            history, table, spec, snapshots, fidelity_budget=args.fidelity
        )
    rows = [
        (snapshots[i], budget, matrix[i, j])
        for i in range(len(snapshots))
        for j, budget in enumerate(BUDGETS)
    ]
    _write_csv(out / "correlation.csv", ("snapshot", "budget", "spearman"), rows)


def _cmd_replay(args):
    payload = json.loads(Path(args.manifest).read_text())
    table = payload.get("table")
    if table is not None:
        digest = file_digest(table["path"])
        if digest != table["digest"]:
            raise ValueError(
                f"table {table['path']} changed since the manifest was written"
            )
    return dispatch(payload["argv"] + ["--out", args.out])


# ---------------------------------------------------------------------------
# Parser and dispatch.
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabnas",
        description="Tabular one-shot architecture search harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_, handler):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(handler=handler)
        p.add_argument("--out", required=True, help="output directory")
        return p

    p = command("stats", "counting statistics for one space", _cmd_stats)
    p.add_argument("--space", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--convention", choices=CONVENTIONS, default="exact_k")

    p = command("enumerate", "canonical architectures of a space", _cmd_enumerate)
    p.add_argument("--space", type=int, choices=(1, 2, 3), required=True)
    p.add_argument(
        "--report",
        action="store_true",
        help="also write the counting-convention comparison report",
    )

    p = command("gen-table", "generate a surrogate benchmark table", _cmd_gen_table)
    p.add_argument("--space", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--seed", type=int, default=0)

    p = command("ingest-check", "validate a table file", _cmd_ingest_check)
    p.add_argument("--table", type=Path, required=True)

    p = command("discretize", "map sampled weights to an architecture", _cmd_discretize)
    p.add_argument("--space", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--scheme", choices=("zeros", "gaussian"), default="gaussian")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)

    p = command("search", "run a search engine over seeds", _cmd_search)
    p.add_argument("--algo", choices=sorted(_ALGOS), required=True)
    p.add_argument("--space", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--table", type=Path, required=True)
    p.add_argument(
        "--seeds",
        type=_parse_seeds,
        default=[0],
        help="'0..5' for a range, '0,2,7' for a list",
    )
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--fidelity-budget", type=int, dest="fidelity_budget")
    p.add_argument("--arch-lr", type=float, dest="arch_lr")
    p.add_argument("--logit-l2", type=float, dest="logit_l2")
    p.add_argument("--samples-per-step", type=int, dest="samples_per_step")
    p.add_argument("--tau-start", type=float, dest="tau_start")
    p.add_argument("--tau-end", type=float, dest="tau_end")
    p.add_argument("--baseline-decay", type=float, dest="baseline_decay")
    p.add_argument("--population-size", type=int, dest="population_size")
    p.add_argument("--tournament-size", type=int, dest="tournament_size")
    p.add_argument("--selection-noise", type=float, dest="selection_noise")
    p.add_argument("--noise-prob", type=float, dest="noise_prob")

    p = command("tune", "tune engine hyperparameters", _cmd_tune)
    p.add_argument("--algo", choices=sorted(_ALGOS), required=True)
    p.add_argument("--space", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--table", type=Path, required=True)
    p.add_argument("--config-space", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--min-budget", type=int, default=25)
    p.add_argument("--max-budget", type=int, default=100)
    p.add_argument("--eta", type=int, default=2)
    p.add_argument("--eval-budget", type=float, default=280.0)
    p.add_argument("--sampler", choices=("random", "kde"), default="random")
    p.add_argument("--bracket-rotation", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    p = command("correlate", "rank-correlation sweep over budgets", _cmd_correlate)
    p.add_argument("--space", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--table", type=Path, required=True)
    p.add_argument("--fidelity", type=int, choices=BUDGETS, default=12)
    p.add_argument("--policy-samples", type=int, dest="policy_samples")
    p.add_argument("--algo", choices=sorted(_ALGOS), default="enas")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)

    p = command("replay", "rerun the command recorded in a manifest", _cmd_replay)
    p.add_argument("manifest", type=Path)

    return parser


def dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exit_:
        code = exit_.code
        return code if isinstance(code, int) else 2
    args._argv = list(argv)
    try:
        status = args.handler(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0 if status is None else int(status)


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
