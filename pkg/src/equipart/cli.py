"""Command-line front end.

Five subcommands cover the library surface: ``simulate`` writes a noisy
request stream for a hidden partitioning, ``solve`` runs the sampling
initializer plus the local search on observed pairs, ``oracle`` runs the
exhaustive solver, ``bench`` drives the experiment harness from a config
file, and ``warehouse`` runs the section-assignment study end to end.

Every run writes ``manifest.json`` next to its result files.  The manifest
embeds the fully resolved config (flags merged over any ``--config`` file,
seeds made concrete), so feeding it back through ``--config`` replays the
run and reproduces the result files byte for byte.

Exit codes: 0 success, 2 bad flags or malformed input, 3 infeasible
constraints, 4 exhaustive-solver cap exceeded, 5 failed ``--assert``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    Stopwatch,
    experiment_from_config,
    experiment_to_config,
    read_manifest_config,
    run_accuracy_experiment,
    run_noise_tracking,
    run_walk_ablation,
    run_warehouse,
    write_manifest,
    write_noise_csv,
    write_results_csv,
    write_warehouse_csv,
)
from .core import (
    Assignment,
    ConstraintSet,
    PartitionSpec,
    load_constraint_file,
    validate_constraints,
)
from .data import load_transactions, synthetic_market_basket, warehouse_constraints
from .errors import (
    DomainError,
    EquipartError,
    InfeasibleConstraints,
    InstanceTooLarge,
    MalformedConstraint,
    ParseError,
    UnknownItem,
)
from .inference import WalkConfig, exact_map, lw_initialize, walk, write_trace
from .model import NoiseGrid, ObservationModel, PairCounts
from .simulator import Environment, stream, write_stream

REQUEST_MODES = ("all_pairs", "one_random_pair")
BENCH_KINDS = ("accuracy", "noise", "ablation")


class _UsageExit(Exception):
    """Flag-level problem: print the subcommand usage and exit 2."""

    def __init__(self, parser: argparse.ArgumentParser, message: str):
        super().__init__(message)
        self.parser = parser
        self.message = message


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------


def _load_config(path, command: str) -> dict:
    cfg = read_manifest_config(path)
    if cfg.get("version") != 1:
        raise DomainError(f"unsupported config version {cfg.get('version')!r}")
    written_by = cfg.get("command", command)
    # solve and oracle share one config shape; everything else must match.
    compatible = written_by == command or {written_by, command} <= {"solve", "oracle"}
    if not compatible:
        raise DomainError(
            f"config was written by {written_by!r}, not usable with {command!r}"
        )
    return cfg


def _merged(args, cfg: dict, key: str, default=None):
    """Flag beats config beats built-in default; None means unset."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    value = cfg.get(key)
    return default if value is None else value


def _require(args, cfg: dict, key: str):
    value = _merged(args, cfg, key)
    if value is None:
        raise _UsageExit(args._parser, f"--{key.replace('_', '-')} is required")
    return value


def _resolve_seed(args, cfg: dict):
    """Flag, then config, then EQUIPART_SEED, then fresh entropy."""
    if args.seed is not None:
        return args.seed
    if cfg.get("seed") is not None:
        return cfg["seed"]
    env = os.environ.get("EQUIPART_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise DomainError(f"EQUIPART_SEED must be an integer, got {env!r}") from None
    return int(np.random.SeedSequence().entropy)


def _child_seed(master, *key: int) -> tuple:
    return tuple(
        int(x) for x in np.random.SeedSequence(master, spawn_key=key).generate_state(4)
    )


def _cons_to_config(cons: ConstraintSet) -> dict:
    return {
        "must_link": sorted(list(pair) for pair in cons.must_link),
        "cannot_link": sorted(list(pair) for pair in cons.cannot_link),
        "allowed": [[obj, sorted(parts)] for obj, parts in cons.allowed],
    }


def _cons_from_config(cfg: dict) -> ConstraintSet:
    return ConstraintSet(
        must_link=frozenset(tuple(p) for p in cfg.get("must_link", ())),
        cannot_link=frozenset(tuple(p) for p in cfg.get("cannot_link", ())),
        allowed={obj: frozenset(parts) for obj, parts in cfg.get("allowed", ())},
    )


def _resolve_problem(args, cfg: dict, items=None):
    """Build (spec, cons) from flags, an optional constraint file, and config."""
    objects = int(_require(args, cfg, "objects"))
    partitions = int(_require(args, cfg, "partitions"))
    capacities = None
    if getattr(args, "constraints", None) is not None:
        parsed = load_constraint_file(args.constraints, items=items)
        cons = parsed.constraints
        if parsed.sections is not None and len(parsed.sections) != partitions:
            raise DomainError(
                f"constraint file declares {len(parsed.sections)} sections, "
                f"--partitions says {partitions}"
            )
        capacities = parsed.capacities
    elif "constraints" in cfg:
        cons = _cons_from_config(cfg["constraints"])
        if cfg.get("capacities") is not None:
            capacities = tuple(cfg["capacities"])
    else:
        cons = ConstraintSet.empty()
    if capacities is None:
        spec = PartitionSpec.equi(objects, partitions)
    else:
        if len(capacities) == 1:
            capacities = tuple(capacities) * partitions
        spec = PartitionSpec(objects, partitions, tuple(capacities))
    return spec, cons


def _out_dir(args) -> Path:
    out = Path(args.out if args.out is not None else ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Counts file format: CSV rows i,j,count with an optional header line.
# ---------------------------------------------------------------------------


def _read_counts_csv(path, n_objects: int) -> PairCounts:
    matrix = np.zeros((n_objects, n_objects), dtype=np.int64)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    start = 0
    if rows and not rows[0][0].strip().lstrip("-").isdigit():
        if [h.strip() for h in rows[0]] != ["i", "j", "count"]:
            raise ParseError(f"{path} is not a counts file (bad header)", line=1)
        start = 1
    for line_no, row in enumerate(rows[start:], start=start + 1):
        try:
            i, j, count = (int(x) for x in row)
        except ValueError:
            raise ParseError(f"bad counts row {row!r}", line=line_no) from None
        if not (0 <= i < n_objects and 0 <= j < n_objects) or i == j or count < 0:
            raise ParseError(f"counts row {row!r} out of range", line=line_no)
        matrix[i, j] += count
        matrix[j, i] += count
    return PairCounts(matrix, int(matrix.sum()) // 2)


def _counts_to_triples(counts: PairCounts) -> list:
    n = counts.n_objects
    return [
        [i, j, int(counts.counts[i, j])]
        for i in range(n)
        for j in range(i + 1, n)
        if counts.counts[i, j]
    ]


def _counts_from_triples(triples, n_objects: int) -> PairCounts:
    matrix = np.zeros((n_objects, n_objects), dtype=np.int64)
    for i, j, count in triples:
        matrix[i, j] += count
        matrix[j, i] += count
    return PairCounts(matrix, int(matrix.sum()) // 2)


# ---------------------------------------------------------------------------
# Assertions (--assert) for bench and warehouse
# ---------------------------------------------------------------------------

_CURVE_ASSERT = re.compile(
    r"^(?P<solver>[A-Za-z0-9_-]+)@(?P<t>\d+)(?P<op>>=|<=)(?P<value>[0-9.]+)$"
)
_MODE_ASSERT = re.compile(r"^mode_hit@(?P<t>\d+)(?P<op>>=|<=)(?P<value>[0-9.]+)$")
_ORDER_ASSERT = re.compile(r"^(?P<a>[a-z-]+)<(?P<b>[a-z-]+)$")


def _check(op: str, lhs: float, rhs: float) -> bool:
    return lhs >= rhs if op == ">=" else lhs <= rhs


def _eval_curve_assert(parser, expr: str, curve) -> tuple[bool, str]:
    m = _CURVE_ASSERT.match(expr)
    if m is None:
        raise _UsageExit(parser, f"bad --assert {expr!r} (want solver@t>=value)")
    rate = curve.rate(m["solver"], int(m["t"]))
    return _check(m["op"], rate, float(m["value"])), f"{expr}: observed {rate:.4f}"


def _eval_noise_assert(parser, expr: str, track) -> tuple[bool, str]:
    m = _MODE_ASSERT.match(expr)
    if m is None:
        raise _UsageExit(parser, f"bad --assert {expr!r} (want mode_hit@t>=value)")
    rate = track.mode_hit_rate(int(m["t"]))
    return _check(m["op"], rate, float(m["value"])), f"{expr}: observed {rate:.4f}"


def _eval_warehouse_assert(parser, expr: str, result) -> tuple[bool, str]:
    if expr == "violations==0":
        worst = max(result.rule_violations, default=0)
        return worst == 0, f"{expr}: max violations {worst}"
    m = _ORDER_ASSERT.match(expr)
    if m is None:
        raise _UsageExit(
            parser, f"bad --assert {expr!r} (want a<b over solver names, or violations==0)"
        )
    lhs, rhs = result.mean(m["a"]), result.mean(m["b"])
    return lhs < rhs, f"{expr}: means {lhs:.3f} vs {rhs:.3f}"


def _run_asserts(parser, expressions, evaluate) -> int:
    failures = 0
    for expr in expressions or ():
        ok, detail = evaluate(parser, expr)
        if ok:
            print(f"assert ok: {detail}")
        else:
            failures += 1
            print(f"assert FAILED: {detail}", file=sys.stderr)
    return 5 if failures else 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, "simulate") if args.config else {}
    spec, cons = _resolve_problem(args, cfg)
    p = float(_require(args, cfg, "p"))
    n_requests = int(_require(args, cfg, "requests"))
    if n_requests < 0:
        raise DomainError("requests must be non-negative")
    seed = _resolve_seed(args, cfg)

    validate_constraints(spec, cons)
    with Stopwatch() as sw:
        env = Environment.create(spec, cons, p, seed)
        _, requests = stream(env, n_requests)

    out = _out_dir(args)
    write_stream(out / "stream.csv", requests)
    with open(out / "truth.txt", "w", encoding="utf-8") as fh:
        fh.write(" ".join(str(lab) for lab in env.truth.labels) + "\n")
    config = {
        "version": 1,
        "command": "simulate",
        "objects": spec.object_count,
        "partitions": spec.partition_count,
        "capacities": list(spec.capacities),
        "constraints": _cons_to_config(cons),
        "p": p,
        "requests": n_requests,
        "seed": seed,
    }
    write_manifest(out / "manifest.json", "simulate", config, sw.elapsed)
    print(
        f"simulate: {n_requests} requests from a hidden "
        f"{spec.object_count}/{spec.partition_count} split at p={p}"
    )
    print(f"wrote stream.csv, truth.txt, manifest.json to {out}")
    return 0


# ---------------------------------------------------------------------------
# solve / oracle
# ---------------------------------------------------------------------------


def _load_counts(args, cfg: dict, n_objects: int) -> PairCounts:
    if getattr(args, "stream", None) is not None:
        from .simulator import read_stream

        return PairCounts.from_requests(n_objects, read_stream(args.stream))
    if getattr(args, "counts", None) is not None:
        return _read_counts_csv(args.counts, n_objects)
    if "counts" in cfg:
        return _counts_from_triples(cfg["counts"], n_objects)
    raise _UsageExit(args._parser, "need --stream or --counts")


def _partition_summary(assignment: Assignment) -> str:
    groups: dict[int, list[int]] = {}
    for obj, lab in enumerate(assignment.labels):
        groups.setdefault(lab, []).append(obj)
    return " ".join(
        "{" + ",".join(str(o) for o in groups[lab]) + "}" for lab in sorted(groups)
    )


def _run_solver(args, force_oracle: bool) -> int:
    command = "oracle" if force_oracle else "solve"
    cfg = _load_config(args.config, command) if args.config else {}
    spec, cons = _resolve_problem(args, cfg)
    counts = _load_counts(args, cfg, spec.object_count)
    oracle = force_oracle or bool(_merged(args, cfg, "oracle", False))
    oracle_cap = int(_merged(args, cfg, "oracle_cap", 1_000_000))
    epsilon = float(_merged(args, cfg, "epsilon", 0.1))
    steps = int(_merged(args, cfg, "steps", 1000))
    init_samples = int(_merged(args, cfg, "init_samples", 100))
    grid_resolution = int(_merged(args, cfg, "grid_resolution", 100))
    trace = bool(_merged(args, cfg, "trace", False))
    seed = _resolve_seed(args, cfg)

    validate_constraints(spec, cons)
    om = ObservationModel(spec)
    grid = NoiseGrid.uniform(grid_resolution)
    with Stopwatch() as sw:
        if oracle:
            result = exact_map(spec, cons, om, counts, grid=grid, cap=oracle_cap)
        else:
            init = lw_initialize(
                spec, cons, om, counts,
                grid=grid, n_samples=init_samples, seed=_child_seed(seed, 0),
            )
            walk_cfg = WalkConfig(
                epsilon=epsilon, steps=steps, init_samples=init_samples,
                seed=_child_seed(seed, 1), record_trace=trace,
            )
            result = walk(spec, cons, om, counts, init, walk_cfg, grid=grid)

    out = _out_dir(args)
    solution = {
        "version": 1,
        "solver": "oracle" if oracle else "walk",
        "objects": spec.object_count,
        "partitions": spec.partition_count,
        "observations": counts.total,
        "assignment": list(result.assignment.labels),
        "p_hat": result.p_hat,
        "score": result.score,
    }
    with open(out / "solution.json", "w", encoding="utf-8") as fh:
        json.dump(solution, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if trace and result.trace is not None:
        write_trace(out / "trace.csv", result.trace)
    config = {
        "version": 1,
        "command": command,
        "objects": spec.object_count,
        "partitions": spec.partition_count,
        "capacities": list(spec.capacities),
        "constraints": _cons_to_config(cons),
        "counts": _counts_to_triples(counts),
        "oracle": oracle,
        "oracle_cap": oracle_cap,
        "epsilon": epsilon,
        "steps": steps,
        "init_samples": init_samples,
        "grid_resolution": grid_resolution,
        "trace": trace,
        "seed": seed,
    }
    write_manifest(out / "manifest.json", command, config, sw.elapsed)
    print(
        f"{command}: score {result.score:.4f}, p_hat {result.p_hat:.3f}, "
        f"partitions {_partition_summary(result.assignment)}"
    )
    print(f"wrote solution.json, manifest.json to {out}")
    return 0


def cmd_solve(args) -> int:
    return _run_solver(args, force_oracle=False)


def cmd_oracle(args) -> int:
    return _run_solver(args, force_oracle=True)


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def cmd_bench(args) -> int:
    if args.config is None:
        raise _UsageExit(args._parser, "--config is required")
    cfg = _load_config(args.config, "bench")
    kind = _merged(args, cfg, "kind", "accuracy")
    if kind not in BENCH_KINDS:
        raise DomainError(f"unknown bench kind {kind!r}, expected one of {BENCH_KINDS}")
    exp = experiment_from_config(cfg)
    if args.trials is not None:
        exp = replace(exp, trials=args.trials)
    exp = replace(exp, seed=_resolve_seed(args, cfg))
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)

    with Stopwatch() as sw:
        if kind == "accuracy":
            outcome = run_accuracy_experiment(exp, jobs=jobs)
        elif kind == "ablation":
            outcome = run_walk_ablation(exp, jobs=jobs)
        else:
            outcome = run_noise_tracking(exp, jobs=jobs)

    out = _out_dir(args)
    if kind == "noise":
        write_noise_csv(outcome, out / "results.csv")
        final_t = exp.checkpoints[-1]
        print(
            f"bench noise: {exp.trials} trials, mode hit rate at t={final_t}: "
            f"{outcome.mode_hit_rate(final_t):.3f}"
        )
    else:
        write_results_csv(outcome, out / "results.csv")
        solvers = sorted({pt.solver for pt in outcome.points})
        for solver in solvers:
            cells = " ".join(
                f"t={pt.t}:{pt.success_rate:.3f}±{pt.ci_half_width:.3f}"
                for pt in outcome.points
                if pt.solver == solver
            )
            print(f"bench {kind}: {solver} {cells}")
    config = {"command": "bench", "kind": kind, **experiment_to_config(exp)}
    write_manifest(out / "manifest.json", "bench", config, sw.elapsed)
    print(f"wrote results.csv, manifest.json to {out}")

    if kind == "noise":
        return _run_asserts(
            args._parser, args.asserts, lambda p, e: _eval_noise_assert(p, e, outcome)
        )
    return _run_asserts(
        args._parser, args.asserts, lambda p, e: _eval_curve_assert(p, e, outcome)
    )


# ---------------------------------------------------------------------------
# warehouse
# ---------------------------------------------------------------------------


def _warehouse_rules(args, cfg: dict, ts) -> ConstraintSet:
    if getattr(args, "constraints", None) is not None:
        return load_constraint_file(args.constraints, items=ts.items).constraints
    if "constraints" in cfg:
        return _cons_from_config(cfg["constraints"])
    try:
        return warehouse_constraints(ts.items)
    except UnknownItem:
        # custom corpora may lack the stock item names the built-in rules use
        print("note: corpus lacks the stock rule items, running without placement rules")
        return ConstraintSet.empty()


def cmd_warehouse(args) -> int:
    cfg = _load_config(args.config, "warehouse") if args.config else {}
    tx_path = _merged(args, cfg, "transactions")
    ts = load_transactions(tx_path) if tx_path else synthetic_market_basket()
    rules = _warehouse_rules(args, cfg, ts)
    sections = _merged(args, cfg, "sections")
    spec = None
    if sections is not None:
        spec = PartitionSpec.equi(len(ts.items), int(sections))
    repetitions = int(_merged(args, cfg, "repetitions", 1000))
    restarts = int(_merged(args, cfg, "restarts", 12))
    epsilon = float(_merged(args, cfg, "epsilon", 0.1))
    steps = int(_merged(args, cfg, "steps", 1000))
    init_samples = int(_merged(args, cfg, "init_samples", 100))
    folds = int(_merged(args, cfg, "folds", 5))
    mode = _merged(args, cfg, "mode", "all_pairs")
    seed = _resolve_seed(args, cfg)
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)

    walk_cfg = WalkConfig(epsilon=epsilon, steps=steps, init_samples=init_samples)
    with Stopwatch() as sw:
        result = run_warehouse(
            ts, rules,
            spec=spec, repetitions=repetitions, walk_cfg=walk_cfg,
            restarts=restarts, mode=mode, k_folds=folds, seed=seed, jobs=jobs,
        )

    out = _out_dir(args)
    write_warehouse_csv(result, out / "results.csv")
    with open(out / "audit.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["repetition", "rule_violations"])
        for rep, violations in enumerate(result.rule_violations):
            writer.writerow([rep, violations])
    config = {
        "version": 1,
        "command": "warehouse",
        "transactions": str(tx_path) if tx_path else None,
        "sections": None if sections is None else int(sections),
        "constraints": _cons_to_config(rules),
        "repetitions": repetitions,
        "restarts": restarts,
        "epsilon": epsilon,
        "steps": steps,
        "init_samples": init_samples,
        "folds": folds,
        "mode": mode,
        "seed": seed,
    }
    write_manifest(out / "manifest.json", "warehouse", config, sw.elapsed)
    for solver in ("bayes-rules", "bayes", "oma"):
        print(
            f"warehouse: {solver} mean trip cost "
            f"{result.mean(solver):.3f} ± {result.std(solver):.3f}"
        )
    print(f"warehouse: total rule violations {sum(result.rule_violations)}")
    print(f"wrote results.csv, audit.csv, manifest.json to {out}")
    return _run_asserts(
        args._parser, args.asserts, lambda p, e: _eval_warehouse_assert(p, e, result)
    )


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(sp) -> None:
    sp.add_argument("--config", metavar="FILE", help="config or manifest JSON to start from")
    sp.add_argument("--out", metavar="DIR", help="output directory (default: .)")
    sp.add_argument("--seed", type=int, help="master seed (default: EQUIPART_SEED or fresh)")
    sp.set_defaults(_parser=sp)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="equipart",
        description="Recover a hidden equal-size partitioning from noisy pair requests.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("simulate", help="write a noisy request stream and its hidden truth")
    sp.add_argument("--objects", type=int, help="number of objects")
    sp.add_argument("--partitions", type=int, help="number of partitions")
    sp.add_argument("--p", type=float, help="probability a request reflects the truth")
    sp.add_argument("--requests", type=int, help="stream length")
    sp.add_argument("--constraints", metavar="FILE", help="placement constraint file")
    _add_common(sp)
    sp.set_defaults(func=cmd_simulate)

    for name, help_text in (
        ("solve", "estimate the hidden partitioning from observed pairs"),
        ("oracle", "exhaustive search over equivalence classes (small instances)"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--stream", metavar="FILE", help="request stream CSV (t,i,j)")
        sp.add_argument("--counts", metavar="FILE", help="pair counts CSV (i,j,count)")
        sp.add_argument("--objects", type=int, help="number of objects")
        sp.add_argument("--partitions", type=int, help="number of partitions")
        sp.add_argument("--constraints", metavar="FILE", help="placement constraint file")
        sp.add_argument("--grid-resolution", type=int, dest="grid_resolution",
                        help="noise grid resolution (default 100)")
        sp.add_argument("--oracle-cap", type=int, dest="oracle_cap",
                        help="refuse exhaustive search above this class count (default 1e6)")
        if name == "solve":
            sp.add_argument("--epsilon", type=float, help="noise move probability (default 0.1)")
            sp.add_argument("--steps", type=int, help="search steps (default 1000)")
            sp.add_argument("--init-samples", type=int, dest="init_samples",
                            help="weighted init sample count (default 100)")
            sp.add_argument("--oracle", action="store_true", default=None,
                            help="use the exhaustive solver instead of the local search")
            sp.add_argument("--trace", action="store_true", default=None,
                            help="also write trace.csv with per-step scores")
        _add_common(sp)
        sp.set_defaults(func=cmd_solve if name == "solve" else cmd_oracle)

    sp = sub.add_parser("bench", help="run a benchmark described by a config file")
    sp.add_argument("--kind", choices=BENCH_KINDS, help="benchmark family (default accuracy)")
    sp.add_argument("--trials", type=int, help="override the configured trial count")
    sp.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    sp.add_argument("--assert", dest="asserts", action="append", metavar="EXPR",
                    help="post-run check, e.g. bayes@50>=0.9; exit 5 on failure")
    _add_common(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("warehouse", help="section-assignment study on transaction data")
    sp.add_argument("--transactions", metavar="FILE",
                    help="transaction file (default: built-in synthetic corpus)")
    sp.add_argument("--sections", type=int, help="section count (default: derived)")
    sp.add_argument("--constraints", metavar="FILE",
                    help="placement rule file (default: built-in stock rules)")
    sp.add_argument("--repetitions", type=int, help="fold repetitions (default 1000)")
    sp.add_argument("--restarts", type=int, help="extra greedy restarts (default 12)")
    sp.add_argument("--epsilon", type=float, help="noise move probability (default 0.1)")
    sp.add_argument("--steps", type=int, help="search steps (default 1000)")
    sp.add_argument("--init-samples", type=int, dest="init_samples",
                    help="weighted init sample count (default 100)")
    sp.add_argument("--folds", type=int, help="cross-validation folds (default 5)")
    sp.add_argument("--mode", choices=REQUEST_MODES, help="transaction-to-pair expansion")
    sp.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    sp.add_argument("--assert", dest="asserts", action="append", metavar="EXPR",
                    help="post-run check: a<b over solver names, or violations==0")
    _add_common(sp)
    sp.set_defaults(func=cmd_warehouse)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage / version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageExit as exc:
        exc.parser.print_usage(sys.stderr)
        print(f"equipart: error: {exc.message}", file=sys.stderr)
        return 2
    except (InfeasibleConstraints, MalformedConstraint) as exc:
        print(f"equipart: infeasible constraints: {exc}", file=sys.stderr)
        return 3
    except InstanceTooLarge as exc:
        print(f"equipart: {exc}", file=sys.stderr)
        return 4
    except EquipartError as exc:
        print(f"equipart: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"equipart: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
