"""Command line front end.

Subcommands mirror the library surface: build a dataset, fit prior reward
statistics, solve one instance, run the benchmark / ablation ladder / knob
sweep / speed report, and post-process edge records or tree exports.  Exit
codes: 0 on success, 2 for configuration problems, 3 when a remote backend is
unreachable, 1 for any other anticipated failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .dataset import DatasetSpec, generate_dataset, load_dataset, save_dataset
from .errors import BackendUnavailable, ConfigError, ScmctsError
from .harness import (
    ExperimentConfig,
    analyze_edges,
    load_experiment_config,
    run_ablation,
    run_benchmark,
    run_prior_phase,
    run_speed,
    run_sweep,
    solve_instance,
    write_json,
)
from .rewards import RewardFactorStats
from .treeio import load_tree, save_dot, save_tree, tree_to_dict


def _parse_groups(text: str) -> dict[int, int]:
    out: dict[int, int] = {}
    try:
        for part in text.split(","):
            step, count = part.split(":")
            out[int(step)] = int(count)
    except ValueError as exc:
        raise ConfigError(f"bad groups spec {text!r}; expected like 2:100,4:100") from exc
    return out


def _parse_values(parameter: str, text: str) -> list:
    try:
        if parameter == "weights":
            return [tuple(float(w) for w in part.split(":")) for part in text.split(",")]
        if parameter == "iterations":
            return [int(v) for v in text.split(",")]
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad values spec {text!r} for {parameter}") from exc


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    config = load_experiment_config(args.config) if args.config else ExperimentConfig()
    updates: dict = {}
    if getattr(args, "dataset", None):
        updates["dataset"] = args.dataset
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        updates["jobs"] = args.jobs
    if getattr(args, "limit", None) is not None:
        updates["limit"] = args.limit
    if getattr(args, "groups", None):
        updates["groups"] = tuple(int(g) for g in args.groups.split(","))
    return dataclasses.replace(config, **updates) if updates else config


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="experiment config JSON file")
    parser.add_argument("--dataset", help="dataset directory")
    parser.add_argument("--seed", type=int, help="override the experiment seed")
    parser.add_argument("--jobs", type=int, help="parallel worker processes")
    parser.add_argument("--limit", type=int, help="cap instances per plan-length group")
    parser.add_argument("--groups", help="restrict to plan-length groups, e.g. 4,6")


def _cmd_gen_dataset(args: argparse.Namespace) -> int:
    spec_kwargs: dict = {}
    if args.groups:
        spec_kwargs["groups"] = _parse_groups(args.groups)
    if args.difficulty:
        spec_kwargs["difficulty"] = args.difficulty
    if args.blocks_min:
        spec_kwargs["blocks_min"] = args.blocks_min
    if args.blocks_max:
        spec_kwargs["blocks_max"] = args.blocks_max
    try:
        spec = DatasetSpec(**spec_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    problems = generate_dataset(spec, args.seed)
    save_dataset(problems, args.out, args.seed, pool_size=args.pool_size)
    print(f"wrote {len(problems)} instances to {args.out}")
    return 0


def _cmd_prior_stats(args: argparse.Namespace) -> int:
    config = _experiment(args)
    problems = load_dataset(args.dataset or config.dataset)
    stats, meta = run_prior_phase(problems, config)
    write_json(args.out, {"factors": stats.to_dict(), "meta": meta})
    print(f"fitted stats from {meta['solutions']} solutions ({meta['scored_steps']} steps)")
    return 0


def _load_stats(path: str | None) -> RewardFactorStats | None:
    if not path:
        return None
    data = json.loads(Path(path).read_text())
    return RewardFactorStats.from_dict(data.get("factors", data))


def _cmd_solve(args: argparse.Namespace) -> int:
    config = _experiment(args)
    problems = load_dataset(args.dataset or config.dataset)
    if not 0 <= args.index < len(problems):
        raise ConfigError(f"index {args.index} outside dataset of {len(problems)}")
    problem = problems[args.index]
    stats = _load_stats(args.stats)
    stats_dict = stats.to_dict() if stats else None
    if stats_dict is None and config.mask.multi_rm and not config.mask.random_reward:
        stats, _ = run_prior_phase(problems, config)
        stats_dict = stats.to_dict()
    record, result = solve_instance(problem, config, stats_dict, args.index, problems)
    for action in result.plan:
        print(action.text())
    print(f"solved={record['solved']} nodes={record['nodes_created']} iterations={record['iterations']}")
    if args.out or args.dot:
        data = tree_to_dict(result, problem, config.search)
        if args.out:
            save_tree(data, args.out)
        if args.dot:
            save_dot(data, args.dot)
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    config = _experiment(args)
    results = run_benchmark(args.dataset, config, args.out, stats=_load_stats(args.stats))
    print(f"accuracy {results['accuracy']:.3f} over {len(results['instances'])} instances")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = _experiment(args)
    report = run_ablation(args.dataset, config, args.out)
    for rung in report["rungs"]:
        print(f"{rung['name']:>14}: {rung['accuracy']:.3f}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _experiment(args)
    values = _parse_values(args.parameter, args.values)
    report = run_sweep(args.dataset, config, args.out, args.parameter, values)
    for row in report["rows"]:
        print(f"{args.parameter}={row['value']}: {row['accuracy']:.3f}")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    report = analyze_edges(
        args.edges,
        bins=args.bins,
        permutations=args.permutations,
        seed=args.seed or 0,
        predecessor_minus_successor=args.predecessor_minus_successor,
    )
    write_json(args.out, report)
    print(
        f"{report['edges']} edges: spearman={report['spearman']:.3f} "
        f"(p={report['spearman_pvalue']:.4f})"
    )
    return 0


def _cmd_speed(args: argparse.Namespace) -> int:
    config = _experiment(args)
    report = run_speed(args.dataset, config, args.out, baseline=args.baseline)
    speedup = report["speedup_tokens_per_second"]
    print(f"speedup: {'n/a' if speedup is None else f'{speedup:.2f}x'}")
    return 0


def _cmd_export_tree(args: argparse.Namespace) -> int:
    save_dot(load_tree(args.tree), args.dot)
    print(f"wrote {args.dot}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scmcts",
        description="Reward-guided tree search over block-stacking plans.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="generate a grouped instance dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--groups", help="per-group counts, e.g. 2:100,4:100")
    p.add_argument("--difficulty", choices=("easy", "hard"))
    p.add_argument("--blocks-min", type=int)
    p.add_argument("--blocks-max", type=int)
    p.add_argument("--pool-size", type=int, default=10)
    p.set_defaults(func=_cmd_gen_dataset)

    p = sub.add_parser("prior-stats", help="fit factor region statistics")
    _add_experiment_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_prior_stats)

    p = sub.add_parser("solve", help="search one instance")
    _add_experiment_flags(p)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--stats", help="prior stats JSON file")
    p.add_argument("--out", help="write the search tree as JSON")
    p.add_argument("--dot", help="write the search tree as Graphviz DOT")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("bench", help="run the accuracy benchmark")
    _add_experiment_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--stats", help="prior stats JSON file")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("ablate", help="run the cumulative feature ladder")
    _add_experiment_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("sweep", help="vary one knob and rerun the benchmark")
    _add_experiment_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--parameter", required=True, choices=("exploration", "iterations", "weights"))
    p.add_argument("--values", required=True, help="comma list; weights as w:w:w triples")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("analyze", help="correlate edge rewards with plan progress")
    p.add_argument("--edges", required=True, help="edges.json from a benchmark run")
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--permutations", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--predecessor-minus-successor", action="store_true")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("speed", help="time draft-verified decoding against a baseline")
    _add_experiment_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", choices=("greedy", "direct"), default="greedy")
    p.set_defaults(func=_cmd_speed)

    p = sub.add_parser("export-tree", help="render a saved tree JSON as DOT")
    p.add_argument("--tree", required=True)
    p.add_argument("--dot", required=True)
    p.set_defaults(func=_cmd_export_tree)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BackendUnavailable as exc:
        print(f"backend unavailable: {exc}", file=sys.stderr)
        return 3
    except ScmctsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
