"""Experiment orchestration: datasets in, deterministic result files out.

Every run is described by one `ExperimentConfig`.  The prior phase and the
search phase talk through a serialized factor-statistics file, each instance
is solved with its own derived seed and its own fresh copy of the statistics,
and all result files except the speed report are free of wall-clock values,
so rerunning a config reproduces them byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .analysis import interpretability_report
from .blocksworld import Problem, problem_from_dict, problem_to_dict
from .dataset import load_dataset
from .errors import ConfigError, InsufficientSamples
from .oracle import PlanOracle
from .policy import PolicyContext, PolicySuite, SyntheticPolicyConfig
from .prompts import Demonstration, PromptTemplate, render_prompt
from .remote import RemoteEndpointConfig, RemotePolicy, TokenRegistry
from .rewards import (
    FACTORS,
    AblationMask,
    CompositeRewardConfig,
    RewardFactorStats,
    RewardModel,
    collect_prior_stats,
)
from .search import SearchConfig, SearchEngine, SearchResult

PRIOR_STATS_FILE = "prior_stats.json"
_SEED_TAG_INSTANCE = 29
_SEED_TAG_RANDOM_REWARD = 23


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class BackendSpec:
    """One policy endpoint: a synthetic oracle-tilted model or a remote one."""

    kind: str = "synthetic"
    fidelity: float = 0.7
    self_eval_fidelity: float | None = None  # None: track fidelity
    temperature: float = 1.0
    seed: int | None = None  # None: track the experiment seed
    url: str | None = None
    model: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("synthetic", "remote"):
            raise ConfigError(f"backend kind must be synthetic or remote, not {self.kind!r}")

    def policy_config(self, fallback_seed: int = 0) -> SyntheticPolicyConfig:
        sef = self.fidelity if self.self_eval_fidelity is None else self.self_eval_fidelity
        seed = fallback_seed if self.seed is None else self.seed
        return SyntheticPolicyConfig(self.temperature, self.fidelity, sef, seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BackendSpec":
        return cls(**_checked(cls, data))


def _checked(cls: type, data: dict) -> dict:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} options: {sorted(unknown)}")
    return dict(data)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str | None = None
    # Benchmark search setup: the iteration budget must cover one sibling
    # tour per level on 6-step instances; the exploration constant is fitted
    # to the z-scored reward scale (subtree means differ by ~0.5); and the
    # length charge is fitted to the typical good-step score (~0.7) so path
    # values rank quality above par, not sheer explored depth.
    search: SearchConfig = SearchConfig(max_iterations=30, exploration=0.5, length_penalty=0.55)
    reward: CompositeRewardConfig = CompositeRewardConfig()
    mask: AblationMask = AblationMask()
    expert: BackendSpec = BackendSpec(fidelity=0.7)
    amateur: BackendSpec = BackendSpec(fidelity=0.2)
    draft: BackendSpec | None = None  # None: reuse the amateur
    seed: int = 0
    jobs: int = 1
    limit: int | None = None  # per-group instance cap
    groups: tuple[int, ...] | None = None  # restrict to these plan-length groups
    verifier_analytics: bool = True
    prompt_difficulty: str = "easy"
    prompt_shots: int = 4

    def __post_init__(self) -> None:
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.limit is not None and self.limit < 1:
            raise ConfigError("limit must be >= 1 when given")

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "search": self.search.to_dict(),
            "reward": dataclasses.asdict(self.reward),
            "mask": dataclasses.asdict(self.mask),
            "expert": self.expert.to_dict(),
            "amateur": self.amateur.to_dict(),
            "draft": None if self.draft is None else self.draft.to_dict(),
            "seed": self.seed,
            "jobs": self.jobs,
            "limit": self.limit,
            "groups": None if self.groups is None else list(self.groups),
            "verifier_analytics": self.verifier_analytics,
            "prompt_difficulty": self.prompt_difficulty,
            "prompt_shots": self.prompt_shots,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = _checked(cls, data)
        try:
            if "search" in data:
                data["search"] = SearchConfig.from_dict(data["search"])
            if "reward" in data:
                raw = dict(data["reward"])
                if "weights" in raw:
                    raw["weights"] = tuple(raw["weights"])
                data["reward"] = CompositeRewardConfig(**_checked(CompositeRewardConfig, raw))
            if "mask" in data:
                raw = dict(data["mask"])
                if "factors" in raw:
                    raw["factors"] = tuple(raw["factors"])
                data["mask"] = AblationMask(**_checked(AblationMask, raw))
            for key in ("expert", "amateur"):
                if key in data:
                    data[key] = BackendSpec.from_dict(data[key])
            if data.get("draft") is not None:
                data["draft"] = BackendSpec.from_dict(data["draft"])
            if data.get("groups") is not None:
                data["groups"] = tuple(int(g) for g in data["groups"])
            return cls(**data)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return ExperimentConfig.from_dict(data)


def needs_prior_stats(mask: AblationMask) -> bool:
    return mask.multi_rm and not mask.random_reward


# ---------------------------------------------------------------------------
# deterministic serialization


def _finite(x: float | None) -> float | None:
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _sanitize(obj: Any) -> Any:
    """Strip non-finite floats so every result file is strict JSON."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float):
        return _finite(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return _finite(float(obj))
    return obj


def write_json(path: str | Path, obj: Any) -> None:
    text = json.dumps(_sanitize(obj), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def write_csv(path: str | Path, fieldnames: Sequence[str], rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


# ---------------------------------------------------------------------------
# task construction


def _resolve_dataset(
    dataset: str | Path | Sequence[Problem] | None, config: ExperimentConfig
) -> list[Problem]:
    if dataset is None:
        dataset = config.dataset
    if dataset is None:
        raise ConfigError("no dataset given (flag or config field)")
    if isinstance(dataset, (str, Path)):
        return load_dataset(dataset)
    return list(dataset)


def select_instances(
    problems: Sequence[Problem], config: ExperimentConfig
) -> list[tuple[int, Problem]]:
    """Dataset indices and problems after group and per-group-limit filters."""
    taken: dict[int | None, int] = {}
    out: list[tuple[int, Problem]] = []
    for idx, problem in enumerate(problems):
        step = problem.min_plan_length
        if config.groups is not None and step not in config.groups:
            continue
        if config.limit is not None and taken.get(step, 0) >= config.limit:
            continue
        taken[step] = taken.get(step, 0) + 1
        out.append((idx, problem))
    return out


def _demonstration_pool(
    problem: Problem, problems: Sequence[Problem], index: int | None, cap: int = 16
) -> tuple[Demonstration, ...]:
    demos: list[Demonstration] = []
    for j, cand in enumerate(problems):
        if j == index or cand.min_plan_length is None:
            continue
        demos.append(Demonstration(cand, PlanOracle(cand).optimal_plan()))
        if len(demos) >= cap:
            break
    return tuple(demos)


def build_task(
    problem: Problem,
    config: ExperimentConfig,
    problems: Sequence[Problem] = (),
    index: int | None = None,
) -> tuple[PolicySuite, PlanOracle | None, PolicyContext]:
    """Policies, optional verifier oracle, and the root context for one instance."""
    if config.expert.kind == "synthetic":
        oracle = PlanOracle(problem)
        # Role-mixed fallback seeds: the roles must disagree on their hashed
        # preferences or the contrastive factor sees two copies of one model.
        draft_cfg = None if config.draft is None else config.draft.policy_config(config.seed * 4 + 3)
        suite = PolicySuite.synthetic(
            problem,
            config.expert.policy_config(config.seed * 4 + 1),
            config.amateur.policy_config(config.seed * 4 + 2),
            draft_cfg,
            oracle,
        )
        # The synthetic backend is bound to the problem, so no prompt is needed.
        verifier = oracle if config.verifier_analytics else None
        return suite, verifier, PolicyContext()

    registry = TokenRegistry()

    def make(spec: BackendSpec) -> RemotePolicy:
        endpoint = RemoteEndpointConfig.from_env(url=spec.url, model=spec.model)
        return RemotePolicy(endpoint, registry)

    expert = make(config.expert)
    amateur = make(config.amateur)
    draft = amateur if config.draft is None else make(config.draft)
    suite = PolicySuite(expert, amateur, draft)
    pool = _demonstration_pool(problem, problems, index)
    template = PromptTemplate(config.prompt_difficulty, config.prompt_shots, pool)
    tokens = expert.encode(render_prompt(problem, (), template))
    verifier = PlanOracle(problem) if config.verifier_analytics else None
    return suite, verifier, PolicyContext(tokens, len(tokens))


# ---------------------------------------------------------------------------
# solving


def _instance_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, _SEED_TAG_INSTANCE, index]).generate_state(1)[0])


def solve_instance(
    problem: Problem,
    config: ExperimentConfig,
    stats_dict: dict | None = None,
    index: int = 0,
    problems: Sequence[Problem] = (),
) -> tuple[dict, SearchResult]:
    """Run one search and re-verify its plan against the environment."""
    suite, verifier, root_ctx = build_task(problem, config, problems, index)
    stats = None if stats_dict is None else RewardFactorStats.from_dict(stats_dict)
    reward_model = RewardModel(
        suite,
        config.reward,
        config.mask,
        stats,
        rng=np.random.default_rng([config.seed, _SEED_TAG_RANDOM_REWARD, index]),
    )
    search = dataclasses.replace(config.search, seed=_instance_seed(config.seed, index))
    engine = SearchEngine(problem, suite, reward_model, search, oracle=verifier, root_ctx=root_ctx)
    result = engine.run()
    decode = result.decode_stats.to_dict()
    decode.pop("wall_ns")  # wall clock stays out of reproducible outputs
    record = {
        "index": index,
        "steps": problem.min_plan_length,
        "blocks": len(problem.blocks),
        "solved": bool(result.solved),
        "plan_length": len(result.plan),
        "best_value": _finite(result.best_value),
        "iterations": result.iterations,
        "expansions": result.expansions,
        "nodes_created": result.nodes_created,
        "rollout_generations": result.rollout_generations,
        "decode": decode,
        "edges": [
            {
                "reward": _finite(e.reward),
                "delta_progress": e.delta_progress,
                "values": {k: _finite(v) for k, v in sorted(e.values.items())},
            }
            for e in result.edges
        ],
    }
    return record, result


def _solve_worker(payload: str) -> dict:
    data = json.loads(payload)
    problem = problem_from_dict(data["problem"])
    config = ExperimentConfig.from_dict(data["config"])
    record, _ = solve_instance(problem, config, data["stats"], data["index"])
    return record


def run_instances(
    selected: Sequence[tuple[int, Problem]],
    config: ExperimentConfig,
    stats_dict: dict | None,
    problems: Sequence[Problem] = (),
) -> list[dict]:
    """Solve the selected instances, in dataset order, optionally in parallel.

    Remote-backed runs stay sequential; their concurrency belongs to the
    endpoint's in-flight gate, not to local processes.
    """
    if config.jobs > 1 and config.expert.kind == "synthetic":
        config_dict = config.to_dict()
        payloads = [
            json.dumps(
                {
                    "problem": problem_to_dict(problem),
                    "config": config_dict,
                    "stats": stats_dict,
                    "index": idx,
                }
            )
            for idx, problem in selected
        ]
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            return list(pool.map(_solve_worker, payloads))
    return [
        solve_instance(problem, config, stats_dict, idx, problems)[0]
        for idx, problem in selected
    ]


# ---------------------------------------------------------------------------
# prior phase


def run_prior_phase(
    problems: Sequence[Problem], config: ExperimentConfig
) -> tuple[RewardFactorStats, dict]:
    """Fit factor region statistics from sampled whole solutions."""
    selected = select_instances(problems, config)
    if not selected:
        raise InsufficientSamples("no instances selected for the prior phase")
    m = min(config.reward.prior_problems, len(selected))
    budget = m * config.reward.prior_solutions
    if budget < 30:
        raise InsufficientSamples(
            f"prior budget of {m} problems x {config.reward.prior_solutions} solutions "
            f"= {budget} < 30"
        )
    positions = sorted({int(round(x)) for x in np.linspace(0, len(selected) - 1, m)})
    setups = []
    chosen = []
    for pos in positions:
        idx, problem = selected[pos]
        suite, _, root_ctx = build_task(problem, config, problems, idx)
        setups.append((suite, root_ctx))
        chosen.append(idx)
    stats, meta = collect_prior_stats(setups, config.reward, seed=config.seed)
    meta["instance_indices"] = chosen
    return stats, meta


# ---------------------------------------------------------------------------
# benchmark


def _summarize(records: Sequence[dict]) -> tuple[float, dict]:
    per_group: dict[str, dict] = {}
    for r in records:
        g = per_group.setdefault(str(r["steps"]), {"count": 0, "solved": 0})
        g["count"] += 1
        g["solved"] += int(r["solved"])
    for g in per_group.values():
        g["accuracy"] = g["solved"] / g["count"]
    accuracy = sum(r["solved"] for r in records) / len(records) if records else 0.0
    return accuracy, dict(sorted(per_group.items(), key=lambda kv: int(kv[0])))


_CSV_FIELDS = (
    "index",
    "steps",
    "blocks",
    "solved",
    "plan_length",
    "iterations",
    "expansions",
    "nodes_created",
    "rollout_generations",
    "drafted",
    "accepted",
    "resampled",
    "degenerate",
    "emitted",
)


def _csv_row(record: dict) -> dict:
    row = {k: record[k] for k in _CSV_FIELDS if k in record}
    row["solved"] = int(record["solved"])
    row.update(record["decode"])
    return row


def run_benchmark(
    dataset: str | Path | Sequence[Problem] | None,
    config: ExperimentConfig,
    out_dir: str | Path,
    stats: RewardFactorStats | None = None,
) -> dict:
    """Solve every selected instance and write results.json/results.csv/edges.json."""
    problems = _resolve_dataset(dataset, config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats_dict = None
    if needs_prior_stats(config.mask):
        if stats is None:
            stats, meta = run_prior_phase(problems, config)
            write_json(out / PRIOR_STATS_FILE, {"factors": stats.to_dict(), "meta": meta})
        stats_dict = stats.to_dict()
    selected = select_instances(problems, config)
    records = run_instances(selected, config, stats_dict, problems)
    accuracy, per_group = _summarize(records)
    slim_records = [{k: v for k, v in r.items() if k != "edges"} for r in records]
    results = {
        "config": config.to_dict(),
        "instances": slim_records,
        "accuracy": accuracy,
        "per_group": per_group,
    }
    write_json(out / "results.json", results)
    write_csv(out / "results.csv", _CSV_FIELDS, [_csv_row(r) for r in records])
    if config.verifier_analytics:
        edges = [
            {"index": r["index"], "steps": r["steps"], **e}
            for r in records
            for e in r["edges"]
        ]
        write_json(out / "edges.json", {"delta_sign": "successor_minus_predecessor", "edges": edges})
    return results


# ---------------------------------------------------------------------------
# ablation ladder


def ablation_rungs(config: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """Cumulative feature ladder from a random-reward baseline to the full stack.

    The last rung is exactly the incoming config with every feature enabled,
    so ladder results compose with benchmark results.
    """
    plain = dataclasses.replace(config.search, exploration=1.0, backprop="leaf")
    tuned = dataclasses.replace(plain, exploration=config.search.exploration)
    full = dataclasses.replace(config.search, backprop="path")
    norm = AblationMask(FACTORS, multi_rm=True)
    rungs = [
        ("random", AblationMask((), multi_rm=False, random_reward=True), plain),
        ("jsd", AblationMask(("jsd",), multi_rm=False), plain),
        ("jsd+ll", AblationMask(("jsd", "ll"), multi_rm=False), plain),
        ("jsd+ll+se", AblationMask(FACTORS, multi_rm=False), plain),
        ("region-norm", norm, plain),
        ("explore-tuned", norm, tuned),
        ("path-backprop", norm, full),
    ]
    return [
        (name, dataclasses.replace(config, mask=mask, search=search))
        for name, mask, search in rungs
    ]


def run_ablation(
    dataset: str | Path | Sequence[Problem] | None,
    config: ExperimentConfig,
    out_dir: str | Path,
) -> dict:
    """Run the cumulative ladder on one dataset and write ablation.json/csv."""
    problems = _resolve_dataset(dataset, config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats, meta = run_prior_phase(problems, config)
    stats_path = out / PRIOR_STATS_FILE
    write_json(stats_path, {"factors": stats.to_dict(), "meta": meta})
    # Reload from disk: every rung consumes the serialized artifact.
    stats_dict = json.loads(stats_path.read_text())["factors"]
    selected = select_instances(problems, config)
    rows = []
    for name, rung_config in ablation_rungs(config):
        rung_stats = stats_dict if needs_prior_stats(rung_config.mask) else None
        records = run_instances(selected, rung_config, rung_stats, problems)
        accuracy, per_group = _summarize(records)
        rows.append(
            {
                "name": name,
                "accuracy": accuracy,
                "per_group": per_group,
                "factors": list(rung_config.mask.factors),
                "multi_rm": rung_config.mask.multi_rm,
                "random_reward": rung_config.mask.random_reward,
                "exploration": rung_config.search.exploration,
                "backprop": rung_config.search.backprop,
            }
        )
    report = {"config": config.to_dict(), "rungs": rows}
    write_json(out / "ablation.json", report)
    write_csv(
        out / "ablation.csv",
        ("name", "accuracy", "factors", "multi_rm", "random_reward", "exploration", "backprop"),
        [
            {**{k: row[k] for k in ("name", "accuracy", "multi_rm", "random_reward", "exploration", "backprop")},
             "factors": "+".join(row["factors"]) or "none"}
            for row in rows
        ],
    )
    return report


# ---------------------------------------------------------------------------
# sweeps


SWEEP_PARAMETERS = ("exploration", "iterations", "weights")


def _sweep_config(config: ExperimentConfig, parameter: str, value: Any) -> ExperimentConfig:
    if parameter == "exploration":
        return dataclasses.replace(
            config, search=dataclasses.replace(config.search, exploration=float(value))
        )
    if parameter == "iterations":
        return dataclasses.replace(
            config, search=dataclasses.replace(config.search, max_iterations=int(value))
        )
    if parameter == "weights":
        weights = tuple(float(w) for w in value)
        return dataclasses.replace(
            config, reward=dataclasses.replace(config.reward, weights=weights)
        )
    raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, not {parameter!r}")


def run_sweep(
    dataset: str | Path | Sequence[Problem] | None,
    config: ExperimentConfig,
    out_dir: str | Path,
    parameter: str,
    values: Sequence[Any],
) -> dict:
    """Rerun the benchmark while varying one knob; write sweep.json/sweep.csv."""
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, not {parameter!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    if parameter == "weights" and not needs_prior_stats(config.mask):
        raise ConfigError("a weights sweep needs the region-normalized reward enabled")
    problems = _resolve_dataset(dataset, config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats_dict = None
    if needs_prior_stats(config.mask):
        stats, meta = run_prior_phase(problems, config)
        write_json(out / PRIOR_STATS_FILE, {"factors": stats.to_dict(), "meta": meta})
        stats_dict = stats.to_dict()
    selected = select_instances(problems, config)
    rows = []
    for value in values:
        point = _sweep_config(config, parameter, value)
        records = run_instances(selected, point, stats_dict, problems)
        accuracy, per_group = _summarize(records)
        rows.append(
            {
                "value": list(value) if parameter == "weights" else value,
                "accuracy": accuracy,
                "per_group": per_group,
            }
        )
    report: dict = {"config": config.to_dict(), "parameter": parameter, "rows": rows}
    if parameter == "weights" and len(rows) >= 4:
        design = np.array([[*row["value"], 1.0] for row in rows])
        target = np.array([row["accuracy"] for row in rows])
        coef, *_ = np.linalg.lstsq(design, target, rcond=None)
        fitted = design @ coef
        report["linear_fit"] = {
            "coefficients": {
                "jsd": float(coef[0]),
                "ll": float(coef[1]),
                "se": float(coef[2]),
                "intercept": float(coef[3]),
            },
            "residuals": [float(t - f) for t, f in zip(target, fitted)],
            "max_abs_residual": float(np.max(np.abs(target - fitted))),
        }
    write_json(out / "sweep.json", report)
    write_csv(
        out / "sweep.csv",
        ("parameter", "value", "accuracy"),
        [
            {
                "parameter": parameter,
                "value": "|".join(str(v) for v in row["value"])
                if parameter == "weights"
                else row["value"],
                "accuracy": row["accuracy"],
            }
            for row in rows
        ],
    )
    return report


# ---------------------------------------------------------------------------
# speed


def run_speed(
    dataset: str | Path | Sequence[Problem] | None,
    config: ExperimentConfig,
    out_dir: str | Path,
    baseline: str = "greedy",
) -> dict:
    """Time draft-verified decoding against a baseline sampler on equal instances.

    This is the one command whose outputs carry wall-clock values, so they are
    not byte-reproducible.  Runs are sequential to keep the timings honest.
    """
    if baseline not in ("greedy", "direct"):
        raise ConfigError("speed baseline must be 'greedy' or 'direct'")
    problems = _resolve_dataset(dataset, config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats_dict = None
    if needs_prior_stats(config.mask):
        stats, _ = run_prior_phase(problems, config)
        stats_dict = stats.to_dict()
    selected = select_instances(problems, config)
    modes = {
        "speculative": dataclasses.replace(
            config, jobs=1, search=dataclasses.replace(config.search, sampler="speculative")
        ),
        "baseline": dataclasses.replace(
            config, jobs=1, search=dataclasses.replace(config.search, sampler=baseline)
        ),
    }
    lines = []
    summary: dict[str, dict] = {}
    for mode, mode_config in modes.items():
        total = {"drafted": 0, "accepted": 0, "resampled": 0, "degenerate": 0, "emitted": 0, "wall_ns": 0}
        nodes = 0
        for idx, problem in selected:
            _, result = solve_instance(problem, mode_config, stats_dict, idx, problems)
            stats_line = result.decode_stats.to_dict()
            lines.append(json.dumps({"mode": mode, "index": idx, **stats_line}, sort_keys=True))
            for key in total:
                total[key] += stats_line[key]
            nodes += result.nodes_created
        wall_s = total["wall_ns"] / 1e9
        summary[mode] = {
            **total,
            "nodes": nodes,
            "tokens_per_second": total["emitted"] / wall_s if wall_s > 0 else None,
            "wall_ms_per_node": (total["wall_ns"] / 1e6 / nodes) if nodes else None,
            "acceptance_rate": (total["accepted"] / total["drafted"]) if total["drafted"] else None,
        }
    speedup = None
    spec_rate = summary["speculative"]["tokens_per_second"]
    base_rate = summary["baseline"]["tokens_per_second"]
    if spec_rate and base_rate:
        speedup = spec_rate / base_rate
    report = {
        "baseline_sampler": baseline,
        "modes": summary,
        "speedup_tokens_per_second": speedup,
        "instances": len(selected),
    }
    (out / "decode_stats.jsonl").write_text("\n".join(lines) + "\n" if lines else "")
    write_json(out / "speed.json", report)
    return report


# ---------------------------------------------------------------------------
# edge analysis


def analyze_edges(
    edges: str | Path | Sequence[dict],
    bins: int = 20,
    permutations: int = 2000,
    seed: int = 0,
    predecessor_minus_successor: bool = False,
) -> dict:
    """Correlate edge rewards with verifier progress deltas.

    Edges whose reward was non-finite (serialized as null) are dropped in
    pairs.  The sign flag reports deltas as predecessor minus successor for
    readers who prefer regression-style framing.
    """
    if isinstance(edges, (str, Path)):
        edges = json.loads(Path(edges).read_text())["edges"]
    rewards = []
    deltas = []
    for e in edges:
        if e["reward"] is None:
            continue
        rewards.append(float(e["reward"]))
        deltas.append(float(e["delta_progress"]))
    sign = -1.0 if predecessor_minus_successor else 1.0
    report = interpretability_report(
        rewards, [sign * d for d in deltas], bins=bins, permutations=permutations, seed=seed
    )
    report["delta_sign"] = (
        "predecessor_minus_successor" if predecessor_minus_successor else "successor_minus_predecessor"
    )
    return report
