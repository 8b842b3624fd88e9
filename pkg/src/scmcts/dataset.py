"""Solvable instance generation grouped by exact optimal plan length, plus dataset I/O.

Instances are drawn by sampling a random goal configuration, building the exact
distance map of its component, and picking a hand-empty state at the requested
distance.  The recorded `min_plan_length` is therefore BFS-verified by
construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .blocksworld import (
    BlocksState,
    Problem,
    make_state,
    problem_from_dict,
    problem_to_dict,
)
from .errors import GenerationFailed
from .oracle import PlanOracle

BLOCK_NAME_POOL = ("red", "blue", "orange", "yellow", "white", "magenta", "cyan", "green")


def random_configuration(rng: np.random.Generator, blocks: tuple[str, ...]) -> BlocksState:
    """Random hand-empty stacking of the given blocks."""
    order = list(blocks)
    rng.shuffle(order)
    stacks: list[list[str]] = []
    for block in order:
        slot = int(rng.integers(len(stacks) + 1))
        if slot == len(stacks):
            stacks.append([block])
        else:
            stacks[slot].append(block)
    on = [(s[i + 1], s[i]) for s in stacks for i in range(len(s) - 1)]
    return make_state(on=on, table=[s[0] for s in stacks])


def generate_problem(
    rng: np.random.Generator,
    blocks: tuple[str, ...],
    target_length: int,
    difficulty: str = "easy",
    keep_pair_prob: float = 0.75,
    max_tries: int = 64,
) -> Problem:
    """One instance with an exactly `target_length`-step optimal plan."""
    if target_length < 1:
        raise ValueError("target_length must be >= 1")
    if target_length % 2:
        # Goal pairs are only ever created by stack actions, which leave the
        # hand empty, so a hand-empty instance always has an even optimal
        # length; searching for an odd one would burn every try.
        raise GenerationFailed(f"no {target_length}-step instance exists: optimal lengths are even")
    for _ in range(max_tries):
        goal_cfg = random_configuration(rng, blocks)
        pairs = sorted(goal_cfg.on)
        if not pairs:
            continue
        goal = [p for p in pairs if rng.random() < keep_pair_prob]
        if not goal:
            goal = [pairs[int(rng.integers(len(pairs)))]]
        seed_problem = Problem(
            blocks=blocks,
            initial=goal_cfg,
            goal=frozenset(goal),
            difficulty=difficulty,
        )
        oracle = PlanOracle(seed_problem)
        bucket = [s for s in oracle.states_at(target_length) if s.hand_empty]
        if not bucket:
            continue
        initial = bucket[int(rng.integers(len(bucket)))]
        return Problem(
            blocks=blocks,
            initial=initial,
            goal=frozenset(goal),
            min_plan_length=target_length,
            difficulty=difficulty,
        )
    raise GenerationFailed(
        f"no {target_length}-step instance over {len(blocks)} blocks in {max_tries} tries"
    )


@dataclass(frozen=True)
class DatasetSpec:
    """Counts of instances per optimal-plan-length group."""

    groups: dict[int, int] = field(default_factory=lambda: {2: 100, 4: 100, 6: 100, 8: 50, 10: 50, 12: 50})
    difficulty: str = "easy"
    blocks_min: int = 4
    blocks_max: int = 6

    def __post_init__(self) -> None:
        for step, count in self.groups.items():
            if step < 1 or count < 0:
                raise ValueError(f"bad group entry {step}: {count}")
        if not 1 <= self.blocks_min <= self.blocks_max <= len(BLOCK_NAME_POOL):
            raise ValueError("bad blocks range")


def _blocks_for(spec: DatasetSpec, step: int, rng: np.random.Generator) -> tuple[str, ...]:
    # Long plans need room to shuffle blocks around.
    low = max(spec.blocks_min, 5) if step >= 8 else spec.blocks_min
    low = min(low, spec.blocks_max)
    n = int(rng.integers(low, spec.blocks_max + 1))
    return BLOCK_NAME_POOL[:n]


def generate_dataset(spec: DatasetSpec, seed: int) -> list[Problem]:
    problems: list[Problem] = []
    for step in sorted(spec.groups):
        for i in range(spec.groups[step]):
            rng = np.random.default_rng([seed, 11, step, i])
            problems.append(
                generate_problem(rng, _blocks_for(spec, step, rng), step, spec.difficulty)
            )
    return problems


# ------------------------------------------------------------------ disk layout


def save_dataset(problems: list[Problem], directory: str | Path, seed: int, pool_size: int = 10) -> None:
    """problems/NNNN.json plus a manifest with group and demo-pool membership."""
    directory = Path(directory)
    (directory / "problems").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, problem in enumerate(problems):
        name = f"problems/{i:04d}.json"
        (directory / name).write_text(
            json.dumps(problem_to_dict(problem), indent=2, sort_keys=True) + "\n"
        )
        entries.append({"file": name, "steps": problem.min_plan_length})
    by_step: dict[int, list[int]] = {}
    for i, problem in enumerate(problems):
        by_step.setdefault(problem.min_plan_length, []).append(i)
    demo_pools = {}
    for step, ids in sorted(by_step.items()):
        rng = np.random.default_rng([seed, 12, step])
        chosen = rng.permutation(len(ids))[:pool_size]
        demo_pools[str(step)] = sorted(ids[j] for j in chosen)
    manifest = {
        "count": len(problems),
        "demo_pools": demo_pools,
        "instances": entries,
        "seed": seed,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_dataset(directory: str | Path) -> list[Problem]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    return [
        problem_from_dict(json.loads((directory / e["file"]).read_text()))
        for e in manifest["instances"]
    ]
