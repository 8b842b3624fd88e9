"""Few-shot completion prompts for Blocksworld instances.

The page layout (instruction text, [STATEMENT]/[PLAN] markers, state and goal
phrasing) lives in text files under ``templates/`` and is rendered verbatim.
Easy mode draws demonstrations from a pool of instances with the same optimal
plan length as the query; hard mode draws from one global pool.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .blocksworld import BlockAction, BlocksState, Problem
from .errors import MissingDemonstrations

DEFAULT_SHOTS = 4


def _template_text(name: str) -> str:
    return (resources.files("scmcts") / "templates" / name).read_text()


def domain_intro() -> str:
    return _template_text("domain_intro.txt")


@dataclass(frozen=True)
class Demonstration:
    problem: Problem
    plan: tuple[BlockAction, ...]


@dataclass(frozen=True)
class PromptTemplate:
    difficulty: str = "easy"
    shots: int = DEFAULT_SHOTS
    pool: tuple[Demonstration, ...] = ()

    def __post_init__(self) -> None:
        if self.difficulty not in ("easy", "hard"):
            raise ValueError(f"unknown difficulty {self.difficulty!r}")
        if self.shots < 0:
            raise ValueError("shots must be >= 0")


def _join_clauses(clauses: list[str]) -> str:
    if len(clauses) == 1:
        return clauses[0]
    return ", ".join(clauses[:-1]) + " and " + clauses[-1]


def describe_state(problem: Problem, state: BlocksState) -> str:
    """Clause list in the fixed order: clear facts, hand, stacks, table facts."""
    clauses = [f"the {b} block is clear" for b in problem.blocks if b in state.clear]
    if state.hand_empty:
        clauses.append("the hand is empty")
    else:
        clauses.append(f"the hand is holding the {state.holding} block")
    on = dict(state.on)
    clauses += [
        f"the {b} block is on top of the {on[b]} block" for b in problem.blocks if b in on
    ]
    clauses += [f"the {b} block is on the table" for b in problem.blocks if b in state.on_table]
    return _join_clauses(clauses)


def describe_goal(problem: Problem) -> str:
    on = dict(problem.goal)
    clauses = [
        f"the {b} block is on top of the {on[b]} block" for b in problem.blocks if b in on
    ]
    return _join_clauses(clauses)


def _statement(problem: Problem) -> str:
    return (
        "[STATEMENT]\n"
        f"As initial conditions I have that, {describe_state(problem, problem.initial)}.\n"
        f"My goal is to have that {describe_goal(problem)}.\n"
        "My plan is as follows:\n"
        "[End Of STATEMENT]"
    )


def _demonstration_block(demo: Demonstration) -> str:
    lines = "\n".join(a.text() for a in demo.plan)
    return f"{_statement(demo.problem)}\n\n[PLAN]\n{lines}\n[PLAN END]\n\n"


def _select_demos(
    problem: Problem,
    template: PromptTemplate,
    rng: np.random.Generator | None,
) -> list[Demonstration]:
    if template.difficulty == "easy":
        pool = [
            d for d in template.pool if d.problem.min_plan_length == problem.min_plan_length
        ]
    else:
        pool = list(template.pool)
    if len(pool) < template.shots:
        raise MissingDemonstrations(
            f"{template.difficulty} pool holds {len(pool)} usable cases, need {template.shots}"
        )
    if rng is None:
        return pool[: template.shots]
    chosen = rng.permutation(len(pool))[: template.shots]
    return [pool[i] for i in sorted(chosen)]


def render_prompt(
    problem: Problem,
    history: tuple[BlockAction, ...] = (),
    template: PromptTemplate = PromptTemplate(),
    rng: np.random.Generator | None = None,
) -> str:
    """Full completion prompt; `history` continues the open [PLAN] block."""
    demos = _select_demos(problem, template, rng)
    page = _template_text(f"{template.difficulty}_prompt.txt")
    # The query statement is part of the page layout, so only two slots remain.
    text = page.format(
        demonstrations="".join(_demonstration_block(d) for d in demos),
        initial=describe_state(problem, problem.initial),
        goal=describe_goal(problem),
    )
    for action in history:
        text += action.text() + "\n"
    return text
