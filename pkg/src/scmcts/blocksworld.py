"""Deterministic Blocksworld: states, actions, transitions, goal tests, JSON I/O.

A state places every block exactly once: on another block, on the table, or in
the hand.  The four classic actions move single blocks and are all reversible,
so the state graph is undirected.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .errors import IllegalAction, MalformedAction


class ActionKind(str, Enum):
    PICK_UP = "pick-up"
    PUT_DOWN = "put-down"
    STACK = "stack"
    UNSTACK = "unstack"


@dataclass(frozen=True, order=True)
class BlockAction:
    """One move.  `target` is the support block and only STACK/UNSTACK have it."""

    kind: ActionKind
    subject: str
    target: str | None = None

    def __post_init__(self) -> None:
        needs_target = self.kind in (ActionKind.STACK, ActionKind.UNSTACK)
        if needs_target != (self.target is not None):
            raise ValueError(f"{self.kind.value} takes {'a' if needs_target else 'no'} target")

    def text(self) -> str:
        if self.kind is ActionKind.PICK_UP:
            return f"pick up the {self.subject} block"
        if self.kind is ActionKind.PUT_DOWN:
            return f"put down the {self.subject} block"
        if self.kind is ActionKind.STACK:
            return f"stack the {self.subject} block on top of the {self.target} block"
        return f"unstack the {self.subject} block from on top of the {self.target} block"


_ACTION_PATTERNS = (
    (ActionKind.PICK_UP, re.compile(r"^pick up the (\S+) block$")),
    (ActionKind.PUT_DOWN, re.compile(r"^put down the (\S+) block$")),
    (ActionKind.STACK, re.compile(r"^stack the (\S+) block on top of the (\S+) block$")),
    (ActionKind.UNSTACK, re.compile(r"^unstack the (\S+) block from on top of the (\S+) block$")),
)


def parse_action(line: str) -> BlockAction:
    """Parse one natural-language plan line; raises MalformedAction otherwise."""
    text = " ".join(line.strip().split())
    for kind, pattern in _ACTION_PATTERNS:
        m = pattern.match(text)
        if m:
            groups = m.groups()
            if len(groups) == 2 and groups[0] == groups[1]:
                raise MalformedAction(f"block stacked on itself: {line!r}")
            return BlockAction(kind, *groups)
    raise MalformedAction(f"not an action line: {line!r}")


@dataclass(frozen=True)
class BlocksState:
    """Immutable world state.  `on` holds (top, support) pairs."""

    on: frozenset[tuple[str, str]]
    on_table: frozenset[str]
    clear: frozenset[str]
    holding: str | None = None

    @property
    def hand_empty(self) -> bool:
        return self.holding is None

    def support_of(self, block: str) -> str | None:
        for top, below in self.on:
            if top == block:
                return below
        return None

    def validate(self, blocks: Iterable[str] | None = None) -> None:
        tops = [t for t, _ in self.on]
        if len(set(tops)) != len(tops):
            raise ValueError("a block rests on two supports")
        belows = [b for _, b in self.on]
        if len(set(belows)) != len(belows):
            raise ValueError("two blocks rest on the same support")
        placements = tops + list(self.on_table) + ([self.holding] if self.holding else [])
        if len(set(placements)) != len(placements):
            raise ValueError("a block is placed more than once")
        support = dict(self.on)
        for top in tops:
            seen = {top}
            cur = top
            while cur in support:
                cur = support[cur]
                if cur in seen:
                    raise ValueError("cyclic stack")
                seen.add(cur)
            if cur not in self.on_table:
                raise ValueError(f"stack under {top!r} does not reach the table")
        expected_clear = (set(tops) | set(self.on_table)) - set(belows)
        if set(self.clear) != expected_clear:
            raise ValueError("clear set is inconsistent with placements")
        if blocks is not None and set(placements) != set(blocks):
            raise ValueError("state does not place exactly the declared blocks")

    def __post_init__(self) -> None:
        self.validate()


def make_state(
    on: Iterable[tuple[str, str]] = (),
    table: Iterable[str] = (),
    holding: str | None = None,
) -> BlocksState:
    """Build a state from placements, deriving the clear set."""
    on = frozenset(tuple(p) for p in on)
    table = frozenset(table)
    belows = {b for _, b in on}
    clear = (frozenset(t for t, _ in on) | table) - belows
    return BlocksState(on=on, on_table=table, clear=clear, holding=holding)


def legal_actions(state: BlocksState) -> list[BlockAction]:
    """All actions whose preconditions hold, in a deterministic order."""
    acts: list[BlockAction] = []
    if state.hand_empty:
        for b in sorted(state.clear):
            if b in state.on_table:
                acts.append(BlockAction(ActionKind.PICK_UP, b))
            else:
                acts.append(BlockAction(ActionKind.UNSTACK, b, state.support_of(b)))
    else:
        held = state.holding
        acts.append(BlockAction(ActionKind.PUT_DOWN, held))
        for b in sorted(state.clear):
            acts.append(BlockAction(ActionKind.STACK, held, b))
    return acts


def apply(state: BlocksState, action: BlockAction) -> BlocksState:
    """Successor state; raises IllegalAction when a precondition fails."""
    kind, x, y = action.kind, action.subject, action.target
    if kind is ActionKind.PICK_UP:
        if not state.hand_empty:
            raise IllegalAction(f"hand not empty for {action.text()!r}")
        if x not in state.on_table or x not in state.clear:
            raise IllegalAction(f"{x!r} is not a clear table block")
        return BlocksState(
            on=state.on,
            on_table=state.on_table - {x},
            clear=state.clear - {x},
            holding=x,
        )
    if kind is ActionKind.PUT_DOWN:
        if state.holding != x:
            raise IllegalAction(f"not holding {x!r}")
        return BlocksState(
            on=state.on,
            on_table=state.on_table | {x},
            clear=state.clear | {x},
            holding=None,
        )
    if kind is ActionKind.STACK:
        if state.holding != x:
            raise IllegalAction(f"not holding {x!r}")
        if y not in state.clear:
            raise IllegalAction(f"{y!r} is not clear")
        return BlocksState(
            on=state.on | {(x, y)},
            on_table=state.on_table,
            clear=(state.clear - {y}) | {x},
            holding=None,
        )
    # UNSTACK
    if not state.hand_empty:
        raise IllegalAction(f"hand not empty for {action.text()!r}")
    if (x, y) not in state.on:
        raise IllegalAction(f"{x!r} is not on {y!r}")
    if x not in state.clear:
        raise IllegalAction(f"{x!r} is not clear")
    return BlocksState(
        on=state.on - {(x, y)},
        on_table=state.on_table,
        clear=(state.clear - {x}) | {y},
        holding=x,
    )


@dataclass(frozen=True)
class Problem:
    """A planning instance: blocks, initial state, goal `on` pairs."""

    blocks: tuple[str, ...]
    initial: BlocksState
    goal: frozenset[tuple[str, str]]
    min_plan_length: int | None = None
    difficulty: str = "easy"

    def __post_init__(self) -> None:
        if len(set(self.blocks)) != len(self.blocks):
            raise ValueError("duplicate block names")
        self.initial.validate(self.blocks)
        for top, below in self.goal:
            if top not in self.blocks or below not in self.blocks:
                raise ValueError(f"goal references undeclared block: ({top}, {below})")
            if top == below:
                raise ValueError("goal places a block on itself")
        if self.min_plan_length is not None and self.min_plan_length < 0:
            raise ValueError("min_plan_length must be >= 0")
        if self.difficulty not in ("easy", "hard"):
            raise ValueError(f"unknown difficulty {self.difficulty!r}")


def is_goal(state: BlocksState, problem: Problem) -> bool:
    return problem.goal <= state.on


# ------------------------------------------------------------------ JSON I/O


def state_to_dict(state: BlocksState) -> dict:
    d = {
        "on": [list(p) for p in sorted(state.on)],
        "table": sorted(state.on_table),
        "clear": sorted(state.clear),
        "hand_empty": state.hand_empty,
    }
    if state.holding is not None:
        d["holding"] = state.holding
    return d


def state_from_dict(d: Mapping) -> BlocksState:
    holding = d.get("holding")
    if bool(d["hand_empty"]) != (holding is None):
        raise ValueError("hand_empty contradicts holding")
    state = make_state(
        on=(tuple(p) for p in d["on"]),
        table=d["table"],
        holding=holding,
    )
    if set(d["clear"]) != set(state.clear):
        raise ValueError("declared clear set is inconsistent")
    return state


def problem_to_dict(problem: Problem) -> dict:
    d = {
        "blocks": list(problem.blocks),
        "init": state_to_dict(problem.initial),
        "goal": {"on": [list(p) for p in sorted(problem.goal)]},
        "difficulty": problem.difficulty,
    }
    if problem.min_plan_length is not None:
        d["min_plan_length"] = problem.min_plan_length
    return d


def problem_from_dict(d: Mapping) -> Problem:
    return Problem(
        blocks=tuple(d["blocks"]),
        initial=state_from_dict(d["init"]),
        goal=frozenset(tuple(p) for p in d["goal"]["on"]),
        min_plan_length=d.get("min_plan_length"),
        difficulty=d.get("difficulty", "easy"),
    )


def save_problem(problem: Problem, path: str | Path) -> None:
    Path(path).write_text(json.dumps(problem_to_dict(problem), indent=2, sort_keys=True) + "\n")


def load_problem(path: str | Path) -> Problem:
    return problem_from_dict(json.loads(Path(path).read_text()))
