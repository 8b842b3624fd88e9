"""Shared fixtures: hand-built problems, scripted word-level policies, suites.

The scripted policy speaks the same word grammar as the synthetic backend but
follows an explicit per-position distribution table, which makes decoding and
reward behavior checkable against hand arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pytest

from scmcts import (
    FACTORS,
    AblationMask,
    CompositeRewardConfig,
    PolicyContext,
    PolicySuite,
    Problem,
    RewardModel,
    SyntheticPolicyConfig,
    Vocabulary,
    make_state,
)

LINE_BREAK = "\n"


# ---------------------------------------------------------------------------
# scripted policies


def word_vocabulary(words: Sequence[str]) -> Vocabulary:
    return Vocabulary(tuple(dict.fromkeys(tuple(words) + (LINE_BREAK, "["))))


@dataclass
class ScriptedPolicy:
    """Word-level policy with one fixed distribution per answer position.

    Position counts from the start of the context, so tests normally begin
    from an empty `PolicyContext`.  Rows past the table reuse the last row
    (or cycle when `loop` is set).
    """

    vocab: Vocabulary
    rows: tuple[np.ndarray, ...]
    loop: bool = False

    def __post_init__(self) -> None:
        rows = []
        for row in self.rows:
            row = np.asarray(row, dtype=float)
            if row.shape != (len(self.vocab),):
                raise ValueError("row length must match the vocabulary")
            rows.append(row / row.sum())
        self.rows = tuple(rows)

    def _row(self, position: int) -> np.ndarray:
        if self.loop:
            return self.rows[position % len(self.rows)]
        return self.rows[min(position, len(self.rows) - 1)]

    def encode(self, text: str) -> tuple[int, ...]:
        ids: list[int] = []
        for i, line in enumerate(text.split("\n")):
            if i:
                ids.append(self.vocab.index(LINE_BREAK))
            ids.extend(self.vocab.index(w) for w in line.split())
        return tuple(ids)

    def decode(self, tokens: Sequence[int]) -> str:
        parts: list[str] = []
        at_start = True
        for tok in tokens:
            text = self.vocab.tokens[tok]
            if text == LINE_BREAK:
                parts.append("\n")
                at_start = True
                continue
            if not at_start:
                parts.append(" ")
            parts.append(text)
            at_start = False
        return "".join(parts)

    def token_id(self, token: str) -> int:
        return self.vocab.index(token)

    def next_distribution(self, ctx: PolicyContext):
        from scmcts import TokenDistribution

        return TokenDistribution(self.vocab, self._row(len(ctx.tokens)))

    def score_sequence(self, ctx: PolicyContext) -> list[float]:
        out = []
        for pos in range(ctx.prefix_len, len(ctx.tokens)):
            p = float(self._row(pos)[ctx.tokens[pos]])
            out.append(np.log(p) if p > 0 else float("-inf"))
        return out


def one_hot(vocab: Vocabulary, token: str) -> np.ndarray:
    row = np.zeros(len(vocab))
    row[vocab.index(token)] = 1.0
    return row


def line_policy(vocab: Vocabulary, text: str, then: str = LINE_BREAK) -> ScriptedPolicy:
    """Policy that deterministically spells `text` word by word, then `then`."""
    rows = [one_hot(vocab, w) for w in text.split()] + [one_hot(vocab, then)]
    return ScriptedPolicy(vocab, tuple(rows))


@dataclass
class ConstantPolicy:
    """Context-free policy: the same distribution at every position."""

    vocab: Vocabulary
    probs: np.ndarray
    calls: int = field(default=0)

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float)
        self.probs = p / p.sum()

    def encode(self, text: str) -> tuple[int, ...]:
        return tuple(self.vocab.index(w) for w in text.split())

    def decode(self, tokens: Sequence[int]) -> str:
        return " ".join(self.vocab.tokens[t] for t in tokens)

    def token_id(self, token: str) -> int:
        return self.vocab.index(token)

    def next_distribution(self, ctx: PolicyContext):
        from scmcts import TokenDistribution

        self.calls += 1
        return TokenDistribution(self.vocab, self.probs)

    def score_sequence(self, ctx: PolicyContext) -> list[float]:
        with np.errstate(divide="ignore"):
            logs = np.log(self.probs)
        return [float(logs[t]) for t in ctx.answer_span()]


# ---------------------------------------------------------------------------
# problems


@pytest.fixture
def two_step_problem() -> Problem:
    """Everything on the table; stacking red on blue takes two moves."""
    return Problem(
        blocks=("red", "blue", "orange"),
        initial=make_state(table=["red", "blue", "orange"]),
        goal=frozenset({("red", "blue")}),
        min_plan_length=2,
    )


@pytest.fixture
def swap_problem() -> Problem:
    """Blue sits on orange; the goal wants orange on blue: a four-move swap."""
    return Problem(
        blocks=("blue", "orange"),
        initial=make_state(on=[("blue", "orange")], table=["orange"]),
        goal=frozenset({("orange", "blue")}),
        min_plan_length=4,
    )


@pytest.fixture
def solved_problem() -> Problem:
    """The initial state already satisfies the goal."""
    return Problem(
        blocks=("red", "blue"),
        initial=make_state(on=[("red", "blue")], table=["blue"]),
        goal=frozenset({("red", "blue")}),
        min_plan_length=0,
    )


# ---------------------------------------------------------------------------
# suites and reward models


def suite_for(
    problem: Problem,
    expert_fidelity: float = 0.7,
    amateur_fidelity: float = 0.2,
    seed: int = 0,
    temperature: float = 1.0,
) -> PolicySuite:
    """Synthetic suite with distinct per-role seeds derived from `seed`."""
    return PolicySuite.synthetic(
        problem,
        SyntheticPolicyConfig(temperature, expert_fidelity, expert_fidelity, seed * 4 + 1),
        SyntheticPolicyConfig(temperature, amateur_fidelity, amateur_fidelity, seed * 4 + 2),
    )


def raw_sum_model(suite: PolicySuite) -> RewardModel:
    """Composite reward as the plain unnormalized factor sum (no prior phase)."""
    return RewardModel(suite, CompositeRewardConfig(), AblationMask(FACTORS, multi_rm=False))


def random_model(suite: PolicySuite, seed: int = 0) -> RewardModel:
    return RewardModel(
        suite,
        CompositeRewardConfig(),
        AblationMask((), multi_rm=False, random_reward=True),
        rng=np.random.default_rng(seed),
    )
