"""Sampling strategies over policy handles.

Three interchangeable samplers produce the next chunk of tokens: greedy
(argmax), direct (one ancestral sample), and speculative (draft tokens from a
cheap model, verified by the target so the output distribution is exactly the
target's).  `generate_action` wraps any of them into the one-line-at-a-time
loop the search tree uses.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .blocksworld import BlockAction, parse_action
from .errors import MalformedAction
from .policy import PolicyContext, PolicyHandle, TokenDistribution

DEFAULT_DRAFT_LEN = 4
DEFAULT_MAX_NEW_TOKENS = 200


@dataclass
class DecodeStats:
    """Counters accumulated across decode steps."""

    drafted: int = 0
    accepted: int = 0
    resampled: int = 0
    degenerate: int = 0
    emitted: int = 0
    wall_ns: int = 0

    def merge(self, other: "DecodeStats") -> None:
        self.drafted += other.drafted
        self.accepted += other.accepted
        self.resampled += other.resampled
        self.degenerate += other.degenerate
        self.emitted += other.emitted
        self.wall_ns += other.wall_ns

    def acceptance_rate(self) -> float:
        return self.accepted / self.drafted if self.drafted else 0.0

    def to_dict(self) -> dict[str, int]:
        return {
            "drafted": self.drafted,
            "accepted": self.accepted,
            "resampled": self.resampled,
            "degenerate": self.degenerate,
            "emitted": self.emitted,
            "wall_ns": self.wall_ns,
        }


def align_distributions(
    p: TokenDistribution, q: TokenDistribution
) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Express two distributions over one shared token-text axis.

    Same-vocabulary inputs pass through untouched; otherwise both are projected
    onto the sorted union of their token texts with zeros for absent entries
    (an approximation when the inputs are truncated top-k slices).
    """
    if p.vocab is q.vocab or p.vocab.tokens == q.vocab.tokens:
        return p.probs, q.probs, p.vocab.tokens
    union = tuple(sorted(set(p.vocab.tokens) | set(q.vocab.tokens)))
    pv = np.array([p.prob_of(t) for t in union])
    qv = np.array([q.prob_of(t) for t in union])
    return pv, qv, union


def _sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """One draw from a probability vector without materializing rng.choice state."""
    edges = np.cumsum(probs)
    r = rng.random() * edges[-1]
    return int(min(np.searchsorted(edges, r, side="right"), len(probs) - 1))


def speculative_step(
    target: PolicyHandle,
    draft: PolicyHandle,
    ctx: PolicyContext,
    draft_len: int = DEFAULT_DRAFT_LEN,
    rng: np.random.Generator | None = None,
) -> tuple[tuple[int, ...], DecodeStats]:
    """Emit up to draft_len + 1 tokens distributed exactly as the target.

    The draft proposes tokens one at a time; each is kept outright when the
    target assigns it at least the draft's probability, otherwise kept with
    probability target/draft (the uniform variate is only drawn in that
    branch).  The first rejected position is replaced by a draw from the
    normalized positive part of target minus draft; a fully accepted run earns
    one bonus token straight from the target.
    """
    if rng is None:
        rng = np.random.default_rng()
    if draft_len < 1:
        raise ValueError("draft_len must be >= 1")
    t0 = time.perf_counter_ns()
    stats = DecodeStats()
    out: list[int] = []
    rejected = False
    cur = ctx
    for _ in range(draft_len):
        q_dist = draft.next_distribution(cur)
        idx = _sample_index(q_dist.probs, rng)
        text = q_dist.vocab.tokens[idx]
        q_x = float(q_dist.probs[idx])
        stats.drafted += 1
        p_dist = target.next_distribution(cur)
        p_x = p_dist.prob_of(text)
        if q_x <= p_x or rng.random() < p_x / q_x:
            stats.accepted += 1
            out.append(target.token_id(text))
            cur = cur.extended(out[-1:])
            continue
        pv, qv, texts = align_distributions(p_dist, q_dist)
        residual = np.maximum(pv - qv, 0.0)
        total = float(residual.sum())
        if total <= 0.0:
            stats.degenerate += 1
            pick = int(np.argmax(pv))
        else:
            pick = _sample_index(residual / total, rng)
        stats.resampled += 1
        out.append(target.token_id(texts[pick]))
        rejected = True
        break
    if not rejected:
        p_dist = target.next_distribution(cur)
        pick = _sample_index(p_dist.probs, rng)
        out.append(target.token_id(p_dist.vocab.tokens[pick]))
    stats.emitted += len(out)
    stats.wall_ns += time.perf_counter_ns() - t0
    return tuple(out), stats


# ---------------------------------------------------------------------------
# samplers


class Sampler(Protocol):
    """Produces the next chunk of tokens for a context."""

    def step(
        self, model: PolicyHandle, ctx: PolicyContext, rng: np.random.Generator
    ) -> tuple[tuple[int, ...], DecodeStats]: ...


class GreedySampler:
    """Always takes the target's argmax token; ignores the RNG."""

    def step(
        self, model: PolicyHandle, ctx: PolicyContext, rng: np.random.Generator
    ) -> tuple[tuple[int, ...], DecodeStats]:
        t0 = time.perf_counter_ns()
        dist = model.next_distribution(ctx)
        idx = int(np.argmax(dist.probs))
        tok = model.token_id(dist.vocab.tokens[idx])
        return (tok,), DecodeStats(emitted=1, wall_ns=time.perf_counter_ns() - t0)


class DirectSampler:
    """One ancestral sample from the target per step."""

    def step(
        self, model: PolicyHandle, ctx: PolicyContext, rng: np.random.Generator
    ) -> tuple[tuple[int, ...], DecodeStats]:
        t0 = time.perf_counter_ns()
        dist = model.next_distribution(ctx)
        idx = _sample_index(dist.probs, rng)
        tok = model.token_id(dist.vocab.tokens[idx])
        return (tok,), DecodeStats(emitted=1, wall_ns=time.perf_counter_ns() - t0)


@dataclass
class SpeculativeSampler:
    """Draft-and-verify sampling against a fixed draft policy."""

    draft: PolicyHandle
    draft_len: int = DEFAULT_DRAFT_LEN

    def step(
        self, model: PolicyHandle, ctx: PolicyContext, rng: np.random.Generator
    ) -> tuple[tuple[int, ...], DecodeStats]:
        return speculative_step(model, self.draft, ctx, self.draft_len, rng)


def decode_greedy(
    model: PolicyHandle,
    ctx: PolicyContext,
    stop_markers: Sequence[str] = ("\n",),
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
) -> tuple[PolicyContext, tuple[int, ...], DecodeStats]:
    """Argmax decoding until any stop marker shows up in the generated text."""
    sampler = GreedySampler()
    rng = np.random.default_rng(0)
    new_tokens: list[int] = []
    stats = DecodeStats()
    while len(new_tokens) < max_new_tokens:
        toks, st = sampler.step(model, ctx.extended(new_tokens), rng)
        stats.merge(st)
        new_tokens.extend(toks)
        text = model.decode(new_tokens)
        if any(m in text for m in stop_markers):
            break
    return ctx.extended(new_tokens), tuple(new_tokens), stats


# ---------------------------------------------------------------------------
# contrastive scoring


@dataclass(frozen=True)
class CDConfig:
    """Plausibility mask width and amateur-penalty strength."""

    alpha_mask: float = 0.1
    beta: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha_mask <= 1.0:
            raise ValueError("alpha_mask must lie in (0, 1]")
        if self.beta < 0.0:
            raise ValueError("beta must be >= 0")


def contrastive_logits(
    expert_logprobs: np.ndarray, amateur_logprobs: np.ndarray, config: CDConfig | None = None
) -> np.ndarray:
    """Expert-vs-amateur scores with implausible tokens masked to -inf.

    A token stays eligible when its expert log-probability is within
    log(alpha_mask) of the expert's best; eligible tokens score
    (1 + beta) * expert - amateur, so the amateur acts as a penalty.
    """
    config = config or CDConfig()
    e = np.asarray(expert_logprobs, dtype=float)
    a = np.asarray(amateur_logprobs, dtype=float)
    if e.shape != a.shape:
        raise ValueError("mismatched score shapes")
    cutoff = np.log(config.alpha_mask) + e.max()
    scores = (1.0 + config.beta) * e - a
    return np.where(e >= cutoff, scores, -np.inf)


# ---------------------------------------------------------------------------
# one action line


@dataclass
class ActionGeneration:
    """Everything the search needs from one generated line."""

    action: BlockAction | None
    end_of_plan: bool
    malformed: bool
    text: str
    ctx: PolicyContext
    reward_ctx: PolicyContext
    stats: DecodeStats = field(default_factory=DecodeStats)


def generate_action(
    model: PolicyHandle,
    ctx: PolicyContext,
    sampler: Sampler,
    rng: np.random.Generator,
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
) -> ActionGeneration:
    """Sample exactly one plan line (or the end-of-plan bracket) from `model`.

    Tokens past the first line break are discarded even if the sampler emitted
    them in the same chunk; the returned context ends at the terminator.  The
    reward context spans the generated tokens minus a trailing bare line-break
    token, so scoring sees the line itself.
    """
    new_tokens: list[int] = []
    stats = DecodeStats()
    end_of_plan = False
    line_done = False
    while len(new_tokens) < max_new_tokens and not (end_of_plan or line_done):
        chunk, st = sampler.step(model, ctx.extended(new_tokens), rng)
        stats.merge(st)
        for tok in chunk:
            new_tokens.append(tok)
            text = model.decode(new_tokens)
            if text.startswith("["):
                end_of_plan = True
                break
            if "\n" in text:
                line_done = True
                break
            if len(new_tokens) >= max_new_tokens:
                break
    text = model.decode(new_tokens)
    action: BlockAction | None = None
    malformed = False
    if line_done:
        try:
            action = parse_action(text.split("\n", 1)[0])
        except MalformedAction:
            malformed = True
    elif not end_of_plan:
        malformed = True  # budget ran out before the line closed
    reward_tokens = list(new_tokens)
    if reward_tokens and model.decode(reward_tokens[-1:]) == "\n":
        reward_tokens.pop()
    return ActionGeneration(
        action=action,
        end_of_plan=end_of_plan,
        malformed=malformed,
        text=text,
        ctx=ctx.extended(new_tokens),
        reward_ctx=PolicyContext(ctx.tokens + tuple(reward_tokens), prefix_len=len(ctx.tokens)),
        stats=stats,
    )
