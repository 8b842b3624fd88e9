"""Reward factors and the clustered, online-normalized composite reward.

Three per-step factors score a freshly generated action line: the divergence
between an expert and a deliberately weaker amateur at each answer position,
the expert's total log-likelihood of the line, and the expert's probability of
affirming its own output.  The factors live on wildly different scales, so a
prior phase clusters each factor's sample into value regions and the composite
z-normalizes every new value against its region before mixing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .decoding import DirectSampler, align_distributions, generate_action
from .errors import EmptyAnswer, InsufficientSamples
from .policy import PolicyContext, PolicyHandle, PolicySuite

FACTORS = ("jsd", "ll", "se")
STD_FLOOR = 1e-9
COLLAPSE_RATIO = 1.5
MIN_REGION_MEMBERS = 2


@dataclass(frozen=True)
class SelfEvalTemplate:
    """How the model is asked to judge its own line."""

    question: str = "Is this answer correct/good?"
    affirmation: tuple[str, ...] = ("good",)

    def __post_init__(self) -> None:
        if not self.question.strip() or not self.affirmation:
            raise ValueError("self-eval template needs a question and an affirmation")


DEFAULT_SELF_EVAL = SelfEvalTemplate()


# ---------------------------------------------------------------------------
# factor values


def jsd_base2(p: Sequence[float], q: Sequence[float]) -> float:
    """Jensen-Shannon divergence in bits; 0 for identical inputs, 1 at most."""
    pv = np.asarray(p, dtype=float)
    qv = np.asarray(q, dtype=float)
    if pv.shape != qv.shape:
        raise ValueError("mismatched distribution shapes")
    m = 0.5 * (pv + qv)

    def half_kl(a: np.ndarray) -> float:
        mask = a > 0.0
        return float(np.sum(a[mask] * np.log2(a[mask] / m[mask])))

    return 0.5 * half_kl(pv) + 0.5 * half_kl(qv)


def _require_answer(ctx: PolicyContext) -> None:
    if len(ctx.tokens) == ctx.prefix_len:
        raise EmptyAnswer("context carries no answer tokens to score")


def reward_jsd(expert: PolicyHandle, amateur: PolicyHandle, ctx: PolicyContext) -> float:
    """Mean expert-vs-amateur divergence across the answer positions."""
    _require_answer(ctx)
    vals = []
    for pos in range(ctx.prefix_len, len(ctx.tokens)):
        prefix = PolicyContext(ctx.tokens[:pos], ctx.prefix_len)
        pd = expert.next_distribution(prefix)
        qd = amateur.next_distribution(prefix)
        pv, qv, _ = align_distributions(pd, qd)
        vals.append(jsd_base2(pv, qv))
    return float(np.mean(vals))


def reward_ll(expert: PolicyHandle, ctx: PolicyContext) -> float:
    """Total expert log-likelihood of the answer span."""
    _require_answer(ctx)
    return float(sum(expert.score_sequence(ctx)))


def reward_se(
    expert: PolicyHandle, ctx: PolicyContext, template: SelfEvalTemplate = DEFAULT_SELF_EVAL
) -> float:
    """Mean expert log-probability of affirming its own answer.

    The question is appended on a fresh line and the affirmation tokens are
    scored right after it; a probability-zero affirmation scores -inf.
    """
    _require_answer(ctx)
    ask = expert.encode("\n" + template.question)
    answer = expert.encode(" ".join(template.affirmation))
    scored = PolicyContext(ctx.tokens + ask + answer, len(ctx.tokens) + len(ask))
    return float(np.mean(expert.score_sequence(scored)))


# ---------------------------------------------------------------------------
# region statistics


@dataclass
class RegionStats:
    """Running population moments of one value region."""

    count: int
    mean: float
    std: float

    def update(self, value: float) -> None:
        new_count = self.count + 1
        delta = value - self.mean
        new_mean = self.mean + delta / new_count
        m2 = self.count * self.std * self.std + delta * (value - new_mean)
        self.count = new_count
        self.mean = new_mean
        self.std = math.sqrt(max(m2, 0.0) / new_count)

    def normalize(self, value: float) -> float:
        if self.std < STD_FLOOR:
            return value - self.mean
        return (value - self.mean) / self.std


@dataclass
class FactorStats:
    """Region boundaries plus per-region moments for one factor."""

    boundaries: tuple[float, ...]  # interior cut points, ascending
    regions: list[RegionStats]

    def __post_init__(self) -> None:
        if len(self.boundaries) != len(self.regions) - 1:
            raise ValueError("need exactly one fewer boundary than regions")
        if any(b2 <= b1 for b1, b2 in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("boundaries must be strictly ascending")

    def region_of(self, value: float) -> int:
        return int(np.searchsorted(np.asarray(self.boundaries), value, side="right"))

    def normalize(self, value: float) -> float:
        return self.regions[self.region_of(value)].normalize(value)

    def update(self, value: float) -> None:
        self.regions[self.region_of(value)].update(value)

    def to_dict(self) -> dict:
        return {
            "boundaries": list(self.boundaries),
            "regions": [{"mu": r.mean, "n": r.count, "sigma": r.std} for r in self.regions],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FactorStats":
        regions = [
            RegionStats(int(r["n"]), float(r["mu"]), float(r["sigma"])) for r in data["regions"]
        ]
        return cls(tuple(float(b) for b in data["boundaries"]), regions)


def cluster_regions(
    values: Sequence[float],
    clusters: int = 2,
    collapse_ratio: float = COLLAPSE_RATIO,
    min_members: int = MIN_REGION_MEMBERS,
) -> FactorStats:
    """Split a 1-D sample into value regions by k-means, then self-repair.

    Adjacent regions whose centroid gap is smaller than `collapse_ratio` times
    the wider of their spreads are merged (the sample did not really separate),
    and any region left with fewer than `min_members` points is folded into its
    nearest neighbor.  Raises when the sample is too small to form one region.
    """
    vals = np.sort(np.asarray(values, dtype=float))
    if vals.size < min_members:
        raise InsufficientSamples(f"{vals.size} samples cannot support region statistics")
    if not np.isfinite(vals).all():
        raise ValueError("non-finite factor values")
    k = max(1, min(clusters, vals.size))

    if k == 1:
        groups = [vals]
    else:
        cents = np.quantile(vals, [(i + 0.5) / k for i in range(k)])
        for _ in range(100):
            cuts = (cents[:-1] + cents[1:]) / 2.0
            assign = np.searchsorted(cuts, vals, side="right")
            new = np.array(
                [vals[assign == j].mean() if np.any(assign == j) else cents[j] for j in range(k)]
            )
            if np.array_equal(new, cents):
                break
            cents = new
        groups = [vals[assign == j] for j in range(k) if np.any(assign == j)]

    # Merge adjacent regions that never truly separated.
    while len(groups) > 1:
        means = [float(g.mean()) for g in groups]
        stds = [float(g.std()) for g in groups]
        gaps = [(means[i + 1] - means[i], i) for i in range(len(groups) - 1)]
        gap, i = min(gaps)
        if gap < collapse_ratio * max(stds[i], stds[i + 1]):
            groups[i : i + 2] = [np.concatenate([groups[i], groups[i + 1]])]
        else:
            break

    # Fold undersized regions into their nearest neighbor.
    merged = True
    while merged and len(groups) > 1:
        merged = False
        for i, g in enumerate(groups):
            if g.size >= min_members:
                continue
            if i == 0:
                j = 1
            elif i == len(groups) - 1:
                j = i - 1
            else:
                j = i - 1 if abs(groups[i - 1].mean() - g.mean()) <= abs(
                    groups[i + 1].mean() - g.mean()
                ) else i + 1
            lo, hi = min(i, j), max(i, j)
            groups[lo : hi + 1] = [np.concatenate([groups[lo], groups[hi]])]
            merged = True
            break

    regions = [RegionStats(int(g.size), float(g.mean()), float(g.std())) for g in groups]
    means = [r.mean for r in regions]
    boundaries = tuple((a + b) / 2.0 for a, b in zip(means, means[1:]))
    return FactorStats(boundaries, regions)


@dataclass
class RewardFactorStats:
    """Per-factor region statistics, the artifact the prior phase produces."""

    factors: dict[str, FactorStats]

    def normalize(self, factor: str, value: float) -> float:
        return self.factors[factor].normalize(value)

    def update_online(self, factor: str, value: float) -> None:
        self.factors[factor].update(value)

    def to_dict(self) -> dict:
        return {name: fs.to_dict() for name, fs in sorted(self.factors.items())}

    @classmethod
    def from_dict(cls, data: dict) -> "RewardFactorStats":
        return cls({name: FactorStats.from_dict(d) for name, d in data.items()})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "RewardFactorStats":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# composition


@dataclass(frozen=True)
class CompositeRewardConfig:
    weights: tuple[float, ...] = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    prior_problems: int = 10
    prior_solutions: int = 5
    # Region count for the prior clustering.  The default keeps one region
    # per factor: multi-region boundaries only pay off when a factor's value
    # modes come from context shifts rather than step quality, and a
    # quality-aligned split ranks the best wrong steps above the right ones
    # (each region is z-scored against its own mean).
    clusters: int = 1
    online_update: bool = True

    def __post_init__(self) -> None:
        if len(self.weights) != len(FACTORS):
            raise ValueError(f"need {len(FACTORS)} weights, one per factor")
        if any(not math.isfinite(w) or w < 0 for w in self.weights):
            raise ValueError("weights must be finite and non-negative")
        if self.prior_problems < 1 or self.prior_solutions < 1:
            raise ValueError("prior sampling needs at least one problem and one solution")
        if self.clusters < 1:
            raise ValueError("clusters must be >= 1")

    def weight_for(self, factor: str) -> float:
        return self.weights[FACTORS.index(factor)]


@dataclass(frozen=True)
class AblationMask:
    """Which parts of the reward are switched on for a run."""

    factors: tuple[str, ...] = FACTORS
    multi_rm: bool = True
    random_reward: bool = False

    def __post_init__(self) -> None:
        unknown = set(self.factors) - set(FACTORS)
        if unknown:
            raise ValueError(f"unknown factors: {sorted(unknown)}")
        if len(set(self.factors)) != len(self.factors):
            raise ValueError("duplicate factors")
        if not self.factors and not self.random_reward:
            raise ValueError("no factors enabled and random reward off")


def composite_reward(
    values: dict[str, float],
    config: CompositeRewardConfig,
    mask: AblationMask,
    stats: RewardFactorStats | None = None,
) -> tuple[float, dict[str, float] | None]:
    """Mix raw factor values into one scalar; pure and update-free.

    Random mode passes the pre-drawn value through untouched.  Without region
    normalization the factors are summed as-is (their scales then dominate the
    mix, which is exactly what the normalized mode exists to fix).
    """
    if mask.random_reward:
        return values["random"], None
    if not mask.multi_rm:
        return float(sum(values[f] for f in mask.factors)), None
    if stats is None:
        raise ValueError("region-normalized reward needs prior factor statistics")
    normalized = {f: stats.normalize(f, values[f]) for f in mask.factors}
    return float(sum(config.weight_for(f) * normalized[f] for f in mask.factors)), normalized


@dataclass
class RewardBreakdown:
    values: dict[str, float]
    normalized: dict[str, float] | None
    value: float


class RewardModel:
    """Scores reward contexts for one search, keeping its own running stats."""

    def __init__(
        self,
        suite: PolicySuite,
        config: CompositeRewardConfig,
        mask: AblationMask = AblationMask(),
        stats: RewardFactorStats | None = None,
        template: SelfEvalTemplate = DEFAULT_SELF_EVAL,
        rng: np.random.Generator | None = None,
    ):
        if mask.multi_rm and not mask.random_reward and stats is None:
            raise ValueError("region-normalized reward needs prior factor statistics")
        self.suite = suite
        self.config = config
        self.mask = mask
        self.stats = stats
        self.template = template
        self.rng = rng or np.random.default_rng()

    def evaluate(self, reward_ctx: PolicyContext, update: bool = True) -> RewardBreakdown:
        if self.mask.random_reward:
            values = {"random": float(self.rng.random())}
            value, _ = composite_reward(values, self.config, self.mask)
            return RewardBreakdown(values, None, value)
        values: dict[str, float] = {}
        for f in self.mask.factors:
            if f == "jsd":
                values[f] = reward_jsd(self.suite.expert, self.suite.amateur, reward_ctx)
            elif f == "ll":
                values[f] = reward_ll(self.suite.expert, reward_ctx)
            else:
                values[f] = reward_se(self.suite.expert, reward_ctx, self.template)
        value, normalized = composite_reward(values, self.config, self.mask, self.stats)
        if update and self.mask.multi_rm and self.config.online_update:
            for f in self.mask.factors:
                self.stats.update_online(f, values[f])
        return RewardBreakdown(values, normalized, value)


# ---------------------------------------------------------------------------
# prior phase


def collect_prior_stats(
    setups: Sequence[tuple[PolicySuite, PolicyContext]],
    config: CompositeRewardConfig,
    seed: int = 0,
    max_steps: int = 24,
    template: SelfEvalTemplate = DEFAULT_SELF_EVAL,
) -> tuple[RewardFactorStats, dict]:
    """Sample whole solutions per problem and fit region stats per factor.

    Every step of every sampled solution contributes one value to each
    factor's pool; the pools are clustered independently.  Generation stops at
    a malformed line, the end-of-plan bracket, or the step cap.
    """
    pools: dict[str, list[float]] = {f: [] for f in FACTORS}
    sampler = DirectSampler()
    for pi, (suite, root) in enumerate(setups):
        for si in range(config.prior_solutions):
            rng = np.random.default_rng([seed, 31, pi, si])
            ctx = root
            for _ in range(max_steps):
                gen = generate_action(suite.expert, ctx, sampler, rng)
                if gen.malformed:
                    break
                pools["jsd"].append(reward_jsd(suite.expert, suite.amateur, gen.reward_ctx))
                pools["ll"].append(reward_ll(suite.expert, gen.reward_ctx))
                pools["se"].append(reward_se(suite.expert, gen.reward_ctx, template))
                if gen.end_of_plan:
                    break
                ctx = gen.ctx
    steps = len(pools["jsd"])
    if steps < MIN_REGION_MEMBERS:
        raise InsufficientSamples(f"prior phase recorded only {steps} scored steps")
    stats = RewardFactorStats(
        {f: cluster_regions(pools[f], config.clusters) for f in FACTORS}
    )
    with np.errstate(invalid="ignore"):  # constant factors correlate as nan
        matrix = np.corrcoef(np.array([pools[f] for f in FACTORS]))
    corr = [[x if math.isfinite(x) else None for x in map(float, row)] for row in matrix]
    meta = {
        "problems": len(setups),
        "solutions_per_problem": config.prior_solutions,
        "solutions": len(setups) * config.prior_solutions,
        "scored_steps": steps,
        "factor_correlations": corr,
    }
    return stats, meta
