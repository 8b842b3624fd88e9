"""Rank statistics for reward-versus-progress edge analysis.

Everything here is intentionally definitional: average-rank assignment, plain
product-moment correlation, Spearman as Pearson over ranks, and a two-sided
permutation test.  The interpretability report bins edges by reward and asks
how often a higher-rewarded step actually moved the plan forward.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientData

MIN_EDGES = 50
DEFAULT_PERMUTATIONS = 2000
DEFAULT_BINS = 20


def rankdata_average(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank block."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=float)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    xv = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if xv.size != yv.size:
        raise ValueError("mismatched sample sizes")
    if xv.size < 2:
        raise ValueError("correlation needs at least two points")
    xc = xv - xv.mean()
    yc = yv - yv.mean()
    denom = float(np.sqrt(np.sum(xc * xc) * np.sum(yc * yc)))
    if denom == 0.0:
        return float("nan")
    return float(np.sum(xc * yc) / denom)


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    return pearson(rankdata_average(x), rankdata_average(y))


def permutation_pvalue(
    x: Sequence[float],
    y: Sequence[float],
    stat: Callable[[Sequence[float], Sequence[float]], float] = spearman,
    permutations: int = DEFAULT_PERMUTATIONS,
    seed: int = 0,
) -> float:
    """Two-sided permutation p-value with the +1 smoothing that keeps it > 0."""
    observed = abs(stat(x, y))
    rng = np.random.default_rng([seed, 41])
    yv = np.asarray(y, dtype=float)
    hits = 0
    for _ in range(permutations):
        if abs(stat(x, rng.permutation(yv))) >= observed:
            hits += 1
    return (1 + hits) / (1 + permutations)


def interpretability_report(
    rewards: Sequence[float],
    deltas: Sequence[float],
    bins: int = DEFAULT_BINS,
    permutations: int = DEFAULT_PERMUTATIONS,
    seed: int = 0,
) -> dict:
    """Summarize how well edge rewards track true plan progress.

    `rewards` and `deltas` are paired per expansion edge; a delta above zero
    means the step moved the plan closer to the goal.
    """
    r = np.asarray(rewards, dtype=float)
    d = np.asarray(deltas, dtype=float)
    if r.size != d.size:
        raise ValueError("mismatched edge arrays")
    if r.size < MIN_EDGES:
        raise InsufficientData(f"{r.size} edges < {MIN_EDGES} needed for the report")
    lo, hi = float(r.min()), float(r.max())
    span = hi - lo or 1.0
    rows = []
    for b in range(bins):
        left = lo + span * b / bins
        right = lo + span * (b + 1) / bins
        mask = (r >= left) & (r < right if b < bins - 1 else r <= right)
        if not mask.any():
            continue
        rows.append(
            {
                "bin": b,
                "reward_lo": left,
                "reward_hi": right,
                "count": int(mask.sum()),
                "positive_fraction": float((d[mask] > 0).mean()),
                "mean_delta": float(d[mask].mean()),
                "mean_reward": float(r[mask].mean()),
            }
        )
    return {
        "edges": int(r.size),
        "positive_fraction": float((d > 0).mean()),
        "pearson": pearson(r, d),
        "spearman": spearman(r, d),
        "pearson_pvalue": permutation_pvalue(r, d, stat=pearson, permutations=permutations, seed=seed),
        "spearman_pvalue": permutation_pvalue(r, d, stat=spearman, permutations=permutations, seed=seed),
        "bins": rows,
    }
