"""Tree search over plan prefixes guided by the composite reward.

Each node is one action line deep in a growing plan.  Iterations select a
frontier node by an exploration-bonus rule, expand it with sampled children,
score each child, sharpen the best child's value with short virtual rollouts
(they never become tree nodes), and push a path-shaped value back up the
trace as a running mean.  The final plan is read off the best terminal or
frontier node and replayed against the environment before being believed.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .blocksworld import BlockAction, BlocksState, Problem, apply, is_goal
from .decoding import (
    ActionGeneration,
    DecodeStats,
    DirectSampler,
    GreedySampler,
    Sampler,
    SpeculativeSampler,
    generate_action,
)
from .errors import IllegalAction
from .oracle import PlanOracle
from .policy import PolicyContext, PolicySuite
from .rewards import RewardModel

DEFAULT_DEPTH_LIMIT = 14
CLIP_FLOOR = -0.1  # worst drop a single backward step may contribute (halved)

_EXPAND_TAG = 17
_ROLLOUT_TAG = 19


@dataclass(frozen=True)
class SearchConfig:
    max_iterations: int = 10
    value_threshold: float = math.inf  # early stop once a selected node scores this high
    expansion_branch: int = 4
    rollout_steps: int = 4
    rollout_branch: int = 2
    rollout_mix: float = 0.5  # weight kept on the expanded child's own score
    exploration: float = 2.5
    length_penalty: float = 0.1
    depth_limit: int | None = None  # None: shortest plan + 2 when known, else 14
    seed: int = 0
    max_new_tokens: int = 200
    malformed_floor: float = -3.0
    backprop: str = "path"  # "path" | "leaf"
    path_value_source: str = "value"  # "value" | "progress"
    sampler: str = "speculative"  # rollout sampler: "speculative" | "direct" | "greedy"
    draft_len: int = 4

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.expansion_branch < 1:
            raise ValueError("expansion_branch must be >= 1")
        if self.rollout_steps < 1 or self.rollout_branch < 1:
            raise ValueError("rollout_steps and rollout_branch must be >= 1")
        if not 0.0 <= self.rollout_mix <= 1.0:
            raise ValueError("rollout_mix must lie in [0, 1]")
        if self.exploration < 0.0:
            raise ValueError("exploration must be >= 0")
        if self.length_penalty < 0.0:
            raise ValueError("length_penalty must be >= 0")
        if self.backprop not in ("path", "leaf"):
            raise ValueError("backprop must be 'path' or 'leaf'")
        if self.path_value_source not in ("value", "progress"):
            raise ValueError("path_value_source must be 'value' or 'progress'")
        if self.sampler not in ("speculative", "direct", "greedy"):
            raise ValueError("sampler must be 'speculative', 'direct', or 'greedy'")
        if self.draft_len < 1:
            raise ValueError("draft_len must be >= 1")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        # None stands in for the non-JSON "never stop early" default.
        out["value_threshold"] = None if math.isinf(self.value_threshold) else self.value_threshold
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SearchConfig":
        data = dict(data)
        if data.get("value_threshold") is None:
            data["value_threshold"] = math.inf
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown search options: {sorted(unknown)}")
        return cls(**data)


# ---------------------------------------------------------------------------
# scoring rules


def uct_score(value: float, visits: int, parent_visits: int, exploration: float) -> float:
    """Mean value plus an exploration bonus; unvisited nodes rank first."""
    if visits == 0:
        return math.inf
    return value + exploration * math.sqrt(math.log(max(parent_visits, 1)) / visits)


def path_value(values: Sequence[float], length_penalty: float = 0.1) -> float:
    """Shape a root-to-node value sequence into one backup scalar.

    Gains between consecutive nodes count in full; losses are halved and
    floored so a single bad step cannot dominate, and every node on the path
    pays a constant length charge.
    """
    total = 0.0
    for prev, cur in zip(values, values[1:]):
        delta = cur - prev
        total += delta if delta >= 0 else 0.5 * max(delta, CLIP_FLOOR)
    return total - length_penalty * len(values)


def mix_value(own: float, rollout_max: float, mix: float) -> float:
    return mix * own + (1.0 - mix) * rollout_max


# ---------------------------------------------------------------------------
# tree


@dataclass
class SearchNode:
    id: int
    parent: int | None
    action: BlockAction | None
    state: BlocksState
    ctx: PolicyContext
    depth: int
    value: float = 0.0
    step_reward: float = 0.0  # composite reward earned at creation; never mutated
    visits: int = 0
    path_sum: float = 0.0  # total of backup values routed through this node
    path_count: int = 0  # how many backups that was; value is their mean once > 0
    terminal: str | None = None  # None | "goal" | "failed"
    exhausted: bool = False  # nothing expandable remains at or below this node
    malformed: bool = False  # unparseable or illegal line; value is floored
    end_of_plan: bool = False
    text: str = ""
    reward_values: dict[str, float] | None = None
    reward_normalized: dict[str, float] | None = None
    children: list[int] = field(default_factory=list)


class SearchTree:
    def __init__(self, root: SearchNode):
        self.nodes: list[SearchNode] = [root]

    @property
    def root(self) -> SearchNode:
        return self.nodes[0]

    def add(self, node: SearchNode) -> SearchNode:
        if node.id != len(self.nodes):
            raise ValueError("node ids must be allocated densely in creation order")
        self.nodes.append(node)
        self.nodes[node.parent].children.append(node.id)
        return node

    def trace(self, node: SearchNode) -> list[SearchNode]:
        """Nodes from the root down to `node`, inclusive."""
        out = [node]
        while out[-1].parent is not None:
            out.append(self.nodes[out[-1].parent])
        out.reverse()
        return out

    def path_actions(self, node: SearchNode) -> tuple[BlockAction, ...]:
        return tuple(n.action for n in self.trace(node) if n.action is not None)


def uct_select(parent: SearchNode, tree: SearchTree, exploration: float) -> SearchNode:
    best: SearchNode | None = None
    best_score = -math.inf
    for child_id in parent.children:
        child = tree.nodes[child_id]
        if child.visits == 0:
            return child
        score = uct_score(child.value, child.visits, parent.visits, exploration)
        if score > best_score:
            best, best_score = child, score
    if best is None:
        raise ValueError("uct_select called on a childless node")
    return best


# ---------------------------------------------------------------------------
# engine


@dataclass
class EdgeRecord:
    """One created child edge, kept for reward-vs-progress analysis."""

    node_id: int
    parent_id: int
    reward: float
    delta_progress: float
    values: dict[str, float]


@dataclass
class SearchResult:
    plan: tuple[BlockAction, ...]
    solved: bool
    best_node_id: int
    best_value: float
    iterations: int
    expansions: int
    nodes_created: int
    rollout_generations: int
    decode_stats: DecodeStats
    edges: list[EdgeRecord]
    tree: SearchTree


class SearchEngine:
    """One search over one problem with a fixed policy suite and reward model."""

    def __init__(
        self,
        problem: Problem,
        suite: PolicySuite,
        reward_model: RewardModel,
        config: SearchConfig = SearchConfig(),
        oracle: PlanOracle | None = None,
        root_ctx: PolicyContext = PolicyContext(),
    ):
        self.problem = problem
        self.suite = suite
        self.reward_model = reward_model
        self.config = config
        self.oracle = oracle
        if config.path_value_source == "progress" and oracle is None:
            raise ValueError("progress-shaped backups need a plan oracle")
        if config.depth_limit is not None:
            self.depth_limit = config.depth_limit
        elif problem.min_plan_length is not None:
            self.depth_limit = problem.min_plan_length + 2
        else:
            self.depth_limit = DEFAULT_DEPTH_LIMIT
        self.tree = SearchTree(
            SearchNode(0, None, None, problem.initial, root_ctx, depth=0)
        )
        self.decode_stats = DecodeStats()
        self.edges: list[EdgeRecord] = []
        self.expansions = 0
        self.rollout_generations = 0
        self._expansion_sampler: Sampler = DirectSampler()
        if config.sampler == "speculative":
            self._rollout_sampler: Sampler = SpeculativeSampler(suite.draft, config.draft_len)
        elif config.sampler == "direct":
            self._rollout_sampler = DirectSampler()
        else:
            self._rollout_sampler = GreedySampler()

    # ------------------------------------------------------------ pieces

    def _progress(self, state: BlocksState) -> float:
        return self.oracle.progress(state) if self.oracle is not None else 0.0

    def _new_child(self, parent: SearchNode, k: int) -> SearchNode | None:
        """Sample one child line; None means a duplicate that was discarded."""
        rng = np.random.default_rng([self.config.seed, _EXPAND_TAG, parent.id, k])
        gen = generate_action(
            self.suite.expert, parent.ctx, self._expansion_sampler, rng, self.config.max_new_tokens
        )
        self.decode_stats.merge(gen.stats)
        node = SearchNode(
            id=len(self.tree.nodes),
            parent=parent.id,
            action=gen.action,
            state=parent.state,
            ctx=gen.ctx,
            depth=parent.depth + 1,
            text=gen.text,
        )
        if gen.malformed:
            node.malformed = True
            node.terminal = "failed"
            node.value = node.step_reward = self.config.malformed_floor
            return self.tree.add(node)
        existing = {
            (c.action, c.end_of_plan)
            for c in (self.tree.nodes[i] for i in parent.children)
            if not c.malformed
        }
        if (gen.action, gen.end_of_plan) in existing:
            return None
        if gen.end_of_plan:
            node.end_of_plan = True
            node.terminal = "goal" if is_goal(parent.state, self.problem) else "failed"
        else:
            try:
                node.state = apply(parent.state, gen.action)
            except IllegalAction:
                node.malformed = True
                node.terminal = "failed"
                node.value = node.step_reward = self.config.malformed_floor
                return self.tree.add(node)
            if is_goal(node.state, self.problem):
                node.terminal = "goal"
        breakdown = self.reward_model.evaluate(gen.reward_ctx, update=True)
        # a zero-probability factor can push the composite to -inf; node values
        # must stay finite, so such children share the malformed floor
        node.value = node.step_reward = (
            breakdown.value if math.isfinite(breakdown.value) else self.config.malformed_floor
        )
        node.reward_values = breakdown.values
        node.reward_normalized = breakdown.normalized
        self.tree.add(node)
        if self.oracle is not None:
            self.edges.append(
                EdgeRecord(
                    node_id=node.id,
                    parent_id=parent.id,
                    reward=breakdown.value,
                    delta_progress=self._progress(node.state) - self._progress(parent.state),
                    values=dict(breakdown.values),
                )
            )
        return node

    def _expand(self, node: SearchNode) -> SearchNode:
        """Grow children under `node`; return the node the backup should target."""
        self.expansions += 1
        created: list[SearchNode] = []
        for k in range(self.config.expansion_branch):
            child = self._new_child(node, k)
            if child is not None:
                created.append(child)
        live = [c for c in created if not c.malformed]
        if not live:
            node.terminal = "failed"  # nothing usable came out of this prefix
            return node
        best = max(live, key=lambda c: (c.value, -c.id))
        if best.terminal is None:
            rollout_max = self._rollout(best)
            if rollout_max is not None:
                best.value = mix_value(best.value, rollout_max, self.config.rollout_mix)
        return best

    def _rollout(self, node: SearchNode) -> float | None:
        """Greedy lookahead: per step keep the best of `rollout_branch` sampled
        continuations, descend through it, and report the best reward seen.

        The walk stays virtual; nothing here enters the tree.
        """
        best: float | None = None
        rng = np.random.default_rng([self.config.seed, _ROLLOUT_TAG, node.id])
        ctx, state = node.ctx, node.state
        for _ in range(self.config.rollout_steps):
            chosen: tuple[float, ActionGeneration, BlocksState | None] | None = None
            for _ in range(self.config.rollout_branch):
                gen = generate_action(
                    self.suite.expert, ctx, self._rollout_sampler, rng, self.config.max_new_tokens
                )
                self.decode_stats.merge(gen.stats)
                self.rollout_generations += 1
                if gen.malformed:
                    continue
                next_state: BlocksState | None = None
                if not gen.end_of_plan:
                    try:
                        next_state = apply(state, gen.action)
                    except IllegalAction:
                        continue
                breakdown = self.reward_model.evaluate(gen.reward_ctx, update=False)
                best = breakdown.value if best is None else max(best, breakdown.value)
                if chosen is None or breakdown.value > chosen[0]:
                    chosen = (breakdown.value, gen, next_state)
            if chosen is None:
                break
            _, gen, next_state = chosen
            if gen.end_of_plan or next_state is None:
                break
            state = next_state
            ctx = gen.ctx
            if is_goal(state, self.problem):
                break
        return best

    def _select_child(self, parent: SearchNode) -> SearchNode | None:
        """uct_select restricted to children that can still grow.

        Exhausted subtrees (terminal, depth-capped, or fully tried) are
        skipped so iterations never re-walk dead ends; None means every
        child is exhausted.
        """
        best: SearchNode | None = None
        best_score = -math.inf
        for child_id in parent.children:
            child = self.tree.nodes[child_id]
            if child.exhausted:
                continue
            if child.visits == 0:
                return child
            score = uct_score(child.value, child.visits, parent.visits, self.config.exploration)
            if score > best_score:
                best, best_score = child, score
        return best

    def _close_exhausted(self, trace: list[SearchNode]) -> None:
        """Mark leaf-to-root whatever this iteration used up.

        A node is done when it can never be expanded (terminal or at the
        depth limit) or when all of its children are done.
        """
        for n in reversed(trace):
            if n.exhausted:
                continue
            if n.terminal is not None or (not n.children and n.depth >= self.depth_limit):
                n.exhausted = True
            elif n.children and all(self.tree.nodes[c].exhausted for c in n.children):
                n.exhausted = True
            else:
                break  # this node still has live options; ancestors must too

    def _backpropagate(self, target: SearchNode) -> None:
        """Fold the finished step into the tree statistics.

        The target keeps the value it earned (reward, possibly blended with a
        rollout); every node above it absorbs the backup value into a running
        mean. Visit counts grow on the whole trace, so they never increase
        from root to leaf.
        """
        target.visits += 1
        trace = self.tree.trace(target)
        if self.config.backprop == "leaf":
            final = trace[-1].value
        else:
            if self.config.path_value_source == "progress":
                values = [self._progress(n.state) for n in trace]
            else:
                # Cumulative step rewards give the path a progress-shaped
                # curve: each delta is exactly one step's reward, so a bad
                # step is clipped once and never refunded by the recovery.
                values, running = [], 0.0
                for n in trace:
                    running += n.step_reward
                    values.append(running)
            final = path_value(values, self.config.length_penalty)
        for n in trace[:-1]:
            n.path_sum += final
            n.path_count += 1
            n.visits += 1
            n.value = n.path_sum / n.path_count

    # ------------------------------------------------------------ main loop

    def run(self) -> SearchResult:
        iterations = 0
        if not is_goal(self.problem.initial, self.problem):
            for _ in range(self.config.max_iterations):
                if self.tree.root.exhausted:
                    break  # every line within the depth limit has been tried
                iterations += 1
                node = self.tree.root
                dead_end = False
                while node.children:
                    child = self._select_child(node)
                    if child is None:
                        dead_end = True
                        break
                    node = child
                if node.value >= self.config.value_threshold:
                    break
                if not dead_end and node.terminal is None and node.depth < self.depth_limit:
                    target = self._expand(node)
                else:
                    target = node
                self._backpropagate(target)
                self._close_exhausted(self.tree.trace(target))
        best = self._best_node()
        plan = self.tree.path_actions(best)
        return SearchResult(
            plan=plan,
            solved=self._replay_reaches_goal(plan),
            best_node_id=best.id,
            best_value=best.value,
            iterations=iterations,
            expansions=self.expansions,
            nodes_created=len(self.tree.nodes) - 1,
            rollout_generations=self.rollout_generations,
            decode_stats=self.decode_stats,
            edges=self.edges,
            tree=self.tree,
        )

    def _best_node(self) -> SearchNode:
        """Pick the node whose prefix becomes the answer.

        Completed solutions (goal terminals) outrank everything else; among
        them, and among the fallback pool of terminals and frontier leaves,
        the highest value wins and ties go to the oldest node.
        """
        candidates = [
            n
            for n in self.tree.nodes
            if not n.malformed and (n.terminal is not None or not n.children)
        ]
        goals = [n for n in candidates if n.terminal == "goal"]
        pool = goals or candidates
        if not pool:
            return self.tree.root
        return max(pool, key=lambda n: (n.value, -n.id))

    def _replay_reaches_goal(self, plan: Sequence[BlockAction]) -> bool:
        state = self.problem.initial
        for action in plan:
            try:
                state = apply(state, action)
            except IllegalAction:
                return False
        return is_goal(state, self.problem)
