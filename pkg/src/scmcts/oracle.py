"""Exact reachability analysis: optimal plan lengths, optimal first moves, progress.

All four Blocksworld actions are invertible, so the state graph is undirected
and one sweep over the connected component plus a multi-source BFS from the
goal region yields the distance-to-goal of every reachable state.
"""

from __future__ import annotations

from collections import deque

from .blocksworld import BlockAction, BlocksState, Problem, apply, is_goal, legal_actions
from .errors import OracleLimitExceeded, Unsolvable

DEFAULT_BLOCK_LIMIT = 8


class PlanOracle:
    """Distance-to-goal map for one problem, built once and queried many times."""

    def __init__(self, problem: Problem, block_limit: int = DEFAULT_BLOCK_LIMIT):
        if len(problem.blocks) > block_limit:
            raise OracleLimitExceeded(
                f"{len(problem.blocks)} blocks exceeds the exact-search limit of {block_limit}"
            )
        self.problem = problem
        component = self._component(problem.initial)
        goal_states = [s for s in component if is_goal(s, problem)]
        if not goal_states:
            raise Unsolvable("no reachable state satisfies the goal")
        self._dist = self._distances_from(goal_states)
        self._root_len = self._dist[problem.initial]

    @staticmethod
    def _component(root: BlocksState) -> list[BlocksState]:
        seen = {root}
        order = [root]
        queue = deque([root])
        while queue:
            state = queue.popleft()
            for action in legal_actions(state):
                nxt = apply(state, action)
                if nxt not in seen:
                    seen.add(nxt)
                    order.append(nxt)
                    queue.append(nxt)
        return order

    @staticmethod
    def _distances_from(sources: list[BlocksState]) -> dict[BlocksState, int]:
        dist = {s: 0 for s in sources}
        queue = deque(sources)
        while queue:
            state = queue.popleft()
            d = dist[state] + 1
            for action in legal_actions(state):
                nxt = apply(state, action)
                if nxt not in dist:
                    dist[nxt] = d
                    queue.append(nxt)
        return dist

    # ------------------------------------------------------------ queries

    def min_plan_length(self, state: BlocksState | None = None) -> int:
        state = self.problem.initial if state is None else state
        try:
            return self._dist[state]
        except KeyError:
            raise ValueError("state is not reachable in this problem") from None

    def first_optimal_actions(self, state: BlocksState | None = None) -> frozenset[BlockAction]:
        """Actions that start some optimal plan; empty when the goal already holds."""
        state = self.problem.initial if state is None else state
        d = self.min_plan_length(state)
        if d == 0:
            return frozenset()
        return frozenset(
            a for a in legal_actions(state) if self._dist[apply(state, a)] == d - 1
        )

    def optimal_plan(self, state: BlocksState | None = None) -> list[BlockAction]:
        state = self.problem.initial if state is None else state
        plan: list[BlockAction] = []
        while self.min_plan_length(state) > 0:
            action = min(self.first_optimal_actions(state))
            plan.append(action)
            state = apply(state, action)
        return plan

    def progress(self, state: BlocksState) -> float:
        """(L0 - L(state)) / L0: 0 at the initial state, 1 exactly at goal states.

        Detours past the initial distance go negative.  When the initial state
        already satisfies the goal (L0 = 0) the denominator degrades to 1.
        """
        length = self.min_plan_length(state)
        if length == 0:
            return 1.0
        return (self._root_len - length) / max(self._root_len, 1)

    def states_at(self, distance: int) -> list[BlocksState]:
        return [s for s, d in self._dist.items() if d == distance]


def bfs_min_plan(
    problem: Problem,
    from_state: BlocksState | None = None,
    block_limit: int = DEFAULT_BLOCK_LIMIT,
) -> tuple[int, frozenset[BlockAction]]:
    """(optimal plan length, actions starting some optimal plan) from a state."""
    oracle = PlanOracle(problem, block_limit=block_limit)
    state = problem.initial if from_state is None else from_state
    return oracle.min_plan_length(state), oracle.first_optimal_actions(state)


def verifier_progress(
    problem: Problem,
    state: BlocksState,
    oracle: PlanOracle | None = None,
) -> float:
    oracle = oracle or PlanOracle(problem)
    return oracle.progress(state)
