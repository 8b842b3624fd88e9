"""Environment rules: parsing, legality, transitions, goals, serialization."""

from __future__ import annotations

import numpy as np
import pytest

from scmcts import (
    ActionKind,
    BlockAction,
    BlocksState,
    IllegalAction,
    MalformedAction,
    Problem,
    apply,
    is_goal,
    legal_actions,
    make_state,
    parse_action,
    problem_from_dict,
    problem_to_dict,
    state_from_dict,
    state_to_dict,
)

# ---------------------------------------------------------------------------
# actions and parsing


def test_action_text_round_trips_through_parse():
    actions = [
        BlockAction(ActionKind.PICK_UP, "red"),
        BlockAction(ActionKind.PUT_DOWN, "blue"),
        BlockAction(ActionKind.STACK, "red", "blue"),
        BlockAction(ActionKind.UNSTACK, "orange", "yellow"),
    ]
    for action in actions:
        assert parse_action(action.text()) == action


def test_parse_tolerates_spacing_but_not_grammar():
    assert parse_action("  pick  up the red block ") == BlockAction(ActionKind.PICK_UP, "red")
    for bad in ("grab the red block", "stack the red block", "pick up red block", ""):
        with pytest.raises(MalformedAction):
            parse_action(bad)


def test_parse_rejects_block_stacked_on_itself():
    with pytest.raises(MalformedAction):
        parse_action("stack the red block on top of the red block")


def test_action_target_arity_enforced():
    with pytest.raises(ValueError):
        BlockAction(ActionKind.PICK_UP, "red", "blue")
    with pytest.raises(ValueError):
        BlockAction(ActionKind.STACK, "red")


# ---------------------------------------------------------------------------
# states


def test_make_state_derives_clear_set():
    state = make_state(on=[("red", "blue")], table=["blue", "orange"])
    assert state.clear == frozenset({"red", "orange"})
    assert state.hand_empty
    assert state.support_of("red") == "blue"
    assert state.support_of("blue") is None


def test_state_validation_catches_inconsistencies():
    with pytest.raises(ValueError):  # two blocks on one support
        BlocksState(
            on=frozenset({("a", "c"), ("b", "c")}),
            on_table=frozenset({"c"}),
            clear=frozenset({"a", "b"}),
        )
    with pytest.raises(ValueError):  # cyclic stack never reaches the table
        BlocksState(
            on=frozenset({("a", "b"), ("b", "a")}),
            on_table=frozenset(),
            clear=frozenset(),
        )
    with pytest.raises(ValueError):  # wrong clear set
        BlocksState(
            on=frozenset({("a", "b")}),
            on_table=frozenset({"b"}),
            clear=frozenset({"a", "b"}),
        )


def test_validate_against_declared_blocks():
    state = make_state(table=["a", "b"])
    state.validate(["a", "b"])
    with pytest.raises(ValueError):
        state.validate(["a", "b", "c"])


# ---------------------------------------------------------------------------
# legal actions


def test_clear_table_block_can_be_picked_up_not_stacked():
    state = make_state(table=["a", "b"])
    acts = legal_actions(state)
    assert BlockAction(ActionKind.PICK_UP, "a") in acts
    assert all(a.kind is not ActionKind.STACK for a in acts)


def test_holding_offers_exactly_put_down_and_stacks():
    state = make_state(table=["b"], holding="a")
    assert legal_actions(state) == [
        BlockAction(ActionKind.PUT_DOWN, "a"),
        BlockAction(ActionKind.STACK, "a", "b"),
    ]


def _reference_legal_actions(state: BlocksState) -> set[BlockAction]:
    """Slow rule-by-rule recomputation, independent of the library's loops."""
    out: set[BlockAction] = set()
    blocks = (
        {t for t, _ in state.on}
        | {b for _, b in state.on}
        | set(state.on_table)
        | ({state.holding} if state.holding else set())
    )
    for x in blocks:
        if state.hand_empty and x in state.clear and x in state.on_table:
            out.add(BlockAction(ActionKind.PICK_UP, x))
        if state.holding == x:
            out.add(BlockAction(ActionKind.PUT_DOWN, x))
        for y in blocks:
            if x == y:
                continue
            if state.holding == x and y in state.clear:
                out.add(BlockAction(ActionKind.STACK, x, y))
            if state.hand_empty and (x, y) in state.on and x in state.clear:
                out.add(BlockAction(ActionKind.UNSTACK, x, y))
    return out


def test_legal_actions_match_reference_on_random_states():
    rng = np.random.default_rng(7)
    state = make_state(table=["a", "b", "c", "d"])
    for _ in range(300):
        acts = legal_actions(state)
        assert set(acts) == _reference_legal_actions(state)
        # Deterministic order: put-down first when holding, then one action
        # per clear block in name order.
        if state.hand_empty:
            assert [a.subject for a in acts] == sorted(state.clear)
        else:
            assert acts[0].kind is ActionKind.PUT_DOWN
            assert [a.target for a in acts[1:]] == sorted(state.clear)
        state = apply(state, acts[int(rng.integers(len(acts)))])


# ---------------------------------------------------------------------------
# transitions


def test_unstack_then_put_down_rules():
    state = make_state(on=[("a", "b")], table=["b"])
    held = apply(state, BlockAction(ActionKind.UNSTACK, "a", "b"))
    assert held.holding == "a"
    assert "b" in held.clear
    down = apply(held, BlockAction(ActionKind.PUT_DOWN, "a"))
    assert down.hand_empty
    assert "a" in down.on_table and "a" in down.clear


def test_preconditions_raise_illegal_action():
    state = make_state(on=[("a", "b")], table=["b", "c"])
    with pytest.raises(IllegalAction):
        apply(state, BlockAction(ActionKind.PICK_UP, "a"))  # not on the table
    with pytest.raises(IllegalAction):
        apply(state, BlockAction(ActionKind.UNSTACK, "b", "a"))  # wrong orientation
    with pytest.raises(IllegalAction):
        apply(state, BlockAction(ActionKind.PUT_DOWN, "a"))  # hand empty
    held = apply(state, BlockAction(ActionKind.UNSTACK, "a", "b"))
    with pytest.raises(IllegalAction):
        apply(held, BlockAction(ActionKind.PICK_UP, "c"))  # hand full
    with pytest.raises(IllegalAction):
        apply(held, BlockAction(ActionKind.STACK, "c", "b"))  # not holding c


def test_random_walk_preserves_state_invariants():
    # Every applied action must leave a state that passes its own validation
    # and places exactly the original blocks.
    rng = np.random.default_rng(11)
    blocks = ("a", "b", "c", "d", "e")
    state = make_state(table=blocks)
    for _ in range(10_000):
        acts = legal_actions(state)
        state = apply(state, acts[int(rng.integers(len(acts)))])
        state.validate(blocks)


def test_every_action_is_invertible():
    inverse = {
        ActionKind.PICK_UP: lambda a: BlockAction(ActionKind.PUT_DOWN, a.subject),
        ActionKind.PUT_DOWN: lambda a: BlockAction(ActionKind.PICK_UP, a.subject),
        ActionKind.STACK: lambda a: BlockAction(ActionKind.UNSTACK, a.subject, a.target),
        ActionKind.UNSTACK: lambda a: BlockAction(ActionKind.STACK, a.subject, a.target),
    }
    rng = np.random.default_rng(13)
    state = make_state(table=["a", "b", "c", "d"])
    for _ in range(500):
        acts = legal_actions(state)
        action = acts[int(rng.integers(len(acts)))]
        nxt = apply(state, action)
        assert apply(nxt, inverse[action.kind](action)) == state
        state = nxt


# ---------------------------------------------------------------------------
# goals


def test_goal_is_subset_of_on_relation():
    stacked = make_state(on=[("orange", "blue")], table=["blue"])
    problem = Problem(
        blocks=("orange", "blue"),
        initial=stacked,
        goal=frozenset({("orange", "blue")}),
    )
    assert is_goal(stacked, problem)
    apart = make_state(table=["orange", "blue"])
    assert not is_goal(apart, problem)


def test_empty_goal_is_always_satisfied():
    state = make_state(table=["a", "b"])
    problem = Problem(blocks=("a", "b"), initial=state, goal=frozenset())
    assert is_goal(state, problem)
    assert is_goal(apply(state, BlockAction(ActionKind.PICK_UP, "a")), problem)


def test_goal_pair_not_satisfied_while_block_is_held():
    state = make_state(table=["b"], holding="a")
    problem = Problem(
        blocks=("a", "b"),
        initial=make_state(table=["a", "b"]),
        goal=frozenset({("a", "b")}),
    )
    assert not is_goal(state, problem)


def test_problem_validation():
    state = make_state(table=["a", "b"])
    with pytest.raises(ValueError):
        Problem(blocks=("a", "a"), initial=make_state(table=["a"]), goal=frozenset())
    with pytest.raises(ValueError):
        Problem(blocks=("a", "b"), initial=state, goal=frozenset({("a", "c")}))
    with pytest.raises(ValueError):
        Problem(blocks=("a", "b"), initial=state, goal=frozenset({("a", "a")}))
    with pytest.raises(ValueError):
        Problem(blocks=("a", "b"), initial=state, goal=frozenset(), min_plan_length=-1)
    with pytest.raises(ValueError):
        Problem(blocks=("a", "b"), initial=state, goal=frozenset(), difficulty="medium")


# ---------------------------------------------------------------------------
# serialization


def test_state_json_round_trip():
    for state in (
        make_state(on=[("a", "b"), ("b", "c")], table=["c", "d"]),
        make_state(table=["a", "b"], holding="c"),
    ):
        assert state_from_dict(state_to_dict(state)) == state


def test_state_dict_rejects_contradictions():
    d = state_to_dict(make_state(table=["a"], holding="b"))
    d["hand_empty"] = True
    with pytest.raises(ValueError):
        state_from_dict(d)
    d2 = state_to_dict(make_state(on=[("a", "b")], table=["b"]))
    d2["clear"] = ["a", "b"]
    with pytest.raises(ValueError):
        state_from_dict(d2)


def test_problem_json_round_trip(swap_problem):
    again = problem_from_dict(problem_to_dict(swap_problem))
    assert again == swap_problem
    assert again.min_plan_length == 4
