"""Few-shot prompt rendering: layout, demo selection, state descriptions."""

from __future__ import annotations

import numpy as np
import pytest

from scmcts import (
    Demonstration,
    MissingDemonstrations,
    PlanOracle,
    Problem,
    PromptTemplate,
    describe_goal,
    describe_state,
    make_state,
    render_prompt,
)
from scmcts.dataset import generate_problem


def _pool(lengths: list[int], seed: int = 0) -> tuple[Demonstration, ...]:
    rng = np.random.default_rng(seed)
    demos = []
    for length in lengths:
        problem = generate_problem(rng, ("a", "b", "c", "d"), length)
        demos.append(Demonstration(problem, tuple(PlanOracle(problem).optimal_plan())))
    return tuple(demos)


def test_prompt_opens_with_domain_preamble(two_step_problem):
    text = render_prompt(two_step_problem, template=PromptTemplate(shots=0))
    assert text.startswith("I am playing with a set of blocks")


def test_prompt_layout_markers(two_step_problem):
    pool = _pool([2, 2, 2, 2])
    text = render_prompt(two_step_problem, template=PromptTemplate(shots=4, pool=pool))
    assert text.count("[STATEMENT]") == 5  # four demos plus the query
    assert text.count("[PLAN]") == 5
    assert text.count("[PLAN END]") == 4  # the query plan stays open
    assert text.rstrip().endswith("[PLAN]")
    assert describe_goal(two_step_problem) in text


def test_history_extends_the_open_plan(two_step_problem):
    oracle = PlanOracle(two_step_problem)
    plan = tuple(oracle.optimal_plan())
    text = render_prompt(two_step_problem, history=plan[:1], template=PromptTemplate(shots=0))
    assert text.endswith(plan[0].text() + "\n")


def test_easy_mode_draws_demos_of_matching_length(two_step_problem):
    pool = _pool([2, 2, 4, 4, 4])
    text = render_prompt(two_step_problem, template=PromptTemplate("easy", 2, pool))
    for demo in pool:
        shown = demo.problem.min_plan_length == 2
        assert (describe_goal(demo.problem) in text) == shown


def test_easy_mode_needs_enough_matching_demos(two_step_problem):
    pool = _pool([4, 4, 4, 4])  # none match the 2-step query
    with pytest.raises(MissingDemonstrations):
        render_prompt(two_step_problem, template=PromptTemplate("easy", 2, pool))


def test_hard_mode_ignores_length(two_step_problem):
    pool = _pool([4, 4, 6, 6])
    text = render_prompt(two_step_problem, template=PromptTemplate("hard", 4, pool))
    assert text.count("[PLAN END]") == 4


def test_demo_sampling_is_seed_driven(two_step_problem):
    pool = _pool([2] * 8)
    template = PromptTemplate("easy", 3, pool)
    a = render_prompt(two_step_problem, template=template, rng=np.random.default_rng(1))
    b = render_prompt(two_step_problem, template=template, rng=np.random.default_rng(1))
    c = render_prompt(two_step_problem, template=template, rng=np.random.default_rng(2))
    assert a == b
    assert a != c


def test_describe_state_clause_order():
    problem = Problem(
        blocks=("red", "blue", "orange"),
        initial=make_state(on=[("red", "blue")], table=["blue", "orange"]),
        goal=frozenset({("orange", "red")}),
    )
    text = describe_state(problem, problem.initial)
    assert text == (
        "the red block is clear, the orange block is clear, the hand is empty, "
        "the red block is on top of the blue block, the blue block is on the table "
        "and the orange block is on the table"
    )
    held = describe_state(problem, make_state(table=["blue", "orange"], holding="red"))
    assert "the hand is holding the red block" in held


def test_template_validation():
    with pytest.raises(ValueError):
        PromptTemplate(difficulty="medium")
    with pytest.raises(ValueError):
        PromptTemplate(shots=-1)
