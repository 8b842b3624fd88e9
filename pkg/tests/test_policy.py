"""Synthetic backend: grammar fidelity, oracle tilt, determinism, self-eval."""

from __future__ import annotations

import dataclasses
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from scmcts import (
    DatasetSpec,
    GreedySampler,
    MalformedAction,
    PlanOracle,
    PolicyContext,
    SyntheticPolicy,
    SyntheticPolicyConfig,
    apply,
    build_action_vocabulary,
    generate_action,
    generate_dataset,
    is_goal,
    legal_actions,
)
from conftest import suite_for

SE_QUESTION = "Is this answer correct/good?"


def _policy(problem, fidelity=0.7, seed=1, temperature=1.0, sef=None):
    sef = fidelity if sef is None else sef
    return SyntheticPolicy(problem, SyntheticPolicyConfig(temperature, fidelity, sef, seed))


# ---------------------------------------------------------------------------
# vocabulary and round-trips


def test_vocabulary_rejects_duplicates_and_keyword_clashes():
    with pytest.raises(ValueError):
        build_action_vocabulary(("red", "red"))
    with pytest.raises(ValueError):
        build_action_vocabulary(("block",))


def test_encode_decode_round_trip(two_step_problem):
    policy = _policy(two_step_problem)
    text = "pick up the red block\nstack the red block on top of the blue block"
    assert policy.decode(policy.encode(text)) == text
    with pytest.raises(ValueError):
        policy.encode("grab the red block")


def test_config_validation():
    with pytest.raises(ValueError):
        SyntheticPolicyConfig(temperature=0.0)
    with pytest.raises(ValueError):
        SyntheticPolicyConfig(fidelity=1.5)
    with pytest.raises(ValueError):
        SyntheticPolicyConfig(self_eval_fidelity=-0.1)


# ---------------------------------------------------------------------------
# distribution shape


def _walk_states(problem, count, seed):
    oracle = PlanOracle(problem)
    states = [s for d in range(oracle.min_plan_length() + 2) for s in oracle.states_at(d)]
    rng = np.random.default_rng(seed)
    idx = rng.integers(len(states), size=count)
    return [states[i] for i in idx], oracle


def test_distributions_are_normalized_along_generated_lines(two_step_problem):
    policy = _policy(two_step_problem, fidelity=0.4)
    rng = np.random.default_rng(2)
    ctx = PolicyContext()
    for _ in range(60):
        dist = policy.next_distribution(ctx)
        assert abs(float(dist.probs.sum()) - 1.0) < 1e-12
        assert (dist.probs >= 0).all()
        ctx = ctx.extended([int(rng.choice(len(dist.probs), p=dist.probs))])


def test_unparseable_line_prefix_raises(two_step_problem):
    policy = _policy(two_step_problem)
    ctx = PolicyContext((policy.token_id("up"),))
    with pytest.raises(MalformedAction):
        policy.next_distribution(ctx)


# ---------------------------------------------------------------------------
# fidelity endpoints


def test_full_fidelity_concentrates_on_the_optimal_action(two_step_problem):
    # Goal red-on-blue from all-on-table: the only distance-reducing first
    # move is picking up red, so after "pick up the" all mass sits on "red".
    policy = _policy(two_step_problem, fidelity=1.0)
    head = policy.next_distribution(PolicyContext())
    assert head.prob_of("pick") == 1.0
    ctx = PolicyContext(policy.encode("pick up the"))
    dist = policy.next_distribution(ctx)
    assert dist.prob_of("red") == 1.0
    assert dist.prob_of("blue") == 0.0 and dist.prob_of("orange") == 0.0


def test_full_fidelity_greedy_walk_is_an_optimal_plan():
    problems = generate_dataset(DatasetSpec(groups={4: 5}), seed=21)
    for problem in problems:
        policy = _policy(problem, fidelity=1.0, seed=3)
        oracle = PlanOracle(problem)
        state = problem.initial
        ctx = PolicyContext()
        steps = 0
        rng = np.random.default_rng(0)
        while not is_goal(state, problem):
            gen = generate_action(policy, ctx, GreedySampler(), rng)
            assert not gen.malformed and not gen.end_of_plan
            assert gen.action in oracle.first_optimal_actions(state)
            state = apply(state, gen.action)
            ctx = gen.ctx
            steps += 1
        assert steps == problem.min_plan_length
        gen = generate_action(policy, ctx, GreedySampler(), rng)
        assert gen.end_of_plan


def test_zero_fidelity_erases_the_seeded_tilt(two_step_problem):
    # With no oracle steering the distribution reduces to the shared word
    # prior, which is identical across differently seeded instances.
    a = _policy(two_step_problem, fidelity=0.0, seed=1)
    b = _policy(two_step_problem, fidelity=0.0, seed=99)
    for ctx in (PolicyContext(), PolicyContext(a.encode("pick up the"))):
        assert np.array_equal(a.next_distribution(ctx).probs, b.next_distribution(ctx).probs)


def test_high_temperature_flattens_toward_uniform(two_step_problem):
    policy = _policy(two_step_problem, fidelity=0.0, temperature=1e4)
    ctx = PolicyContext(policy.encode("pick up the"))
    probs = policy.next_distribution(ctx).probs
    support = probs[probs > 0]
    assert support.size == 3
    assert float(support.max() / support.min()) < 1.001
    assert np.allclose(support, 1.0 / support.size, atol=1e-3)


# ---------------------------------------------------------------------------
# oracle tilt orderings


def _rebased(policy: SyntheticPolicy, state) -> SyntheticPolicy:
    """A copy of `policy` whose empty context starts at `state`."""
    problem = dataclasses.replace(policy.problem, initial=state, min_plan_length=None)
    return SyntheticPolicy(problem, policy.config, policy.oracle, policy.vocabulary)


def _optimal_line_mass(policy, oracle, state) -> float:
    total = 0.0
    for action in oracle.first_optimal_actions(state):
        tokens = policy.encode(action.text())
        scores = policy.score_sequence(PolicyContext(tokens, 0))
        total += math.exp(sum(scores))
    return total


def test_expert_outweighs_amateur_on_optimal_lines():
    problems = generate_dataset(DatasetSpec(groups={2: 4, 4: 4}), seed=17)
    diffs = []
    for problem in problems:
        states, oracle = _walk_states(problem, 180, seed=5)
        expert = _policy(problem, fidelity=0.7, seed=1)
        amateur = _policy(problem, fidelity=0.2, seed=2)
        for state in states:
            if oracle.min_plan_length(state) == 0:
                continue
            e = _optimal_line_mass(_rebased(expert, state), oracle, state)
            a = _optimal_line_mass(_rebased(amateur, state), oracle, state)
            diffs.append(e - a)
    assert len(diffs) >= 1000
    diffs = np.asarray(diffs)
    assert diffs.mean() > 0.15
    assert (diffs > 0).mean() > 0.8


# ---------------------------------------------------------------------------
# scoring consistency


def test_score_sequence_matches_stepwise_distributions(two_step_problem):
    policy = _policy(two_step_problem, fidelity=0.6)
    tokens = policy.encode("pick up the red block\nstack the red block on top of the blue block")
    ctx = PolicyContext(tokens, 0)
    scores = policy.score_sequence(ctx)
    assert len(scores) == len(tokens)
    for pos, score in enumerate(scores):
        dist = policy.next_distribution(PolicyContext(tokens[:pos]))
        assert score == pytest.approx(math.log(float(dist.probs[tokens[pos]])), abs=1e-12)


def test_score_sequence_skips_the_prompt_prefix(two_step_problem):
    policy = _policy(two_step_problem, fidelity=0.6)
    tokens = policy.encode("pick up the red block")
    full = policy.score_sequence(PolicyContext(tokens, 0))
    tail = policy.score_sequence(PolicyContext(tokens, 2))
    assert tail == full[2:]


def test_plan_end_token_appears_only_at_goal(two_step_problem, solved_problem):
    pending = _policy(two_step_problem)
    assert pending.next_distribution(PolicyContext()).prob_of("[") == 0.0
    done = _policy(solved_problem)
    assert done.next_distribution(PolicyContext()).prob_of("[") > 0.0
    # The bracket line only ever closes itself.
    ctx = PolicyContext((done.token_id("["),))
    assert done.next_distribution(ctx).prob_of("\n") == 1.0


# ---------------------------------------------------------------------------
# self-evaluation


def _se_context(policy, line: str) -> PolicyContext:
    return PolicyContext(policy.encode(line + "\n" + SE_QUESTION))


def test_neutral_self_eval_is_a_coin_flip(two_step_problem):
    policy = _policy(two_step_problem, fidelity=0.7, sef=0.5)
    for line in ("pick up the red block", "pick up the orange block"):
        dist = policy.next_distribution(_se_context(policy, line))
        assert dist.prob_of("good") == pytest.approx(0.5, abs=1e-12)
        assert dist.prob_of("bad") == pytest.approx(0.5, abs=1e-12)


def test_high_self_eval_fidelity_tracks_move_quality():
    problems = generate_dataset(DatasetSpec(groups={2: 3, 4: 3, 6: 3}), seed=23)
    good_p, bad_p = [], []
    for problem in problems:
        oracle = PlanOracle(problem)
        policy = _policy(problem, fidelity=0.7, sef=0.9, seed=1)
        for action in legal_actions(problem.initial):
            dist = policy.next_distribution(_se_context(policy, action.text()))
            bucket = good_p if action in oracle.first_optimal_actions() else bad_p
            bucket.append(dist.prob_of("good"))
    assert good_p and bad_p
    assert np.mean(good_p) > np.mean(bad_p)


def test_question_words_are_forced_once_started(two_step_problem):
    policy = _policy(two_step_problem)
    tokens = policy.encode("pick up the red block\nIs this answer")
    dist = policy.next_distribution(PolicyContext(tokens))
    assert dist.prob_of("correct/good?") == 1.0
    # The verdict word closes the question line.
    after = policy.encode("pick up the red block\n" + SE_QUESTION + " good")
    assert policy.next_distribution(PolicyContext(after)).prob_of("\n") == 1.0


# ---------------------------------------------------------------------------
# determinism


def test_same_config_same_distributions(two_step_problem):
    a = _policy(two_step_problem, fidelity=0.65, seed=5)
    b = _policy(two_step_problem, fidelity=0.65, seed=5)
    ctx = PolicyContext(a.encode("pick up the red block\n"))
    assert np.array_equal(a.next_distribution(ctx).probs, b.next_distribution(ctx).probs)
    c = a.clone()
    assert np.array_equal(a.next_distribution(ctx).probs, c.next_distribution(ctx).probs)


def test_distributions_survive_process_boundaries(two_step_problem):
    policy = _policy(two_step_problem, fidelity=0.7, seed=5)
    here = policy.next_distribution(PolicyContext()).probs.tolist()
    script = (
        "import json\n"
        "from scmcts import PolicyContext, Problem, SyntheticPolicy, SyntheticPolicyConfig, make_state\n"
        "problem = Problem(blocks=('red', 'blue', 'orange'),\n"
        "                  initial=make_state(table=['red', 'blue', 'orange']),\n"
        "                  goal=frozenset({('red', 'blue')}), min_plan_length=2)\n"
        "policy = SyntheticPolicy(problem, SyntheticPolicyConfig(1.0, 0.7, 0.7, 5))\n"
        "print(json.dumps(policy.next_distribution(PolicyContext()).probs.tolist()))\n"
    )
    env = {**os.environ, "PYTHONHASHSEED": "31337"}
    out = subprocess.run(
        [sys.executable, "-c", script], env=env, capture_output=True, text=True, check=True
    )
    assert json.loads(out.stdout) == here


def test_suite_builder_gives_roles_distinct_seeds(two_step_problem):
    suite = suite_for(two_step_problem, seed=0)
    assert suite.expert.config.seed != suite.amateur.config.seed
    assert suite.draft is suite.amateur
