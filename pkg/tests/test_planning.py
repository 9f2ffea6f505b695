import json
import math
import random

import numpy as np
import pytest

from corpus import brute_force_best, brute_force_returns, planning_corpus, random_domain, reward_for
from pecmdp.compiler import compile_domain
from pecmdp.parser import parse_domain
from pecmdp.planning import (
    PolicyTable,
    RewardSpec,
    available_situations,
    build_reward,
    evaluate_policy,
    simulate,
    solve_finite_horizon,
    solve_stationary,
)
from pecmdp.projection import Query, project

ONE_STEP = """
fluent Lamp takes-values {off, on}
action Flip
instants 0..0
initially-one-of {({Lamp=off}, 1.0)}
Flip & Lamp=off causes-one-of {({Lamp=on}, 0.9), ({}, 0.1)}
Flip & Lamp=on causes-one-of {({Lamp=off}, 0.9), ({}, 0.1)}
Flip performed-at 0 with-prob 0.8
"""


def test_goal_reward(coin_mdp):
    R = build_reward(coin_mdp, RewardSpec(goal={"Lamp": "on"}))
    assert (R[:, :, 1] == 1.0).all() and (R[:, :, 0] == 0.0).all()


def test_action_costs_and_penalty(coin_mdp):
    R = build_reward(coin_mdp, RewardSpec(action_costs={"Flip": 0.2}, step_penalty=0.05))
    flip = coin_mdp.acodec.encode({"Flip"})
    assert np.allclose(R[:, flip, :], -0.25) and np.allclose(R[:, 0, :], -0.05)


def test_composite_costs_add():
    from test_compiler import _domain, _pp
    mdp = compile_domain(_domain(pprops=[_pp("A", "0", 0.5), _pp("B", "0", 0.5)]))
    R = build_reward(mdp, RewardSpec(action_costs={"A": 0.2, "B": 0.3}))
    assert np.allclose(R[:, mdp.acodec.encode({"A", "B"}), :], -0.5)


def test_reward_spec_json():
    spec = RewardSpec.from_json('{"goal": "Lamp=on", "action_costs": {"Flip": 0.1}, "discount": 0.9}')
    assert spec.goal == {"Lamp": "on"}
    assert RewardSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec
    with pytest.raises(ValueError):
        RewardSpec.from_dict({"goal": "Lamp=on", "bonus": 1})
    with pytest.raises(ValueError):
        RewardSpec(goal={"Lamp": "on"}, discount=0.0)


def test_one_step_choice():
    mdp = compile_domain(parse_domain(ONE_STEP))
    R = build_reward(mdp, RewardSpec(goal={"Lamp": "on"}))
    policy, V = solve_finite_horizon(mdp, R)
    assert mdp.acodec[policy.situation(0, 0)] == {"Flip"}
    assert V[0, 0] == pytest.approx(0.9, abs=1e-15)
    assert policy.situation(1, 0) == 0 and V[0, 1] == 1.0


def test_zero_reward_prefers_null(coin_mdp):
    R = np.zeros((coin_mdp.n_states, coin_mdp.n_situations, coin_mdp.n_states))
    policy, V = solve_finite_horizon(coin_mdp, R)
    assert (policy.choice == 0).all() and (V == 0).all()
    policy, V = solve_stationary(coin_mdp, R, 0.9)
    assert (policy.choice == 0).all() and (V == 0).all()


def test_coin_lamp_plan(coin_mdp):
    R = build_reward(coin_mdp, RewardSpec(goal={"Lamp": "on"}))
    policy, V = solve_finite_horizon(coin_mdp, R)
    assert policy.situation(0, 1) == 1 and policy.situation(1, 1) == 0
    assert float(coin_mdp.p0 @ V[0]) == pytest.approx(evaluate_policy(coin_mdp, policy, R), abs=1e-12)
    best, _ = brute_force_best(coin_mdp, R, 1.0)
    assert float(coin_mdp.p0 @ V[0]) == pytest.approx(best, abs=1e-12)


def test_available_situations(coin_mdp):
    assert available_situations(coin_mdp, 0).tolist() == [0]
    assert available_situations(coin_mdp, 1).tolist() == [0, 1]
    assert available_situations(coin_mdp, 1, strict=True).tolist() == [0, 1]


def test_pruned_enumeration_agrees_with_full_enumeration():
    for d, spec in planning_corpus()[:12]:
        mdp = compile_domain(d)
        R = reward_for(mdp, spec)
        full = max(r for r, _ in brute_force_returns(mdp, R, spec.discount))
        best, _ = brute_force_best(mdp, R, spec.discount)
        assert best == pytest.approx(full, abs=1e-12)


def test_finite_horizon_is_optimal():
    for d, spec in planning_corpus()[:30]:
        mdp = compile_domain(d)
        R = reward_for(mdp, spec)
        policy, V = solve_finite_horizon(mdp, R, spec.discount)
        best, _ = brute_force_best(mdp, R, spec.discount)
        exact = evaluate_policy(mdp, policy, R, spec.discount)
        assert exact == pytest.approx(best, abs=1e-9)
        assert float(mdp.p0 @ V[0]) == pytest.approx(exact, abs=1e-9)


def test_two_fluent_horizon_two_against_every_policy():
    rng = random.Random(3)
    checked = 0
    while checked < 5:
        d = random_domain(rng, max_fluents=2, max_values=2, max_instants=2)
        if len(d.fluents) != 2 or len(d.instants) != 2:
            continue
        mdp = compile_domain(d)
        R = build_reward(mdp, RewardSpec(goal={"F0": "v1"}, action_costs={"A0": 0.1}))
        policy, _ = solve_finite_horizon(mdp, R)
        returns = [r for r, _ in brute_force_returns(mdp, R, 1.0)]
        assert evaluate_policy(mdp, policy, R) == pytest.approx(max(returns), abs=1e-12)
        checked += 1


def test_reward_scaling_keeps_policy():
    for d, spec in planning_corpus()[:20]:
        mdp = compile_domain(d)
        R = reward_for(mdp, spec)
        p1, V1 = solve_finite_horizon(mdp, R, spec.discount)
        p2, V2 = solve_finite_horizon(mdp, 2.0 * R, spec.discount)
        assert p1 == p2 and np.allclose(V2, 2.0 * V1)


def _always_flip(n_instants):
    lines = ONE_STEP.replace("instants 0..0", f"instants 0..{n_instants - 1}").splitlines()
    lines = [x for x in lines if "performed-at" not in x]
    lines += [f"Flip performed-at {t} with-prob 0.8" for t in range(n_instants)]
    return parse_domain("\n".join(lines))


def test_stationary_matches_long_finite_horizon():
    mdp = compile_domain(_always_flip(50))
    R = build_reward(mdp, RewardSpec(goal={"Lamp": "on"}, action_costs={"Flip": 0.05}))
    sp, Vs = solve_stationary(mdp, R, 0.9, epsilon=1e-12)
    fp, Vf = solve_finite_horizon(mdp, R, 0.9)
    # truncation after 50 steps loses at most 0.9**50 / (1 - 0.9) of value
    assert np.allclose(Vs, Vf[0], atol=0.9**50 / 0.1)
    assert sp.choice.tolist() == fp.choice[0].tolist()
    assert mdp.acodec[sp.situation(0)] == {"Flip"} and sp.situation(1) == 0
    # the goal is one successful flip away from off
    assert Vs[0] >= 0.9 * 0.9 - 0.05


def test_stationary_geometric_series():
    # both states behave identically: value is the constant per-step reward over (1 - discount)
    mdp = compile_domain(parse_domain(ONE_STEP))
    R = build_reward(mdp, RewardSpec(step_penalty=0.1))
    _, V = solve_stationary(mdp, R, 0.9, epsilon=1e-12)
    assert np.allclose(V, -0.1 / (1 - 0.9), atol=1e-9)


def test_policy_json_round_trip(coin_mdp):
    R = build_reward(coin_mdp, RewardSpec(goal={"Lamp": "on"}))
    policy, _ = solve_finite_horizon(coin_mdp, R)
    doc = json.loads(json.dumps(policy.to_json(coin_mdp)))
    assert PolicyTable.from_json(doc, coin_mdp) == policy
    mu = policy.as_tensor(coin_mdp)
    assert mu.shape == coin_mdp.policy.shape and (mu.sum(axis=2) == 1).all()


# Simulation

def test_simulation_matches_projection(coin_mdp):
    result = simulate(coin_mdp, seed=42, episodes=100_000)
    exact = project(coin_mdp, Query({"Lamp": "on"}, "2"))
    sigma = math.sqrt(exact * (1 - exact) / result.episodes)
    assert abs(result.frequency(coin_mdp, {"Lamp": "on"}, 2) - exact) <= 3 * sigma


def test_simulation_is_reproducible(coin_mdp):
    a = simulate(coin_mdp, seed=7, episodes=500, shards=3)
    b = simulate(coin_mdp, seed=7, episodes=500, shards=3)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)


def test_zero_episodes(coin_mdp):
    result = simulate(coin_mdp, seed=1, episodes=0)
    assert result.episodes == 0 and result.summary() == {"episodes": 0}


def test_deterministic_run_repeats():
    text = ONE_STEP.replace("0.9), ({}, 0.1)", "1.0)").replace("with-prob 0.8", "with-prob 1.0")
    mdp = compile_domain(parse_domain(text))
    result = simulate(mdp, seed=3, episodes=50)
    assert (result.states == result.states[0]).all()


def test_mean_return_converges(coin_mdp):
    R = build_reward(coin_mdp, RewardSpec(goal={"Lamp": "on"}, action_costs={"Flip": 0.1}))
    policy, _ = solve_finite_horizon(coin_mdp, R)
    exact = evaluate_policy(coin_mdp, policy, R)
    result = simulate(coin_mdp, policy, seed=42, episodes=50_000, reward=R)
    stderr = result.returns.std(ddof=1) / math.sqrt(result.episodes)
    assert abs(result.returns.mean() - exact) <= 3 * stderr
