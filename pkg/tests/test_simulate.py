"""Seeded rollouts and empirical value estimates."""

import io
import json

import numpy as np
import pytest

import otzposg as oz

from conftest import REWARD, make_dynamic_model, make_static_model


@pytest.fixture(scope="module")
def static_bundle():
    model = make_static_model()
    return model, oz.solve_game(model, horizon=1)


@pytest.fixture(scope="module")
def dynamic_bundle():
    model = make_dynamic_model()
    return model, oz.solve_game(model, horizon=2)


def test_deterministic_model_gives_deterministic_trace():
    transition = np.zeros((2, 2, 2, 2))
    transition[..., 1] = 1.0  # always move to the second state
    observation_fn = np.array([[1.0], [1.0]])
    reward = np.array([[[9.0, 9.0], [9.0, 9.0]], [[1.0, 1.0], [1.0, 1.0]]])
    model = oz.build_model(transition, observation_fn, reward, [1.0, 0.0])
    bundle = oz.solve_game(model, horizon=2)
    traces = {oz.rollout(model, bundle, seed, 0).cumulative_reward for seed in range(5)}
    assert traces == {10.0}  # 9 from the first stage, 1 from the second


def test_trace_reproducible_and_structured(static_bundle):
    model, bundle = static_bundle
    a = oz.rollout(model, bundle, seed=42, episode=3)
    b = oz.rollout(model, bundle, seed=42, episode=3)
    assert a.to_json() == b.to_json()
    assert len(a.records) == bundle.horizon
    assert a.initial_state == 0  # b0 = (1, 0)
    rec = a.records[0]
    assert rec.belief == (1.0, 0.0)
    assert rec.reward == REWARD[0, rec.leader_action, rec.follower_action]


def test_static_rollout_law(static_bundle):
    # from the first state the leader mixes (5/7, 2/7) and the follower's
    # tie-broken response is the first column: rewards 4 and 2 only
    model, bundle = static_bundle
    rewards = [oz.rollout(model, bundle, seed=1, episode=i).cumulative_reward for i in range(500)]
    assert set(rewards) <= {4.0, 2.0}
    share_top = sum(1 for r in rewards if r == 4.0) / len(rewards)
    assert abs(share_top - 5 / 7) < 0.06


def test_trace_beliefs_match_reference_updates(dynamic_bundle):
    model, bundle = dynamic_bundle
    for episode in range(25):
        trace = oz.rollout(model, bundle, seed=11, episode=episode)
        belief = np.asarray(bundle.belief)
        for rec in trace.records:
            assert rec.belief == pytest.approx(belief, abs=0.0)
            upd = oz.update_belief(
                belief, (rec.leader_action, rec.follower_action), rec.observation, model
            )
            assert upd.defined
            belief = upd.next_belief


def test_estimate_matches_exact_value(static_bundle):
    model, bundle = static_bundle
    est = oz.estimate_value(model, bundle, n_episodes=100_000, seed=7)
    exact = bundle.leader_value(bundle.belief)
    assert abs(est.mean - exact) <= 4.0 * est.stderr
    assert est.stderr == pytest.approx(0.9035 / np.sqrt(100_000), rel=0.05)


def test_estimate_seeded_determinism(static_bundle):
    model, bundle = static_bundle
    a = oz.estimate_value(model, bundle, n_episodes=2000, seed=5)
    b = oz.estimate_value(model, bundle, n_episodes=2000, seed=5)
    assert a == b
    c = oz.estimate_value(model, bundle, n_episodes=2000, seed=6)
    assert c.mean != a.mean


def test_estimate_is_prefix_stable(static_bundle):
    # substreams are indexed by episode, so a longer run extends a shorter
    # one instead of reshuffling it
    model, bundle = static_bundle
    short = [oz.rollout(model, bundle, seed=9, episode=i).cumulative_reward for i in range(50)]
    est = oz.estimate_value(model, bundle, n_episodes=50, seed=9)
    assert est.mean == pytest.approx(sum(short) / 50, abs=1e-12)


def test_single_episode_has_no_stderr(static_bundle):
    model, bundle = static_bundle
    est = oz.estimate_value(model, bundle, n_episodes=1, seed=0)
    assert est.stderr is None
    with pytest.raises(ValueError):
        oz.estimate_value(model, bundle, n_episodes=0, seed=0)


def test_zero_reward_model_estimates_zero():
    transition = np.zeros((2, 2, 2, 2))
    transition[..., :] = [0.5, 0.5]
    model = oz.build_model(
        transition, np.array([[1.0], [1.0]]), np.zeros((2, 2, 2)), [0.5, 0.5]
    )
    # zero rewards sit below the positivity floor, so the solver shifts
    bundle = oz.solve_game(model, horizon=1)
    assert bundle.shift.c == 1.0
    est = oz.estimate_value(model, bundle, n_episodes=2000, seed=1)
    assert est.mean == 0.0
    assert bundle.leader_value(bundle.belief) == pytest.approx(0.0, abs=1e-9)


def test_dynamic_estimate_consistent(dynamic_bundle):
    model, bundle = dynamic_bundle
    est = oz.estimate_value(model, bundle, n_episodes=60_000, seed=13)
    exact = bundle.leader_value(bundle.belief)
    assert abs(est.mean - exact) <= 4.0 * est.stderr


def test_estimate_at_mixed_belief():
    model = make_static_model(initial_belief=(0.5, 0.5))
    bundle = oz.solve_game(model, horizon=1)
    assert bundle.leader_value(bundle.belief) == pytest.approx(5.0, abs=1e-9)
    est = oz.estimate_value(model, bundle, n_episodes=100_000, seed=19)
    assert abs(est.mean - 5.0) <= 4.0 * est.stderr


def test_estimate_within_four_stderr_repeatedly(static_bundle):
    # the 4-stderr envelope should hold in (at least) 95% of repetitions
    model, bundle = static_bundle
    exact = bundle.leader_value(bundle.belief)
    hits = 0
    for seed in range(20):
        est = oz.estimate_value(model, bundle, n_episodes=2000, seed=seed)
        hits += abs(est.mean - exact) <= 4.0 * est.stderr
    assert hits >= 19


def test_epsilon_rollout_uses_mixed_policy():
    model = make_dynamic_model()
    bundle = oz.solve_game(model, horizon=2, epsilon=1.0)
    est = oz.estimate_value(model, bundle, n_episodes=60_000, seed=3)
    exact_l, _ = bundle.root_values()
    assert est.mean <= exact_l + 1.0 + 4.0 * est.stderr


def test_traces_export_jsonl(static_bundle):
    model, bundle = static_bundle
    buf = io.StringIO()
    traces = [oz.rollout(model, bundle, seed=2, episode=i) for i in range(3)]
    oz.write_traces(traces, buf)
    lines = buf.getvalue().strip().split("\n")
    assert len(lines) == 3
    doc = json.loads(lines[0])
    assert doc["episode"] == 0
    assert len(doc["stages"]) == bundle.horizon
