"""Tests for the tabular MDP core: validation, policies, rollouts and dynamic programming."""

import numpy as np
import pytest

from config import EnvSpec
from environments import build_effects, build_env
from errors import BadDiscount, BadInitialDistribution, DimensionMismatch, NonStochasticRow, PreconditionError
from mdp_core import (
    RewardTable,
    TabularMdp,
    Trajectory,
    greedy_policy,
    load_mdp,
    policy_evaluation,
    rollout,
    sample_rows,
    save_mdp,
    softmax_policy,
    uniform_policy,
    validate_mdp,
    validate_policy,
    value_iteration,
)
from oracles import random_mdp, random_policy


def two_state_mdp(**overrides):
    kernel = np.array([[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]])
    fields = {"kernel": kernel, "mu": np.array([1.0, 0.0]), "gamma": 0.9}
    fields.update(overrides)
    return TabularMdp(**fields)


def test_valid_mdp_passes():
    validate_mdp(two_state_mdp())


def test_non_stochastic_row_names_the_offending_pair():
    kernel = np.array([[[1.0, 0.0], [0.0, 1.0]], [[0.5, 0.4], [0.0, 1.0]]])
    with pytest.raises(NonStochasticRow) as info:
        validate_mdp(two_state_mdp(kernel=kernel))
    assert "0.9" in info.value.message


@pytest.mark.parametrize("gamma", [0.0, 1.0, 1.5])
def test_discount_outside_open_interval_is_rejected(gamma):
    with pytest.raises(BadDiscount):
        validate_mdp(two_state_mdp(gamma=gamma))


def test_initial_distribution_must_sum_to_one():
    with pytest.raises(BadInitialDistribution):
        validate_mdp(two_state_mdp(mu=np.array([0.5, 0.4])))


def test_mu_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        validate_mdp(two_state_mdp(mu=np.array([1.0, 0.0, 0.0])))


def test_mdp_arrays_are_read_only():
    mdp = two_state_mdp()
    with pytest.raises(ValueError):
        mdp.kernel[0, 0, 0] = 0.5


def test_policy_validation():
    mdp = two_state_mdp()
    validate_policy(uniform_policy(2, 2), mdp)
    with pytest.raises(DimensionMismatch):
        validate_policy(uniform_policy(3, 2), mdp)
    with pytest.raises(NonStochasticRow):
        validate_policy(np.array([[0.5, 0.6], [0.5, 0.5]]), mdp)


def test_greedy_policy_breaks_ties_toward_smallest_action():
    policy = greedy_policy(np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0]]))
    np.testing.assert_array_equal(policy, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def test_softmax_policy_rows_and_temperature():
    q = np.array([[0.0, 1.0], [3.0, 3.0]])
    policy = softmax_policy(q, 1.0)
    np.testing.assert_allclose(policy.sum(axis=1), 1.0)
    np.testing.assert_allclose(policy[1], [0.5, 0.5])
    assert policy[0, 1] > policy[0, 0]
    with pytest.raises(PreconditionError):
        softmax_policy(q, 0.0)


def test_sample_rows_follows_one_hot_rows(rng):
    probs = np.eye(4)[[2, 0, 3, 1]]
    np.testing.assert_array_equal(sample_rows(probs, rng), [2, 0, 3, 1])


def test_rollout_shape_and_determinism(chain_env):
    mdp, _ = chain_env
    policy = uniform_policy(mdp.n_states, mdp.n_actions)
    first = rollout(mdp, policy, 7, 3)
    second = rollout(mdp, policy, 7, 3)
    assert first.length == 7
    assert len(first.states) == 8
    assert first.states[0] == 0
    assert first == second


def test_rollout_rejects_zero_horizon(chain_env):
    mdp, _ = chain_env
    with pytest.raises(PreconditionError):
        rollout(mdp, uniform_policy(mdp.n_states, mdp.n_actions), 0, 0)


def test_trajectory_length_mismatch():
    with pytest.raises(DimensionMismatch):
        Trajectory(states=(0, 1), actions=(0, 1))


def test_value_iteration_on_deterministic_chain(chain_env):
    mdp, tasks = chain_env
    v, policy = value_iteration(mdp, tasks["goal_right"])
    # pushing right forever into the last state collects 1 per step
    assert v[-1] == pytest.approx(1.0 / (1.0 - mdp.gamma), abs=1e-8)
    np.testing.assert_array_equal(policy.argmax(axis=1), np.ones(mdp.n_states))


def test_policy_evaluation_of_constant_reward(random_instance):
    mdp, policy = random_instance
    v, q = policy_evaluation(mdp, policy, RewardTable("ones", np.ones(mdp.n_states)))
    np.testing.assert_allclose(v, 1.0 / (1.0 - mdp.gamma))
    np.testing.assert_allclose(q, 1.0 / (1.0 - mdp.gamma))


def test_optimal_values_dominate_any_policy(random_instance, rng):
    mdp, policy = random_instance
    reward = RewardTable("random", rng.uniform(-1.0, 1.0, mdp.n_states))
    v_star, _ = value_iteration(mdp, reward)
    v_pi, _ = policy_evaluation(mdp, policy, reward)
    assert np.all(v_star >= v_pi - 1e-8)


def test_save_and_load_mdp(tmp_path, random_instance):
    mdp, _ = random_instance
    save_mdp(mdp, tmp_path / "mdp.json")
    loaded = load_mdp(tmp_path / "mdp.json")
    np.testing.assert_allclose(loaded.kernel, mdp.kernel)
    np.testing.assert_allclose(loaded.mu, mdp.mu)
    assert loaded.gamma == mdp.gamma


def test_policy_evaluation_with_more_states_than_actions(rng):
    mdp = random_mdp(4, 2, 0.9, rng)
    policy = random_policy(4, 2, rng)
    reward = RewardTable("random", rng.uniform(-1.0, 1.0, 4))

    # V <- r_pi + gamma P_pi V, spelled out entry by entry
    r_pi = np.zeros(4)
    p_pi = np.zeros((4, 4))
    for s in range(4):
        for a in range(2):
            for s_next in range(4):
                r_pi[s] += policy[s, a] * mdp.kernel[s, a, s_next] * reward.r[s_next]
                p_pi[s, s_next] += policy[s, a] * mdp.kernel[s, a, s_next]
    expected = np.zeros(4)
    for _ in range(600):
        expected = r_pi + mdp.gamma * p_pi @ expected

    v, q = policy_evaluation(mdp, policy, reward)
    np.testing.assert_allclose(v, expected, atol=1e-10)
    np.testing.assert_allclose(np.sum(policy * q, axis=1), v, atol=1e-10)


def test_long_rollout_visits_states_at_the_stationary_rate(rng):
    mdp = random_mdp(5, 3, 0.9, rng)
    policy = random_policy(5, 3, rng)
    p_pi = np.einsum("sa,sat->st", policy, mdp.kernel)
    eigvals, eigvecs = np.linalg.eig(p_pi.T)
    stationary = np.real(eigvecs[:, np.argmin(np.abs(eigvals - 1.0))])
    stationary /= stationary.sum()

    states = np.array(rollout(mdp, policy, 100_000, rng).states[1:])
    visits = np.bincount(states, minlength=5) / len(states)
    assert 0.5 * np.abs(visits - stationary).sum() < 0.05


def test_four_rooms_values_fall_with_goal_distance():
    spec = EnvSpec(family="four_rooms", size=11, slip=0.0, gamma=0.95)
    mdp, tasks = build_env(spec)
    effects, _, _ = build_effects(spec)
    goal = int(np.argmax(tasks["bottom_right"].r))

    # breadth-first search over reversed moves
    distance = np.full(mdp.n_states, -1)
    distance[goal] = 0
    frontier = [goal]
    while frontier:
        nxt = []
        for target in frontier:
            for s, a in zip(*np.nonzero(effects == target)):
                if distance[s] < 0:
                    distance[s] = distance[target] + 1
                    nxt.append(s)
        frontier = nxt
    assert np.all(distance >= 0)

    v, _ = value_iteration(mdp, tasks["bottom_right"])
    order = np.argsort(distance, kind="stable")
    assert np.all(np.diff(v[order]) <= 1e-7)
    assert np.all(v[distance == 1] > v[distance == 2])
