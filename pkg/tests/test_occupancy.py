"""Tests for exact occupancy and successor measures."""

import numpy as np
import pytest

from environments import build_env
from config import EnvSpec
from errors import NotDistribution
from mdp_core import RewardTable, policy_evaluation, sample_rows
from occupancy import (
    OccupancyTriple,
    bellman_flow_residual,
    q_from_successor,
    state_occupancy,
    successor_measure,
    triple_occupancy,
    tv_distance,
)
from oracles import random_mdp, random_policy


def test_always_right_on_chain_is_geometric():
    mdp, _ = build_env(EnvSpec(family="chain", n=5, slip=0.0, gamma=0.5))
    right = np.tile([0.0, 1.0], (5, 1))
    rho = state_occupancy(mdp, right).rho
    np.testing.assert_allclose(rho, [0.5, 0.25, 0.125, 0.0625, 0.0625], atol=1e-12)


def test_occupancy_is_a_distribution(random_instance):
    mdp, policy = random_instance
    rho = state_occupancy(mdp, policy).rho
    assert rho.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(rho >= 0.0)


def test_triple_marginals_are_consistent(random_instance):
    mdp, policy = random_instance
    triple = triple_occupancy(mdp, policy)
    assert triple.rho3.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(triple.rho2.sum(axis=1), triple.rho1, atol=1e-14)
    np.testing.assert_allclose(triple.rho1, state_occupancy(mdp, policy).rho, atol=1e-14)


def test_triple_serialization(random_instance):
    mdp, policy = random_instance
    triple = triple_occupancy(mdp, policy)
    np.testing.assert_array_equal(OccupancyTriple.from_dict(triple.to_dict()).rho3, triple.rho3)


def test_successor_rows_carry_discounted_mass(random_instance):
    mdp, policy = random_instance
    m = successor_measure(mdp, policy)
    np.testing.assert_allclose(m.m.sum(axis=2), 1.0 / (1.0 - mdp.gamma), rtol=1e-10)


def test_q_from_successor_matches_policy_evaluation(random_instance, rng):
    mdp, policy = random_instance
    reward = RewardTable("random", rng.standard_normal(mdp.n_states))
    _, q = policy_evaluation(mdp, policy, reward)
    np.testing.assert_allclose(q_from_successor(successor_measure(mdp, policy), reward), q, atol=1e-10)


def test_bellman_flow_holds_for_exact_occupancy(random_instance):
    mdp, policy = random_instance
    residual = bellman_flow_residual(triple_occupancy(mdp, policy), mdp, policy)
    assert np.max(np.abs(residual)) < 1e-12


@pytest.mark.parametrize(
    "p,q,expected",
    [
        ([1.0, 0.0], [0.0, 1.0], 1.0),
        ([0.5, 0.5], [0.5, 0.5], 0.0),
        ([0.5, 0.25, 0.25], [0.25, 0.25, 0.5], 0.25),
    ],
)
def test_tv_distance(p, q, expected):
    assert tv_distance(np.array(p), np.array(q)) == pytest.approx(expected)


def test_tv_distance_rejects_non_distributions():
    with pytest.raises(NotDistribution):
        tv_distance(np.array([0.5, 0.6]), np.array([0.5, 0.5]))
    with pytest.raises(NotDistribution):
        tv_distance(np.array([1.0]), np.array([0.5, 0.5]))


def test_occupancy_matches_simulated_discounted_visits(rng):
    mdp = random_mdp(5, 3, 0.8, rng)
    policy = random_policy(5, 3, rng)
    n_chains, horizon = 100_000, 60

    visits = np.zeros(mdp.n_states)
    state = sample_rows(np.broadcast_to(mdp.mu, (n_chains, mdp.n_states)), rng)
    for t in range(horizon):
        visits += (1.0 - mdp.gamma) * mdp.gamma ** t * np.bincount(state, minlength=mdp.n_states)
        action = sample_rows(policy[state], rng)
        state = sample_rows(mdp.kernel[state, action], rng)
    visits /= visits.sum()

    assert tv_distance(visits, state_occupancy(mdp, policy).rho) < 0.01
