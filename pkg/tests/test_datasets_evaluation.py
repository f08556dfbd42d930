"""Tests for exploratory data, expert generation and policy evaluation."""

import numpy as np
import pytest

from config import EnvSpec, PretrainConfig
from datasets import (
    expert_policy_from_reward,
    generate_expert,
    generate_expert_from_model,
    generate_exploratory_dataset,
    load_expert,
    save_expert,
)
from environments import build_env
from errors import PreconditionError
from evaluation import evaluate_policy_exact, evaluate_policy_mc
from fb_model import pretrain
from mdp_core import RewardTable, uniform_policy


class TestExploratoryDataset:
    def test_exact_size_and_determinism(self, chain_env):
        mdp, _ = chain_env
        first = generate_exploratory_dataset(mdp, 1003, 10, 4)
        second = generate_exploratory_dataset(mdp, 1003, 10, 4)
        assert len(first) == 1003
        np.testing.assert_array_equal(first.s, second.s)
        np.testing.assert_array_equal(first.s_next, second.s_next)

    def test_empty_request(self, chain_env):
        mdp, _ = chain_env
        assert len(generate_exploratory_dataset(mdp, 0, 10, 0)) == 0

    def test_episodes_are_contiguous(self, chain_env):
        mdp, _ = chain_env
        data = generate_exploratory_dataset(mdp, 50, 10, 1)
        # within an episode, each transition starts where the previous one ended
        for start in range(0, 50, 10):
            np.testing.assert_array_equal(data.s[start + 1:start + 10], data.s_next[start:start + 9])
        assert np.all(data.s[::10] == 0)

    def test_chain_is_fully_covered(self, chain_env):
        mdp, _ = chain_env
        data = generate_exploratory_dataset(mdp, 10_000, 20, 0, uniform_starts=True)
        assert np.all(data.coverage() > 0)

    def test_rejects_bad_horizon(self, chain_env):
        mdp, _ = chain_env
        with pytest.raises(PreconditionError):
            generate_exploratory_dataset(mdp, 10, 0, 0)

    def test_novelty_reaches_more_states_than_uniform(self):
        mdp, _ = build_env(EnvSpec(family="four_rooms", size=11, slip=0.0))
        uniform = generate_exploratory_dataset(mdp, 2000, 200, 5)
        novelty = generate_exploratory_dataset(mdp, 2000, 200, 5, source="novelty")
        assert len(np.unique(novelty.s_next)) > len(np.unique(uniform.s_next))

    def test_goal_directed_reaches_the_far_end_of_the_chain(self):
        mdp, _ = build_env(EnvSpec(family="chain", n=10, slip=0.0, gamma=0.9))
        uniform = generate_exploratory_dataset(mdp, 2400, 12, 2)
        directed = generate_exploratory_dataset(mdp, 2400, 12, 2, source="goal_directed", epsilon=0.0)
        assert (directed.s_next == 9).sum() > 3 * (uniform.s_next == 9).sum()
        assert (directed.s_next == 9).sum() > 0

    @pytest.mark.parametrize("kwargs", [{"source": "curious"}, {"source": "novelty", "epsilon": 1.5}])
    def test_rejects_bad_exploration_settings(self, chain_env, kwargs):
        mdp, _ = chain_env
        with pytest.raises(PreconditionError):
            generate_exploratory_dataset(mdp, 10, 5, 0, **kwargs)


class TestExperts:
    def test_greedy_expert_on_deterministic_chain_repeats_itself(self, chain_env):
        mdp, tasks = chain_env
        expert = generate_expert(mdp, tasks["goal_right"], 3, 8, 0.0, 0)
        assert expert.trajectories[0] == expert.trajectories[1] == expert.trajectories[2]
        assert expert.trajectories[0].states == (0, 1, 2, 3, 4, 4, 4, 4, 4)

    @pytest.mark.parametrize("family", ["chain", "cliff", "four_rooms"])
    def test_expert_beats_uniform_on_every_task(self, family):
        mdp, tasks = build_env(EnvSpec(family=family))
        uniform = uniform_policy(mdp.n_states, mdp.n_actions)
        for reward in tasks.values():
            expert = expert_policy_from_reward(mdp, reward, 0.0)
            assert evaluate_policy_exact(mdp, expert, reward) >= evaluate_policy_exact(mdp, uniform, reward)

    def test_save_and_load(self, tmp_path, chain_env):
        mdp, tasks = chain_env
        expert = generate_expert(mdp, tasks["goal_middle"], 2, 5, 0.1, 3)
        save_expert(expert, tmp_path / "expert.json")
        loaded = load_expert(tmp_path / "expert.json")
        assert loaded.trajectories == expert.trajectories

    def test_expert_from_pretrained_model(self, chain_env):
        mdp, tasks = chain_env
        data = generate_exploratory_dataset(mdp, 500, 10, 0, uniform_starts=True)
        model = pretrain(data, PretrainConfig(steps=10, batch_size=16, d=4))
        expert = generate_expert_from_model(mdp, model, data, tasks["goal_right"], 2, 6, 0)
        assert len(expert) == 12


class TestEvaluation:
    def test_constant_rewards(self, random_instance):
        mdp, policy = random_instance
        ones = RewardTable("ones", np.ones(mdp.n_states))
        assert evaluate_policy_exact(mdp, policy, ones) == pytest.approx(1.0 / (1.0 - mdp.gamma))
        assert evaluate_policy_exact(mdp, policy, RewardTable("zero", np.zeros(mdp.n_states))) == 0.0

    def test_monte_carlo_agrees_with_exact(self, random_instance, rng):
        mdp, policy = random_instance
        reward = RewardTable("random", rng.uniform(0.0, 1.0, mdp.n_states))
        mean, stderr = evaluate_policy_mc(mdp, policy, reward, 2000, 9)
        assert abs(mean - evaluate_policy_exact(mdp, policy, reward)) <= 4.0 * stderr

    def test_monte_carlo_needs_episodes(self, random_instance):
        mdp, policy = random_instance
        with pytest.raises(PreconditionError):
            evaluate_policy_mc(mdp, policy, RewardTable("zero", np.zeros(mdp.n_states)), 0)
