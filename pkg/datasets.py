"""Exploratory transition data and expert demonstrations on the nominal dynamics."""

import json
from pathlib import Path

import numpy as np
from loguru import logger

from base_inference import ExpertDataset
from errors import PreconditionError
from fb_model import FbModel, TransitionDataset, policy_from_latent, z_from_reward
from mdp_core import (
    RewardTable,
    RngSeed,
    TabularMdp,
    bellman_q,
    greedy_policy,
    make_rng,
    rollout,
    sample_rows,
    softmax_policy,
    value_iteration,
)


EXPLORATION_SOURCES = ("uniform", "novelty", "goal_directed")


def _goal_directed_actions(mdp: TabularMdp, targets: np.ndarray) -> np.ndarray:
    """toward[t, s]: greedy action at s for reaching target state t, for every drawn target."""
    toward = np.zeros((mdp.n_states, mdp.n_states), dtype=np.int64)
    for target in np.unique(targets):
        reward = RewardTable(f"reach_{target}", np.eye(mdp.n_states)[target])
        v, _ = value_iteration(mdp, reward, tol=1e-8)
        toward[target] = bellman_q(mdp, reward, v).argmax(axis=1)
    return toward


def generate_exploratory_dataset(mdp: TabularMdp, n_transitions: int, horizon: int, rng: RngSeed,
                                 uniform_starts: bool = False, source: str = "uniform",
                                 epsilon: float = 0.2) -> TransitionDataset:
    """Exploration rollouts of length `horizon`, flattened and cut to exactly n_transitions.

    Episodes start from mu, or from a uniformly drawn state with uniform_starts.
    `source` picks the behaviour policy:
      - uniform: uniformly random actions
      - novelty: the action with the largest expected count bonus 1/sqrt(1 + N(s')),
        N counted over every episode so far
      - goal_directed: each episode heads greedily for its own uniformly drawn target state
    The last two act uniformly at random with probability epsilon.
    """
    if n_transitions < 0 or horizon < 1:
        raise PreconditionError(f"Need n_transitions >= 0 and horizon >= 1, got {n_transitions}, {horizon}",
                                component="dataset")
    if source not in EXPLORATION_SOURCES:
        raise PreconditionError(f"Unknown exploration source '{source}'",
                                suggestions=[f"Sources: {', '.join(EXPLORATION_SOURCES)}"], component="dataset")
    if not 0.0 <= epsilon <= 1.0:
        raise PreconditionError(f"epsilon must lie in [0, 1], got {epsilon}", component="dataset")
    rng = make_rng(rng)
    n_states, n_actions = mdp.n_states, mdp.n_actions
    n_episodes = -(-n_transitions // horizon)

    start_probs = np.full(n_states, 1.0 / n_states) if uniform_starts else mdp.mu
    state = sample_rows(np.broadcast_to(start_probs, (n_episodes, n_states)), rng)
    counts = np.bincount(state, minlength=n_states).astype(np.float64)
    if source == "goal_directed" and n_episodes:
        targets = rng.integers(n_states, size=n_episodes)
        toward = _goal_directed_actions(mdp, targets)

    s_cols, a_cols, next_cols = [], [], []
    for _ in range(horizon if n_episodes else 0):
        action = rng.integers(n_actions, size=n_episodes)
        if source != "uniform":
            if source == "novelty":
                bonus = mdp.kernel[state] @ (1.0 / np.sqrt(1.0 + counts))
                # random tie-break among equally novel actions
                chosen = np.argmax(bonus + 1e-9 * rng.random(bonus.shape), axis=1)
            else:
                chosen = toward[targets, state]
            action = np.where(rng.random(n_episodes) < epsilon, action, chosen)
        nxt = sample_rows(mdp.kernel[state, action], rng)
        counts += np.bincount(nxt, minlength=n_states)
        s_cols.append(state)
        a_cols.append(action)
        next_cols.append(nxt)
        state = nxt

    def flatten(cols):
        # episode-major order
        return np.stack(cols, axis=1).reshape(-1)[:n_transitions] if cols else np.zeros(0, dtype=np.int64)

    dataset = TransitionDataset(s=flatten(s_cols), a=flatten(a_cols), s_next=flatten(next_cols),
                                n_states=n_states, n_actions=n_actions)
    missing = int((dataset.coverage() == 0).sum())
    if n_transitions and missing:
        logger.warning(f"Exploratory data leaves {missing}/{n_states * n_actions} (s, a) pairs unvisited")
    return dataset


def expert_policy_from_reward(mdp: TabularMdp, reward: RewardTable, expert_temperature: float) -> np.ndarray:
    """Softmax over optimal Q; temperature 0 gives the greedy policy."""
    v, _ = value_iteration(mdp, reward)
    q = bellman_q(mdp, reward, v)
    if expert_temperature == 0.0:
        return greedy_policy(q)
    return softmax_policy(q, expert_temperature)


def generate_expert(mdp: TabularMdp, reward: RewardTable, n_traj: int, horizon: int, expert_temperature: float,
                    rng: RngSeed) -> ExpertDataset:
    """n_traj rollouts of the value-iteration expert."""
    rng = make_rng(rng)
    policy = expert_policy_from_reward(mdp, reward, expert_temperature)
    trajectories = [rollout(mdp, policy, horizon, rng) for _ in range(n_traj)]
    return ExpertDataset.from_trajectories(trajectories, mdp.n_states, mdp.n_actions)


def generate_expert_from_model(mdp: TabularMdp, model: FbModel, dataset: TransitionDataset, reward: RewardTable,
                               n_traj: int, horizon: int, rng: RngSeed) -> ExpertDataset:
    """Expert rolled out from the pretrained model's reward-inferred latent."""
    rng = make_rng(rng)
    policy = policy_from_latent(model, z_from_reward(model, dataset, reward))
    trajectories = [rollout(mdp, policy, horizon, rng) for _ in range(n_traj)]
    return ExpertDataset.from_trajectories(trajectories, mdp.n_states, mdp.n_actions)


def save_expert(expert: ExpertDataset, path: Path) -> None:
    Path(path).write_text(json.dumps(expert.to_dict(), indent=2))


def load_expert(path: Path) -> ExpertDataset:
    return ExpertDataset.from_dict(json.loads(Path(path).read_text()))
