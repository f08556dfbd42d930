"""Exact and Monte-Carlo evaluation of policies on (possibly perturbed) dynamics."""

from typing import Optional, Tuple

import numpy as np

from errors import PreconditionError
from mdp_core import RewardTable, RngSeed, TabularMdp, make_rng, policy_evaluation, sample_rows, validate_policy

# Monte-Carlo episodes are truncated once gamma^t drops below this
MC_TRUNCATION = 1e-8


def evaluate_policy_exact(mdp: TabularMdp, policy: np.ndarray, reward: RewardTable) -> float:
    """E_mu E_pi [sum_t gamma^t r(s_{t+1})] by a linear solve."""
    validate_policy(policy, mdp)
    v, _ = policy_evaluation(mdp, policy, reward)
    return float(mdp.mu @ v)


def evaluate_policy_mc(mdp: TabularMdp, policy: np.ndarray, reward: RewardTable, n_episodes: int = 100,
                       rng: RngSeed = 0, horizon: Optional[int] = None) -> Tuple[float, float]:
    """Mean discounted return over simulated episodes and its standard error."""
    if n_episodes < 1:
        raise PreconditionError(f"n_episodes must be >= 1, got {n_episodes}", component="evaluation")
    validate_policy(policy, mdp)
    rng = make_rng(rng)
    if horizon is None:
        horizon = int(np.ceil(np.log(MC_TRUNCATION) / np.log(mdp.gamma)))

    state = sample_rows(np.broadcast_to(mdp.mu, (n_episodes, mdp.n_states)), rng)
    returns = np.zeros(n_episodes)
    discount = 1.0
    for _ in range(horizon):
        action = sample_rows(policy[state], rng)
        state = sample_rows(mdp.kernel[state, action], rng)
        returns += discount * reward.r[state]
        discount *= mdp.gamma

    stderr = float(returns.std(ddof=1) / np.sqrt(n_episodes)) if n_episodes > 1 else 0.0
    return float(returns.mean()), stderr
