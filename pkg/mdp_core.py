"""Finite MDP representation, simulation and exact dynamic programming."""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
from loguru import logger
from scipy import linalg
from scipy.special import softmax

from errors import (
    BadDiscount,
    BadInitialDistribution,
    DimensionMismatch,
    NonFinite,
    NonStochasticRow,
    NoConvergence,
    PreconditionError,
    SingularSystem,
)

# Row-sum tolerance for kernels, initial distributions and policies
STOCHASTIC_TOL = 1e-12

RngSeed = Union[int, np.random.Generator]


def make_rng(seed: RngSeed) -> np.random.Generator:
    """Normalize a seed (or an existing generator) into a numpy Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(int(seed))


def _frozen(array: Any) -> np.ndarray:
    out = np.array(array, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TabularMdp:
    """Reward-free finite MDP: kernel[s, a, s'], initial distribution mu and discount gamma."""

    kernel: np.ndarray
    mu: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "kernel", _frozen(self.kernel))
        object.__setattr__(self, "mu", _frozen(self.mu))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.kernel.shape[0]

    @property
    def n_actions(self) -> int:
        return self.kernel.shape[1]

    def with_kernel(self, kernel: np.ndarray) -> "TabularMdp":
        """Same mu and gamma, different dynamics."""
        return TabularMdp(kernel=kernel, mu=self.mu, gamma=self.gamma)


@dataclass(frozen=True)
class RewardTable:
    """Next-state reward r(s') for one named task."""

    name: str
    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", _frozen(self.r))
        if not np.all(np.isfinite(self.r)):
            raise NonFinite(f"Reward table '{self.name}' has non-finite entries")


@dataclass(frozen=True)
class Trajectory:
    """Sampled rollout; states has one more entry than actions."""

    states: Tuple[int, ...]
    actions: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(int(s) for s in self.states))
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))
        if len(self.actions) != len(self.states) - 1:
            raise DimensionMismatch(
                f"Trajectory has {len(self.states)} states but {len(self.actions)} actions",
                suggestions=["A trajectory of length n holds n actions and n + 1 states"],
            )

    @property
    def length(self) -> int:
        return len(self.actions)

    def to_dict(self) -> Dict[str, Any]:
        return {"states": list(self.states), "actions": list(self.actions)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Trajectory":
        return cls(states=tuple(data["states"]), actions=tuple(data["actions"]))


def validate_mdp(mdp: TabularMdp) -> None:
    """Raise unless every TabularMdp invariant holds."""
    kernel = mdp.kernel
    if kernel.ndim != 3 or kernel.shape[0] != kernel.shape[2] or kernel.shape[0] < 1 or kernel.shape[1] < 1:
        raise DimensionMismatch(f"Kernel must have shape (S, A, S), got {kernel.shape}")
    if mdp.mu.shape != (kernel.shape[0],):
        raise DimensionMismatch(f"mu has shape {mdp.mu.shape}, expected ({kernel.shape[0]},)")
    if not np.all(np.isfinite(kernel)):
        raise NonFinite("Kernel has non-finite entries", component="mdp")

    row_sums = kernel.sum(axis=2)
    for s in range(kernel.shape[0]):
        for a in range(kernel.shape[1]):
            if np.any(kernel[s, a] < 0.0) or abs(row_sums[s, a] - 1.0) > STOCHASTIC_TOL:
                raise NonStochasticRow(s, a, float(row_sums[s, a]))

    if np.any(mdp.mu < 0.0) or abs(mdp.mu.sum() - 1.0) > STOCHASTIC_TOL:
        raise BadInitialDistribution(
            f"Initial distribution sums to {mdp.mu.sum():.15g}",
            suggestions=["mu must be nonnegative and sum to 1"],
            component="mdp",
        )

    if not 0.0 < mdp.gamma < 1.0:
        raise BadDiscount(mdp.gamma)


def validate_policy(policy: np.ndarray, mdp: TabularMdp) -> None:
    """Raise DimensionMismatch / NonStochasticRow for a policy table that does not fit the MDP."""
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise DimensionMismatch(
            f"Policy shape {policy.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})",
            component="policy",
        )
    sums = policy.sum(axis=1)
    for s in range(mdp.n_states):
        if np.any(policy[s] < 0.0) or abs(sums[s] - 1.0) > STOCHASTIC_TOL:
            raise NonStochasticRow(s, -1, float(sums[s]))


def uniform_policy(n_states: int, n_actions: int) -> np.ndarray:
    return np.full((n_states, n_actions), 1.0 / n_actions)


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """One-hot argmax policy; ties go to the smallest action index."""
    policy = np.zeros_like(q, dtype=np.float64)
    policy[np.arange(q.shape[0]), np.argmax(q, axis=1)] = 1.0
    return policy


def softmax_policy(q: np.ndarray, temperature: float) -> np.ndarray:
    """Boltzmann policy pi(a|s) proportional to exp(q[s, a] / temperature)."""
    if temperature <= 0.0:
        raise PreconditionError(f"temperature must be > 0, got {temperature}")
    q = np.asarray(q, dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise NonFinite("Q table has non-finite entries", component="policy")
    return softmax(q / temperature, axis=1)


def state_transition_matrix(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    """P_pi(s'|s) = sum_a pi(a|s) T(s'|s,a)."""
    return np.einsum("sa,sap->sp", policy, mdp.kernel)


def _sample_index(probs: np.ndarray, u: float) -> int:
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(idx, len(probs) - 1)


def sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of an (n, k) probability table."""
    u = rng.random(probs.shape[0])
    idx = (np.cumsum(probs, axis=1) <= u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def rollout(mdp: TabularMdp, policy: np.ndarray, horizon: int, rng: RngSeed) -> Trajectory:
    """Sample `horizon` transitions starting from s0 ~ mu."""
    if horizon < 1:
        raise PreconditionError(f"horizon must be >= 1, got {horizon}", component="rollout")
    validate_policy(policy, mdp)
    rng = make_rng(rng)

    states = [_sample_index(mdp.mu, rng.random())]
    actions = []
    for _ in range(horizon):
        s = states[-1]
        a = _sample_index(policy[s], rng.random())
        actions.append(a)
        states.append(_sample_index(mdp.kernel[s, a], rng.random()))

    return Trajectory(states=tuple(states), actions=tuple(actions))


def bellman_q(mdp: TabularMdp, reward: RewardTable, v: np.ndarray) -> np.ndarray:
    """Q(s,a) = sum_s' T(s'|s,a) (r(s') + gamma V(s'))."""
    return mdp.kernel @ (reward.r + mdp.gamma * v)


def value_iteration(mdp: TabularMdp, reward: RewardTable, tol: float = 1e-10,
                    max_iter: int = 1_000_000) -> Tuple[np.ndarray, np.ndarray]:
    """Optimal values and the greedy (one-hot) policy; reward is collected on the next state."""
    if tol <= 0.0:
        raise PreconditionError(f"tol must be > 0, got {tol}", component="value_iteration")
    if reward.r.shape != (mdp.n_states,):
        raise DimensionMismatch(f"Reward '{reward.name}' has shape {reward.r.shape}")

    v = np.zeros(mdp.n_states)
    for iteration in range(1, max_iter + 1):
        v_new = bellman_q(mdp, reward, v).max(axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= tol:
            logger.debug(f"Value iteration for '{reward.name}' converged in {iteration} sweeps")
            return v, greedy_policy(bellman_q(mdp, reward, v))

    raise NoConvergence(f"Value iteration did not reach tol={tol} in {max_iter} sweeps", component="value_iteration")


def policy_evaluation(mdp: TabularMdp, policy: np.ndarray, reward: RewardTable) -> Tuple[np.ndarray, np.ndarray]:
    """Exact V^pi and Q^pi by a dense linear solve."""
    p_pi = state_transition_matrix(mdp, policy)
    r_pi = np.einsum("sa,sa->s", policy, mdp.kernel @ reward.r)
    try:
        v = linalg.solve(np.eye(mdp.n_states) - mdp.gamma * p_pi, r_pi)
    except linalg.LinAlgError as e:
        raise SingularSystem(f"Policy evaluation system is singular: {e}", component="policy_evaluation")
    return v, bellman_q(mdp, reward, v)


def mdp_to_dict(mdp: TabularMdp) -> Dict[str, Any]:
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "mu": mdp.mu.tolist(),
        "kernel": mdp.kernel.tolist(),
    }


def mdp_from_dict(data: Dict[str, Any]) -> TabularMdp:
    mdp = TabularMdp(kernel=np.array(data["kernel"], dtype=np.float64),
                     mu=np.array(data["mu"], dtype=np.float64),
                     gamma=float(data["gamma"]))
    if (mdp.n_states, mdp.n_actions) != (data["n_states"], data["n_actions"]):
        raise DimensionMismatch(
            f"Declared shape ({data['n_states']}, {data['n_actions']}) disagrees with kernel {mdp.kernel.shape}")
    validate_mdp(mdp)
    return mdp


def save_mdp(mdp: TabularMdp, path: Path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp), indent=2))


def load_mdp(path: Path) -> TabularMdp:
    return mdp_from_dict(json.loads(Path(path).read_text()))
