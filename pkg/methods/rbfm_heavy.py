"""RBFM-Heavy: imitation under a SoftTV f-divergence ball on the joint occupancy.

The inner worst case is handled through its dual over a critic table Q and a
multiplier tau >= 0. For fixed (Q, tau) the optimal density ratio w* has a
closed form, and z descends E[w* L_{pi_z}(s)] with w* held fixed.
"""

import time
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from loguru import logger

from base_inference import (
    BaseTaskInference,
    ExpertDataset,
    InferenceMethod,
    InferenceResult,
    imitation_losses_and_grads,
    sphere_step,
    warm_start_z,
    weighted_state_grad,
)
from config import HeavyConfig, dump_config
from errors import DimensionMismatch, DomainError
from fb_model import FbModel
from mdp_core import make_rng
from optimizers import make_optimizer

ArrayLike = Union[float, np.ndarray]

_LOG2 = np.log(2.0)


def soft_tv_f(x: ArrayLike) -> ArrayLike:
    """f(x) = 1/2 log cosh(x - 1), evaluated without overflow."""
    u = np.abs(np.asarray(x, dtype=np.float64) - 1.0)
    out = 0.5 * (u + np.log1p(np.exp(-2.0 * u)) - _LOG2)
    return float(out) if np.ndim(out) == 0 else out


def soft_tv_fprime(x: ArrayLike) -> ArrayLike:
    out = 0.5 * np.tanh(np.asarray(x, dtype=np.float64) - 1.0)
    return float(out) if np.ndim(out) == 0 else out


def soft_tv_fprime_inv(y: ArrayLike, y_clip: Optional[float] = None) -> ArrayLike:
    """(f')^-1(y) = artanh(2y) + 1 on |y| < 1/2.

    With y_clip set, y is first clipped to [-1/2 + y_clip, 1/2 - y_clip];
    without it, |y| >= 1/2 raises DomainError.
    """
    y = np.asarray(y, dtype=np.float64)
    if y_clip is None:
        if np.any(np.abs(y) >= 0.5):
            raise DomainError("(f')^-1 is only defined on |y| < 1/2",
                              suggestions=["Pass y_clip to clip y into the open interval"],
                              component="soft_tv")
    else:
        y = np.clip(y, -0.5 + y_clip, 0.5 - y_clip)
    out = np.arctanh(2.0 * y) + 1.0
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class HeavyDualState:
    """Critic table Q(s, a) and divergence multiplier tau >= 0."""

    q: np.ndarray
    tau: float

    @classmethod
    def initial(cls, n_states: int, n_actions: int) -> "HeavyDualState":
        return cls(q=np.zeros((n_states, n_actions)), tau=1.0)


@dataclass
class HeavyMinibatch:
    """Expert transitions (s, a, s') plus effective initial pairs (s0, a0).

    weights / init_weights default to uniform averages; passing exact
    occupancy masses turns the sums into exact expectations.
    """

    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    s0: np.ndarray
    a0: np.ndarray
    weights: Optional[np.ndarray] = None
    init_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (len(self.s) == len(self.a) == len(self.s_next)) or len(self.s0) != len(self.a0):
            raise DimensionMismatch("Minibatch columns have inconsistent lengths", component="rbfm_heavy")
        if self.weights is None:
            self.weights = np.full(len(self.s), 1.0 / len(self.s))
        if self.init_weights is None:
            self.init_weights = np.full(len(self.s0), 1.0 / len(self.s0))


@dataclass
class HeavyLossResult:
    critic_loss: float
    actor_loss: float
    grad_q: np.ndarray
    grad_tau: float
    grad_z: np.ndarray
    weights: np.ndarray
    c: np.ndarray


def _expert_values(q: np.ndarray, expert_policy: np.ndarray) -> np.ndarray:
    """E_{a' ~ pi_D(.|s')}[Q(s', a')] for every s'."""
    return np.sum(expert_policy * q, axis=1)


def heavy_c(dual: HeavyDualState, model: FbModel, z: np.ndarray, expert_policy: np.ndarray,
            s: np.ndarray, a: np.ndarray, s_next: np.ndarray, gamma: float) -> np.ndarray:
    """c(s,a,s') = L_{pi_z}(s) + gamma E_{pi_D}[Q(s', .)] - Q(s, a)."""
    losses, _ = imitation_losses_and_grads(model, z, expert_policy)
    return losses[s] + gamma * _expert_values(dual.q, expert_policy)[s_next] - dual.q[s, a]


def optimal_weight(c: ArrayLike, tau: float, config: HeavyConfig) -> ArrayLike:
    """Maximizer of -tau f(w) + c w over w in [0, w_max].

    tau = 0 gives w_max where c > 0 and 0 elsewhere. Without y_clip the
    ratio c/tau saturates exactly: the objective is monotone once |c/tau| >= 1/2.
    """
    c = np.asarray(c, dtype=np.float64)
    if tau <= 0.0:
        out = np.where(c > 0.0, config.w_max, 0.0)
    elif config.y_clip is None:
        y = c / tau
        inner = soft_tv_fprime_inv(np.where(np.abs(y) < 0.5, y, 0.0))
        out = np.where(y >= 0.5, config.w_max, np.where(y <= -0.5, 0.0, inner))
    else:
        out = soft_tv_fprime_inv(c / tau, config.y_clip)
    out = np.clip(out, 0.0, config.w_max)
    return float(out) if np.ndim(out) == 0 else out


def heavy_losses_and_grads(model: FbModel, z: np.ndarray, expert_policy: np.ndarray, dual: HeavyDualState,
                           config: HeavyConfig, batch: HeavyMinibatch,
                           frozen_weights: Optional[np.ndarray] = None) -> HeavyLossResult:
    """Critic loss (1-gamma) E[Q(s0,a0)] + eps tau + E[-tau f(w) + w c] and actor loss E[w L_{pi_z}(s)].

    w is the closed-form inner maximizer unless frozen_weights is given, and
    is treated as a constant in every gradient.
    """
    gamma = config.gamma
    losses, loss_grads = imitation_losses_and_grads(model, z, expert_policy)
    values = _expert_values(dual.q, expert_policy)
    c = losses[batch.s] + gamma * values[batch.s_next] - dual.q[batch.s, batch.a]

    w = np.asarray(optimal_weight(c, dual.tau, config) if frozen_weights is None else frozen_weights,
                   dtype=np.float64)
    f_w = np.asarray(soft_tv_f(w))
    rho, mu = batch.weights, batch.init_weights

    critic_loss = float((1.0 - gamma) * (mu @ dual.q[batch.s0, batch.a0]) + config.eps * dual.tau
                        + rho @ (-dual.tau * f_w + w * c))
    actor_loss = float(rho @ (w * losses[batch.s]))

    grad_q = np.zeros_like(dual.q)
    np.add.at(grad_q, (batch.s0, batch.a0), (1.0 - gamma) * mu)
    np.add.at(grad_q, batch.s_next, (gamma * rho * w)[:, None] * expert_policy[batch.s_next])
    np.add.at(grad_q, (batch.s, batch.a), -rho * w)
    grad_tau = float(config.eps - rho @ f_w)
    grad_z = weighted_state_grad(loss_grads, batch.s, rho * w)

    return HeavyLossResult(critic_loss=critic_loss, actor_loss=actor_loss, grad_q=grad_q, grad_tau=grad_tau,
                           grad_z=grad_z, weights=w, c=c)


def sample_heavy_minibatch(expert: ExpertDataset, batch_size: int, rng: np.random.Generator) -> HeavyMinibatch:
    """Expert transitions plus initial pairs drawn from every expert (s, a)."""
    idx = expert.sample_indices(batch_size, rng)
    idx0 = expert.sample_indices(batch_size, rng)
    return HeavyMinibatch(s=expert.s[idx], a=expert.a[idx], s_next=expert.s_next[idx],
                          s0=expert.s[idx0], a0=expert.a[idx0])


def infer_rbfm_heavy(model: FbModel, expert: ExpertDataset, config: HeavyConfig) -> InferenceResult:
    rng = make_rng(config.seed)
    z_optimizer = make_optimizer(config.optimizer, config.lr_z)
    dual_optimizer = make_optimizer(config.optimizer, config.lr_dual)
    z = warm_start_z(model, expert)
    dual = HeavyDualState.initial(expert.n_states, expert.n_actions)
    loss_trace, tau_trace = [], []

    logger.info(f"RBFM-Heavy: eps={config.eps}, {config.steps} steps on {len(expert)} expert transitions")
    started = time.perf_counter()
    for _ in range(config.steps):
        for _ in range(config.dual_steps_per_z_step):
            batch = sample_heavy_minibatch(expert, config.batch_size, rng)
            result = heavy_losses_and_grads(model, z, expert.policy, dual, config, batch)
            params = {"q": dual.q, "tau": np.array([dual.tau])}
            dual_optimizer.step(params, {"q": result.grad_q, "tau": np.array([result.grad_tau])})
            dual.tau = max(0.0, float(params["tau"][0]))

        loss_trace.append(result.critic_loss)
        tau_trace.append(dual.tau)
        z = sphere_step(z_optimizer, z, result.grad_z)

    logger.info(f"RBFM-Heavy finished in {time.perf_counter() - started:.2f}s (final tau={dual.tau:.4g})")
    return InferenceResult(method=InferenceMethod.RBFM_HEAVY.value, z=z, loss_trace=loss_trace,
                           tau_trace=tau_trace, config=dump_config(config), seed=config.seed)


class RbfmHeavyInference(BaseTaskInference):
    method = InferenceMethod.RBFM_HEAVY
    config_model = HeavyConfig

    def infer(self, model: FbModel, expert: ExpertDataset) -> InferenceResult:
        return infer_rbfm_heavy(model, expert, self.config or HeavyConfig.model_validate(self.raw_config))
