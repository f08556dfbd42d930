"""Tabular forward-backward representation: embeddings, latent sampling and TD pretraining."""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from loguru import logger
from scipy.special import softmax

from config import PretrainConfig
from errors import DimensionMismatch, EmptyDataset, PreconditionError, ZeroVector
from mdp_core import RewardTable, RngSeed, make_rng, sample_rows, softmax_policy
from optimizers import make_optimizer


class Transition(NamedTuple):
    s: int
    a: int
    s_next: int


@dataclass
class TransitionDataset:
    """Exploratory transitions stored column-wise.

    `states` (the next-state column) is the pool that backward embeddings are
    fitted on; latent sampling, s+ draws and reward projection all use it.
    """

    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    n_states: int
    n_actions: int

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.int64)
        self.a = np.asarray(self.a, dtype=np.int64)
        self.s_next = np.asarray(self.s_next, dtype=np.int64)
        if not (self.s.shape == self.a.shape == self.s_next.shape) or self.s.ndim != 1:
            raise DimensionMismatch("Transition columns must be 1-d arrays of equal length", component="dataset")
        for name, column, bound in (("s", self.s, self.n_states), ("a", self.a, self.n_actions),
                                    ("s_next", self.s_next, self.n_states)):
            if column.size and (column.min() < 0 or column.max() >= bound):
                raise DimensionMismatch(f"Column '{name}' has indices outside [0, {bound})", component="dataset")

    def __len__(self) -> int:
        return int(self.s.shape[0])

    @property
    def states(self) -> np.ndarray:
        return self.s_next

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition], n_states: int, n_actions: int) -> "TransitionDataset":
        cols = np.array([tuple(t) for t in transitions], dtype=np.int64).reshape(-1, 3)
        return cls(s=cols[:, 0], a=cols[:, 1], s_next=cols[:, 2], n_states=n_states, n_actions=n_actions)

    def transitions(self) -> List[Transition]:
        return [Transition(int(s), int(a), int(n)) for s, a, n in zip(self.s, self.a, self.s_next)]

    def coverage(self) -> np.ndarray:
        """Visit counts per (s, a)."""
        counts = np.zeros((self.n_states, self.n_actions), dtype=np.int64)
        np.add.at(counts, (self.s, self.a), 1)
        return counts


@dataclass
class FbModel:
    """F(s,a,z) = theta[s,a] z + theta0[s,a]; B(s) = b[s] with rows on the radius-sqrt(d) sphere."""

    d: int
    theta: np.ndarray
    theta0: np.ndarray
    b: np.ndarray
    temperature: float
    target_theta: np.ndarray = field(default=None)
    target_theta0: np.ndarray = field(default=None)
    target_b: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise PreconditionError(f"temperature must be > 0, got {self.temperature}", component="fb_model")
        if self.theta.shape[2:] != (self.d, self.d) or self.theta0.shape[2:] != (self.d,) or self.b.shape[1] != self.d:
            raise DimensionMismatch(f"Parameter shapes do not match latent dimension d={self.d}", component="fb_model")
        if self.target_theta is None:
            self.target_theta = self.theta.copy()
        if self.target_theta0 is None:
            self.target_theta0 = self.theta0.copy()
        if self.target_b is None:
            self.target_b = self.b.copy()

    @property
    def n_states(self) -> int:
        return self.theta.shape[0]

    @property
    def n_actions(self) -> int:
        return self.theta.shape[1]

    def params(self) -> Dict[str, np.ndarray]:
        return {"theta": self.theta, "theta0": self.theta0, "b": self.b}


def normalize_rows(b: np.ndarray) -> np.ndarray:
    """Scale every row to norm sqrt(d); all-zero rows are left alone."""
    norms = np.linalg.norm(b, axis=1, keepdims=True)
    return np.where(norms > 0.0, b * (np.sqrt(b.shape[1]) / np.where(norms > 0.0, norms, 1.0)), b)


def project_to_sphere(z: np.ndarray) -> np.ndarray:
    """Rescale z onto the radius-sqrt(d) sphere."""
    z = np.asarray(z, dtype=np.float64)
    norm = np.linalg.norm(z)
    if norm == 0.0 or not np.isfinite(norm):
        raise ZeroVector(f"Cannot project a vector with norm {norm} to the sphere",
                         suggestions=["Check that the reward or expert data is not degenerate"],
                         component="latent")
    return z * (np.sqrt(z.shape[0]) / norm)


def init_model(n_states: int, n_actions: int, d: int, temperature: float, rng: RngSeed,
               init_scale: float = 0.1) -> FbModel:
    rng = make_rng(rng)
    theta = init_scale * rng.standard_normal((n_states, n_actions, d, d))
    theta0 = init_scale * rng.standard_normal((n_states, n_actions, d))
    b = normalize_rows(rng.standard_normal((n_states, d)))
    return FbModel(d=d, theta=theta, theta0=theta0, b=b, temperature=temperature)


def sample_latent(model: FbModel, dataset: TransitionDataset, mix_ratio: float, rng: RngSeed) -> np.ndarray:
    """Sphere-uniform z with probability mix_ratio, otherwise B of a dataset state."""
    rng = make_rng(rng)
    if mix_ratio < 1.0 and len(dataset) == 0:
        raise EmptyDataset("Latent sampling from B needs a nonempty dataset", component="fb_model")
    if rng.random() < mix_ratio:
        return project_to_sphere(rng.standard_normal(model.d))
    s = dataset.states[rng.integers(len(dataset))]
    return model.b[s].copy()


def sample_latents(model: FbModel, dataset: TransitionDataset, n: int, mix_ratio: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Vectorized sample_latent for a whole minibatch."""
    if mix_ratio < 1.0 and len(dataset) == 0:
        raise EmptyDataset("Latent sampling from B needs a nonempty dataset", component="fb_model")
    gauss = rng.standard_normal((n, model.d))
    gauss *= np.sqrt(model.d) / np.linalg.norm(gauss, axis=1, keepdims=True)
    use_gauss = rng.random(n) < mix_ratio
    idx = rng.integers(max(len(dataset), 1), size=n)
    from_b = model.b[dataset.states[idx]] if len(dataset) else gauss
    return np.where(use_gauss[:, None], gauss, from_b)


def forward_embed(model: FbModel, s: int, a: int, z: np.ndarray) -> np.ndarray:
    return model.theta[s, a] @ z + model.theta0[s, a]


def forward_all(model: FbModel, z: np.ndarray) -> np.ndarray:
    """F(s, a, z) for every (s, a); shape (S, A, d)."""
    return np.einsum("saij,j->sai", model.theta, z) + model.theta0


def q_scores(model: FbModel, z: np.ndarray) -> np.ndarray:
    """F(s,a,z)^T z, the model's Q estimate for the task z."""
    return forward_all(model, z) @ z


def policy_from_latent(model: FbModel, z: np.ndarray, temperature: Optional[float] = None) -> np.ndarray:
    return softmax_policy(q_scores(model, z), model.temperature if temperature is None else temperature)


@dataclass
class FbBatch:
    """One TD minibatch; z[i] conditions item i and every item is scored against every s_plus."""

    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    a_next: np.ndarray
    s_plus: np.ndarray
    z: np.ndarray

    def __len__(self) -> int:
        return int(self.s.shape[0])


@dataclass
class FbLossResult:
    loss: float
    grad_theta: np.ndarray
    grad_theta0: np.ndarray
    grad_b: np.ndarray

    def grads(self) -> Dict[str, np.ndarray]:
        return {"theta": self.grad_theta, "theta0": self.grad_theta0, "b": self.grad_b}


def fb_td_loss_and_grads(model: FbModel, batch: FbBatch, gamma: float) -> FbLossResult:
    """TD loss of the successor-measure factorization and its exact gradients.

    loss = mean_{i,j} (F(s_i,a_i,z_i)^T B(s+_j) - gamma Fbar(s'_i,a'_i,z_i)^T Bbar(s+_j))^2
           - 2 mean_i F(s_i,a_i,z_i)^T B(s'_i).

    Every transition is scored against every s+ of the batch. The s+ draws are
    independent of the transitions, so this estimates the same expectation as
    pairing item i with s+_i alone. Target tables receive no gradient.
    """
    n, m = len(batch), len(batch.s_plus)
    if n == 0 or m == 0:
        raise EmptyDataset("TD loss needs a nonempty batch", component="fb_model")

    f = np.einsum("nij,nj->ni", model.theta[batch.s, batch.a], batch.z) + model.theta0[batch.s, batch.a]
    f_target = (np.einsum("nij,nj->ni", model.target_theta[batch.s_next, batch.a_next], batch.z)
                + model.target_theta0[batch.s_next, batch.a_next])
    b_plus = model.b[batch.s_plus]
    b_next = model.b[batch.s_next]

    # delta[i, j] pairs transition i with s+_j
    delta = f @ b_plus.T - gamma * (f_target @ model.target_b[batch.s_plus].T)
    loss = float(np.mean(delta ** 2) - 2.0 * np.mean(np.sum(f * b_next, axis=1)))

    g_f = (2.0 / (n * m)) * (delta @ b_plus) - (2.0 / n) * b_next

    grad_theta = np.zeros_like(model.theta)
    grad_theta0 = np.zeros_like(model.theta0)
    grad_b = np.zeros_like(model.b)
    np.add.at(grad_theta, (batch.s, batch.a), g_f[:, :, None] * batch.z[:, None, :])
    np.add.at(grad_theta0, (batch.s, batch.a), g_f)
    np.add.at(grad_b, batch.s_plus, (2.0 / (n * m)) * (delta.T @ f))
    np.add.at(grad_b, batch.s_next, -(2.0 / n) * f)

    return FbLossResult(loss=loss, grad_theta=grad_theta, grad_theta0=grad_theta0, grad_b=grad_b)


def _next_actions(model: FbModel, s_next: np.ndarray, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """a' ~ pi_z(.|s') under the current (non-target) parameters."""
    f_all = np.einsum("naij,nj->nai", model.theta[s_next], z) + model.theta0[s_next]
    scores = np.einsum("nai,ni->na", f_all, z)
    return sample_rows(softmax(scores / model.temperature, axis=1), rng)


def polyak_update(model: FbModel, nu: float) -> None:
    for main, target in ((model.theta, model.target_theta), (model.theta0, model.target_theta0),
                         (model.b, model.target_b)):
        target *= 1.0 - nu
        target += nu * main


def pretrain(dataset: TransitionDataset, config: PretrainConfig) -> FbModel:
    """Unsupervised FB pretraining on a fixed exploratory dataset."""
    n = len(dataset)
    if n == 0:
        raise EmptyDataset("Pretraining needs at least one transition",
                           suggestions=["Increase n_transitions in the job config"], component="pretrain")

    missing = int((dataset.coverage() == 0).sum())
    if missing:
        logger.warning(f"Dataset leaves {missing} (s, a) pairs unvisited; their forward embeddings stay at init")

    rng = make_rng(config.seed)
    model = init_model(dataset.n_states, dataset.n_actions, config.d, config.temperature, rng, config.init_scale)
    optimizer = make_optimizer(config.optimizer, config.lr)
    params = model.params()

    logger.info(f"Pretraining FB model: {n} transitions, d={config.d}, {config.steps} steps")
    started = time.perf_counter()
    for step in range(1, config.steps + 1):
        idx = rng.integers(n, size=config.batch_size)
        s, a, s_next = dataset.s[idx], dataset.a[idx], dataset.s_next[idx]
        z = sample_latents(model, dataset, config.batch_size, config.z_mix_ratio, rng)
        s_plus = dataset.states[rng.integers(n, size=config.batch_size)]
        a_next = _next_actions(model, s_next, z, rng)

        result = fb_td_loss_and_grads(model, FbBatch(s, a, s_next, a_next, s_plus, z), config.gamma)
        optimizer.step(params, result.grads())
        model.b[:] = normalize_rows(model.b)
        polyak_update(model, config.polyak)

        if step % config.log_every == 0 or step == config.steps:
            logger.info(f"  step {step}/{config.steps}  td_loss={result.loss:.5f}")

    logger.info(f"Pretraining finished in {time.perf_counter() - started:.1f}s")
    return model


def z_from_reward(model: FbModel, dataset: TransitionDataset, reward: RewardTable) -> np.ndarray:
    """z = E_{s~data}[B(s) r(s)], projected to the sphere."""
    if len(dataset) == 0:
        raise EmptyDataset("Reward projection needs dataset states", component="fb_model")
    states = dataset.states
    mean = (model.b[states] * reward.r[states][:, None]).mean(axis=0)
    if not np.any(mean):
        raise ZeroVector(f"Reward '{reward.name}' projects to the zero latent",
                         suggestions=["The reward is zero on every dataset state"], component="fb_model")
    return project_to_sphere(mean)


def model_to_dict(model: FbModel) -> Dict[str, Any]:
    return {
        "d": model.d,
        "temperature": model.temperature,
        "theta": model.theta.tolist(),
        "theta0": model.theta0.tolist(),
        "b": model.b.tolist(),
    }


def model_from_dict(data: Dict[str, Any]) -> FbModel:
    return FbModel(d=int(data["d"]),
                   theta=np.array(data["theta"], dtype=np.float64),
                   theta0=np.array(data["theta0"], dtype=np.float64),
                   b=np.array(data["b"], dtype=np.float64),
                   temperature=float(data["temperature"]))


def save_model(model: FbModel, path: Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path: Path) -> FbModel:
    return model_from_dict(json.loads(Path(path).read_text()))
