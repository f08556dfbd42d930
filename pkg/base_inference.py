"""Shared building blocks for task inference from expert demonstrations."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type

import numpy as np
from pydantic import BaseModel, ValidationError
from scipy.special import softmax

from errors import DimensionMismatch, EmptyDataset
from fb_model import FbModel, forward_all, project_to_sphere
from mdp_core import Trajectory


class InferenceMethod(Enum):
    """Supported task inference methods."""
    FB_IL = "fb_il"
    RBFM_LIGHT = "rbfm_light"
    RBFM_HEAVY = "rbfm_heavy"


@dataclass
class ExpertDataset:
    """Expert demonstrations plus the empirical statistics derived from them."""

    trajectories: List[Trajectory]
    n_states: int
    n_actions: int
    s: np.ndarray = field(init=False)
    a: np.ndarray = field(init=False)
    s_next: np.ndarray = field(init=False)

    def __post_init__(self):
        self.trajectories = list(self.trajectories)
        s, a, s_next = [], [], []
        for traj in self.trajectories:
            s.extend(traj.states[:-1])
            a.extend(traj.actions)
            s_next.extend(traj.states[1:])
        if not a:
            raise EmptyDataset("Expert dataset holds no transitions",
                               suggestions=["Provide at least one trajectory of length >= 1"],
                               component="expert")
        self.s = np.array(s, dtype=np.int64)
        self.a = np.array(a, dtype=np.int64)
        self.s_next = np.array(s_next, dtype=np.int64)
        if max(self.s.max(), self.s_next.max()) >= self.n_states or self.a.max() >= self.n_actions \
                or min(self.s.min(), self.s_next.min(), self.a.min()) < 0:
            raise DimensionMismatch(
                f"Expert indices fall outside {self.n_states} states / {self.n_actions} actions",
                component="expert",
            )

        counts = np.zeros((self.n_states, self.n_actions))
        np.add.at(counts, (self.s, self.a), 1.0)
        visits = counts.sum(axis=1)
        self._policy = np.full((self.n_states, self.n_actions), 1.0 / self.n_actions)
        seen = visits > 0
        self._policy[seen] = counts[seen] / visits[seen, None]
        self._weights = visits / visits.sum()

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory], n_states: int, n_actions: int) -> "ExpertDataset":
        return cls(trajectories=list(trajectories), n_states=n_states, n_actions=n_actions)

    def __len__(self) -> int:
        return int(self.s.shape[0])

    @property
    def policy(self) -> np.ndarray:
        """Empirical pi_D(a|s); uniform on states the expert never acted in."""
        return self._policy

    @property
    def state_weights(self) -> np.ndarray:
        """Visit frequencies w(s) of the states the expert acted in."""
        return self._weights

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self._weights > 0.0)

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform draws over expert transitions, so states follow w."""
        return rng.integers(len(self), size=batch_size)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "trajectories": [t.to_dict() for t in self.trajectories],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExpertDataset":
        return cls(trajectories=[Trajectory.from_dict(t) for t in data["trajectories"]],
                   n_states=int(data["n_states"]), n_actions=int(data["n_actions"]))


@dataclass
class InferenceResult:
    """Outcome of one inference run, serializable as the run's JSON artifact."""

    method: str
    z: np.ndarray
    loss_trace: List[float]
    config: Dict[str, Any]
    seed: int
    lambda_trace: Optional[List[float]] = None
    tau_trace: Optional[List[float]] = None

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"method": self.method, "z": self.z.tolist(), "loss_trace": list(self.loss_trace)}
        if self.lambda_trace is not None:
            out["lambda_trace"] = list(self.lambda_trace)
        if self.tau_trace is not None:
            out["tau_trace"] = list(self.tau_trace)
        out["config"] = self.config
        out["seed"] = self.seed
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "InferenceResult":
        return cls(method=data["method"], z=np.array(data["z"], dtype=np.float64),
                   loss_trace=list(data["loss_trace"]), config=data.get("config", {}),
                   seed=int(data.get("seed", 0)), lambda_trace=data.get("lambda_trace"),
                   tau_trace=data.get("tau_trace"))


def warm_start_z(model: FbModel, expert: ExpertDataset) -> np.ndarray:
    """Average over trajectories of the per-trajectory mean of B(s_{t+1}), on the sphere."""
    means = [model.b[list(t.states[1:])].mean(axis=0) for t in expert.trajectories if t.length > 0]
    if not means:
        raise EmptyDataset("Warm start needs a trajectory of length >= 1", component="expert")
    return project_to_sphere(np.mean(means, axis=0))


def imitation_losses_and_grads(model: FbModel, z: np.ndarray,
                               target_policy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-state loss L(s) = sum_a (pi_z(a|s) - target(a|s))^2 and dL(s)/dz.

    Returns arrays of shape (S,) and (S, d); callers weight and sum the rows
    they sampled.
    """
    temperature = model.temperature
    f = forward_all(model, z)
    pi = softmax((f @ z) / temperature, axis=1)
    diff = pi - target_policy
    losses = np.sum(diff ** 2, axis=1)

    # dL/dq_b = (2/T) pi_b [(pi_b - p_b) - sum_a (pi_a - p_a) pi_a]
    grad_q = (2.0 / temperature) * pi * (diff - np.sum(diff * pi, axis=1, keepdims=True))
    # dq_b/dz = (Theta + Theta^T) z + theta0
    dq_dz = f + np.einsum("saji,j->sai", model.theta, z)
    grads = np.einsum("sa,sai->si", grad_q, dq_dz)
    return losses, grads


def weighted_state_grad(grads: np.ndarray, states: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_i weights[i] * grads[states[i]]."""
    per_state = np.bincount(states, weights=weights, minlength=grads.shape[0])
    return per_state @ grads


def sphere_step(optimizer, z: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One optimizer step on z followed by re-projection to the sphere."""
    params = {"z": z.copy()}
    optimizer.step(params, {"z": grad})
    return project_to_sphere(params["z"])


class BaseTaskInference(ABC):
    """Abstract base class for task inference methods."""

    method: InferenceMethod
    config_model: Type[BaseModel]

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        """Initialize the method with a raw or validated configuration."""
        self.raw_config = config or {}
        self.config = None

    def validate_config(self) -> Tuple[bool, List[str]]:
        """Validate the method configuration.

        Returns:
            Tuple of (is_valid, list_of_errors)
        """
        try:
            self.config = self.config_model.model_validate(self.raw_config)
        except ValidationError as e:
            return False, [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
        return True, []

    @abstractmethod
    def infer(self, model: FbModel, expert: ExpertDataset) -> InferenceResult:
        """Infer a task latent from expert demonstrations.

        Args:
            model: Pretrained forward-backward model
            expert: Expert demonstrations

        Returns:
            InferenceResult with the final latent and optimization traces
        """
        pass
