"""Exact discounted occupancy measures, successor measures and Bellman-flow residuals."""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
from scipy import linalg

from errors import DimensionMismatch, NotDistribution, SingularSystem
from mdp_core import RewardTable, TabularMdp, state_transition_matrix

# Solver residual allowed for (I - gamma P^T) rho = (1 - gamma) mu
OCCUPANCY_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class StateOccupancy:
    """(1 - gamma)-normalized discounted state visitation."""

    rho: np.ndarray


@dataclass(frozen=True)
class OccupancyTriple:
    """Joint discounted occupancy rho(s, a, s') with its marginals."""

    rho3: np.ndarray

    @property
    def rho2(self) -> np.ndarray:
        return self.rho3.sum(axis=2)

    @property
    def rho1(self) -> np.ndarray:
        return self.rho3.sum(axis=(1, 2))

    def to_dict(self) -> Dict[str, Any]:
        return {"shape": list(self.rho3.shape), "data": self.rho3.ravel().tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "OccupancyTriple":
        return cls(rho3=np.array(data["data"], dtype=np.float64).reshape(data["shape"]))


@dataclass(frozen=True)
class SuccessorMeasure:
    """Unnormalized successor measure M(s'|s,a); each row carries mass 1 / (1 - gamma)."""

    m: np.ndarray
    gamma: float


def state_occupancy(mdp: TabularMdp, policy: np.ndarray) -> StateOccupancy:
    """Solve rho = (1 - gamma) mu + gamma P_pi^T rho directly."""
    p_pi = state_transition_matrix(mdp, policy)
    system = np.eye(mdp.n_states) - mdp.gamma * p_pi.T
    rhs = (1.0 - mdp.gamma) * mdp.mu
    try:
        rho = linalg.solve(system, rhs)
    except linalg.LinAlgError as e:
        raise SingularSystem(f"Occupancy system is singular: {e}", component="occupancy")

    residual = float(np.max(np.abs(system @ rho - rhs)))
    if residual > OCCUPANCY_RESIDUAL_TOL:
        raise SingularSystem(f"Occupancy solve residual {residual:.3e} exceeds {OCCUPANCY_RESIDUAL_TOL}",
                             component="occupancy")

    # Round-off can leave entries at -1e-17
    return StateOccupancy(rho=np.clip(rho, 0.0, None))


def triple_occupancy(mdp: TabularMdp, policy: np.ndarray) -> OccupancyTriple:
    """rho(s, a, s') = rho(s) pi(a|s) T(s'|s,a)."""
    rho1 = state_occupancy(mdp, policy).rho
    return OccupancyTriple(rho3=rho1[:, None, None] * policy[:, :, None] * mdp.kernel)


def successor_measure(mdp: TabularMdp, policy: np.ndarray) -> SuccessorMeasure:
    """M(.|s,a) = sum_t gamma^t Pr(s_{t+1} = . | s, a) = T(.|s,a) (I - gamma P_pi)^-1."""
    p_pi = state_transition_matrix(mdp, policy)
    try:
        visits = linalg.solve(np.eye(mdp.n_states) - mdp.gamma * p_pi, np.eye(mdp.n_states))
    except linalg.LinAlgError as e:
        raise SingularSystem(f"Successor system is singular: {e}", component="occupancy")
    return SuccessorMeasure(m=np.clip(mdp.kernel @ visits, 0.0, None), gamma=mdp.gamma)


def q_from_successor(m: SuccessorMeasure, reward: RewardTable) -> np.ndarray:
    """Q(s, a) = sum_s' M(s'|s,a) r(s')."""
    if m.m.shape[2] != reward.r.shape[0]:
        raise DimensionMismatch(f"Successor measure over {m.m.shape[2]} states, reward over {reward.r.shape[0]}")
    return m.m @ reward.r


def _check_distribution(p: np.ndarray, name: str) -> None:
    if p.ndim != 1 or np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise NotDistribution(f"{name} is not a probability distribution (sum={p.sum():.12g})",
                              component="occupancy")


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Total variation: half the l1 distance."""
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise NotDistribution(f"Support sizes differ: {p.shape} vs {q.shape}", component="occupancy")
    _check_distribution(p, "p")
    _check_distribution(q, "q")
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


def bellman_flow_residual(rho3: OccupancyTriple, mdp: TabularMdp, expert: np.ndarray) -> np.ndarray:
    """sum_s' rho(s,a,s') - (1-gamma) mu(s) pi(a|s) - gamma pi(a|s) sum rho(., ., s)."""
    table = rho3.rho3
    if table.shape != mdp.kernel.shape or expert.shape != (mdp.n_states, mdp.n_actions):
        raise DimensionMismatch(f"Occupancy {table.shape} / policy {expert.shape} do not fit MDP {mdp.kernel.shape}")

    outflow = table.sum(axis=2)
    inflow = table.sum(axis=(0, 1))
    return outflow - (1.0 - mdp.gamma) * mdp.mu[:, None] * expert - mdp.gamma * expert * inflow[:, None]
