"""RBFM-Light: imitation under a total-variation ball around the expert state distribution.

The worst case over the ball is handled through its one-dimensional dual,
E_w[(L - lambda)+] + eps_l (max L - lambda)+ + lambda, which is convex and
piecewise linear in lambda, so each minibatch solves lambda exactly by
enumerating breakpoints.
"""

import time
from typing import Tuple

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
from config import LightConfig, dump_config
from errors import DimensionMismatch
from fb_model import FbModel
from mdp_core import make_rng
from optimizers import make_optimizer

# Relative slack under which two breakpoint values count as tied
TIE_TOL = 1e-12


def light_dual_value(losses: np.ndarray, weights: np.ndarray, eps_l: float, lam: float) -> float:
    losses = np.asarray(losses, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if losses.shape != weights.shape or losses.size == 0:
        raise DimensionMismatch(f"losses {losses.shape} and weights {weights.shape} must match and be nonempty",
                                component="rbfm_light")
    hinge = np.maximum(losses - lam, 0.0)
    return float(weights @ hinge + eps_l * max(losses.max() - lam, 0.0) + lam)


def light_minimize_lambda(losses: np.ndarray, weights: np.ndarray, eps_l: float) -> Tuple[float, float]:
    """Exact argmin over lambda; ties resolve to the smallest lambda."""
    losses = np.asarray(losses, dtype=np.float64)
    candidates = np.unique(np.concatenate(([0.0], losses, [losses.max()])))
    values = np.array([light_dual_value(losses, weights, eps_l, lam) for lam in candidates])
    best = values.min()
    pick = int(np.flatnonzero(values <= best + TIE_TOL * max(1.0, abs(best)))[0])
    return float(candidates[pick]), float(values[pick])


def light_z_weights(batch_losses: np.ndarray, weights: np.ndarray, eps_l: float, lam: float) -> np.ndarray:
    """Per-item weights of the subgradient of the dual objective in z.

    Hinges count as active at equality; the max term routes through the
    first maximizing item.
    """
    out = weights * (batch_losses >= lam)
    top = int(np.argmax(batch_losses))
    if batch_losses[top] >= lam:
        out[top] += eps_l
    return out


def infer_rbfm_light(model: FbModel, expert: ExpertDataset, config: LightConfig) -> InferenceResult:
    rng = make_rng(config.seed)
    optimizer = make_optimizer(config.optimizer, config.lr)
    z = warm_start_z(model, expert)
    uniform = np.full(config.batch_size, 1.0 / config.batch_size)
    loss_trace, lambda_trace = [], []

    logger.info(f"RBFM-Light: eps_l={config.eps_l}, {config.steps} steps on {len(expert)} expert transitions")
    started = time.perf_counter()
    for _ in range(config.steps):
        states = expert.s[expert.sample_indices(config.batch_size, rng)]
        losses, grads = imitation_losses_and_grads(model, z, expert.policy)
        batch_losses = losses[states]

        if config.fixed_lambda is None:
            lam, value = light_minimize_lambda(batch_losses, uniform, config.eps_l)
        else:
            lam = config.fixed_lambda
            value = light_dual_value(batch_losses, uniform, config.eps_l, lam)
        loss_trace.append(value)
        lambda_trace.append(lam)

        item_weights = light_z_weights(batch_losses, uniform, config.eps_l, lam)
        z = sphere_step(optimizer, z, weighted_state_grad(grads, states, item_weights))

    logger.info(f"RBFM-Light finished in {time.perf_counter() - started:.2f}s")
    return InferenceResult(method=InferenceMethod.RBFM_LIGHT.value, z=z, loss_trace=loss_trace,
                           lambda_trace=lambda_trace, config=dump_config(config), seed=config.seed)


class RbfmLightInference(BaseTaskInference):
    method = InferenceMethod.RBFM_LIGHT
    config_model = LightConfig

    def infer(self, model: FbModel, expert: ExpertDataset) -> InferenceResult:
        return infer_rbfm_light(model, expert, self.config or LightConfig.model_validate(self.raw_config))
