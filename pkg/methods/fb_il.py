"""FB-IL: match the expert's action distribution under the nominal dynamics."""

import time

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
from config import FbIlConfig, dump_config
from fb_model import FbModel
from mdp_core import make_rng
from optimizers import make_optimizer


def infer_fb_il(model: FbModel, expert: ExpertDataset, config: FbIlConfig) -> InferenceResult:
    """Minimize E_{s~w}[L_{pi_z}(s)] over the sphere, starting from the warm-start latent."""
    rng = make_rng(config.seed)
    optimizer = make_optimizer(config.optimizer, config.lr)
    z = warm_start_z(model, expert)
    uniform = np.full(config.batch_size, 1.0 / config.batch_size)
    loss_trace = []

    logger.info(f"FB-IL: {config.steps} steps on {len(expert)} expert transitions")
    started = time.perf_counter()
    for _ in range(config.steps):
        states = expert.s[expert.sample_indices(config.batch_size, rng)]
        losses, grads = imitation_losses_and_grads(model, z, expert.policy)
        loss_trace.append(float(np.mean(losses[states])))
        z = sphere_step(optimizer, z, weighted_state_grad(grads, states, uniform))

    logger.info(f"FB-IL finished in {time.perf_counter() - started:.2f}s")
    return InferenceResult(method=InferenceMethod.FB_IL.value, z=z, loss_trace=loss_trace,
                           config=dump_config(config), seed=config.seed)


class FbIlInference(BaseTaskInference):
    method = InferenceMethod.FB_IL
    config_model = FbIlConfig

    def infer(self, model: FbModel, expert: ExpertDataset) -> InferenceResult:
        return infer_fb_il(model, expert, self.config or FbIlConfig.model_validate(self.raw_config))
