"""Shared fixtures: small environments, random instances and tiny models."""

import numpy as np
import pytest

from base_inference import ExpertDataset
from config import EnvSpec
from environments import build_env
from fb_model import init_model
from mdp_core import rollout
from oracles import random_mdp, random_policy


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def chain_env():
    """Deterministic 5-state chain with gamma 0.9."""
    return build_env(EnvSpec(family="chain", n=5, slip=0.0, gamma=0.9))


@pytest.fixture
def random_instance(rng):
    mdp = random_mdp(4, 2, 0.9, rng)
    return mdp, random_policy(4, 2, rng)


@pytest.fixture
def tiny_model(rng):
    return init_model(5, 3, 4, 0.5, rng, init_scale=0.5)


@pytest.fixture
def tiny_expert(rng):
    mdp = random_mdp(5, 3, 0.9, rng)
    behaviour = random_policy(5, 3, rng)
    return ExpertDataset.from_trajectories([rollout(mdp, behaviour, 12, rng) for _ in range(3)], 5, 3)
