"""Tabular benchmark environments and evaluation-time dynamics perturbations."""

from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from config import EnvSpec, PerturbationSpec
from errors import BadMagnitude, BadSpec
from mdp_core import RewardTable, TabularMdp, make_rng, validate_mdp
from oracles import random_kernel_in_tv_ball

# up, right, down, left
GRID_MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))

TaskMap = Dict[str, RewardTable]


def slip_kernel(effects: np.ndarray, slip: float) -> np.ndarray:
    """Kernel from a deterministic effect table effects[s, a] = s'.

    The intended effect happens with probability 1 - slip; otherwise one of
    the other actions' effects, uniformly.
    """
    n_states, n_actions = effects.shape
    kernel = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            kernel[s, a, effects[s, a]] += 1.0 - slip
            for other in range(n_actions):
                if other != a:
                    kernel[s, a, effects[s, other]] += slip / (n_actions - 1)
    return kernel


def _chain(spec: EnvSpec) -> Tuple[np.ndarray, np.ndarray, TaskMap]:
    n = spec.n
    states = np.arange(n)
    effects = np.stack([np.maximum(states - 1, 0), np.minimum(states + 1, n - 1)], axis=1)
    mu = np.zeros(n)
    mu[0] = 1.0
    tasks = {
        "goal_right": RewardTable("goal_right", np.eye(n)[n - 1]),
        "goal_middle": RewardTable("goal_middle", np.eye(n)[n // 2]),
    }
    return effects, mu, tasks


def _grid_effects(cells: List[Tuple[int, int]], blocked) -> np.ndarray:
    index = {cell: i for i, cell in enumerate(cells)}
    effects = np.zeros((len(cells), len(GRID_MOVES)), dtype=np.int64)
    for i, (row, col) in enumerate(cells):
        for a, (dr, dc) in enumerate(GRID_MOVES):
            target = (row + dr, col + dc)
            effects[i, a] = index[target] if target in index and not blocked(target) else i
    return effects


def _cliff(spec: EnvSpec) -> Tuple[np.ndarray, np.ndarray, TaskMap]:
    """Cliff walk: bottom row between start and goal is cliff.

    Entering a cliff cell costs -1 and every action from it returns to the
    start; the goal is absorbing.
    """
    height, width = spec.height, spec.width
    cells = [(r, c) for r in range(height) for c in range(width)]
    index = {cell: i for i, cell in enumerate(cells)}
    start, goal = index[(height - 1, 0)], index[(height - 1, width - 1)]
    top_right = index[(0, width - 1)]
    cliff = [index[(height - 1, c)] for c in range(1, width - 1)]

    effects = _grid_effects(cells, lambda cell: False)
    effects[cliff] = start
    effects[goal] = goal

    mu = np.zeros(len(cells))
    mu[start] = 1.0
    tasks = {}
    for name, target in (("goal", goal), ("top_right", top_right)):
        r = np.zeros(len(cells))
        r[cliff] = -1.0
        r[target] = 1.0
        tasks[name] = RewardTable(name, r)
    return effects, mu, tasks


def four_rooms_walls(size: int) -> set:
    """Wall cells of the four-rooms layout with one door per wall segment."""
    mid = size // 2
    walls = {(r, mid) for r in range(size) if r not in (size // 4, (3 * size) // 4)}
    walls |= {(mid, c) for c in range(mid) if c != size // 4}
    walls |= {(mid + 1, c) for c in range(mid + 1, size) if c != (3 * size) // 4}
    return walls


def _four_rooms(spec: EnvSpec) -> Tuple[np.ndarray, np.ndarray, TaskMap]:
    size = spec.size
    mid = size // 2
    walls = four_rooms_walls(size)
    cells = [(r, c) for r in range(size) for c in range(size) if (r, c) not in walls]
    index = {cell: i for i, cell in enumerate(cells)}
    effects = _grid_effects(cells, lambda cell: cell in walls)

    mu = np.array([1.0 if r < mid and c < mid else 0.0 for r, c in cells])
    mu /= mu.sum()

    corners = {"top_left": (0, 0), "top_right": (0, size - 1),
               "bottom_left": (size - 1, 0), "bottom_right": (size - 1, size - 1)}
    tasks = {name: RewardTable(name, np.eye(len(cells))[index[cell]]) for name, cell in corners.items()}
    return effects, mu, tasks


_BUILDERS = {"chain": _chain, "cliff": _cliff, "four_rooms": _four_rooms}


def build_effects(spec: EnvSpec) -> Tuple[np.ndarray, np.ndarray, TaskMap]:
    """Deterministic effect table, initial distribution and full task set of a family."""
    if spec.family not in _BUILDERS:
        raise BadSpec(f"Unknown environment family '{spec.family}'",
                      suggestions=[f"Families: {', '.join(_BUILDERS)}"], component="env")
    return _BUILDERS[spec.family](spec)


def build_env(spec: EnvSpec) -> Tuple[TabularMdp, TaskMap]:
    """Nominal MDP of an EnvSpec plus its named tasks."""
    if not 0.0 <= spec.slip < 1.0:
        raise BadSpec(f"slip={spec.slip} must lie in [0, 1)", component="env")

    effects, mu, tasks = build_effects(spec)
    mdp = TabularMdp(kernel=slip_kernel(effects, spec.slip), mu=mu, gamma=spec.gamma)
    validate_mdp(mdp)

    if spec.tasks is not None:
        unknown = sorted(set(spec.tasks) - set(tasks))
        if unknown:
            raise BadSpec(f"Unknown tasks {unknown} for {spec.family}",
                          suggestions=[f"Available tasks: {', '.join(sorted(tasks))}"], component="env")
        tasks = {name: tasks[name] for name in spec.tasks}

    logger.debug(f"Built {spec.family}: {mdp.n_states} states, {mdp.n_actions} actions, tasks={list(tasks)}")
    return mdp, tasks


def perturb_kernel(mdp: TabularMdp, spec: PerturbationSpec, env: Optional[EnvSpec] = None) -> TabularMdp:
    """Evaluation-time dynamics shift; magnitude 0 returns the nominal kernel in every mode."""
    magnitude = spec.magnitude
    if magnitude < 0.0:
        raise BadMagnitude(f"Perturbation magnitude {magnitude} is negative", component="perturb")

    if spec.mode == "slip_shift":
        if env is None:
            raise BadSpec("slip_shift needs the environment spec to rebuild the kernel", component="perturb")
        if env.slip + magnitude >= 1.0:
            raise BadMagnitude(f"slip {env.slip} + {magnitude} must stay below 1",
                               suggestions=["Lower the magnitude or the base slip"], component="perturb")
        if magnitude == 0.0:
            return mdp
        effects, _, _ = build_effects(env)
        perturbed = mdp.with_kernel(slip_kernel(effects, env.slip + magnitude))
    elif spec.mode == "uniform_mix":
        if magnitude > 1.0:
            raise BadMagnitude(f"uniform_mix alpha={magnitude} must lie in [0, 1]", component="perturb")
        if magnitude == 0.0:
            return mdp
        perturbed = mdp.with_kernel((1.0 - magnitude) * mdp.kernel + magnitude / mdp.n_states)
    elif spec.mode == "tv_adversarial":
        if magnitude > 1.0:
            raise BadMagnitude(f"tv_adversarial radius {magnitude} must lie in [0, 1]", component="perturb")
        perturbed = random_kernel_in_tv_ball(mdp, magnitude, make_rng(spec.seed))
    else:
        raise BadSpec(f"Unknown perturbation mode '{spec.mode}'", component="perturb")

    validate_mdp(perturbed)
    return perturbed
