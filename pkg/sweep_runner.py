"""Robustness sweeps: pretrain and infer on nominal dynamics, evaluate on perturbed ones."""

import time
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger

from config import SweepConfig
from datasets import EXPLORATION_SOURCES, generate_expert, generate_expert_from_model, generate_exploratory_dataset
from environments import build_env, perturb_kernel
from errors import PreconditionError
from evaluation import evaluate_policy_exact, evaluate_policy_mc
from fb_model import policy_from_latent, pretrain
from method_manager import default_manager

COLUMNS = ["env", "task", "method", "mode", "magnitude", "seed", "return_exact", "return_mc"]
GROUP_COLUMNS = ["env", "task", "method", "mode", "magnitude"]
ABLATION_COLUMNS = ["ablation_param", "ablation_value"]

ABLATION_PARAMETERS = ("heavy_eps", "light_eps", "n_transitions", "exploration_source")
DEFAULT_ABLATION_VALUES = {
    "heavy_eps": [0.2, 0.4, 0.6, 0.8, 1.0],
    "light_eps": [0.2, 0.4, 0.6, 0.8, 1.0],
    "n_transitions": [5_000, 10_000, 25_000, 50_000],
    "exploration_source": list(EXPLORATION_SOURCES),
}

FLOAT_FORMAT = "%.12g"


class EvalReport:
    """Sweep rows in a pandas frame, kept in a total order for byte-stable CSV output."""

    def __init__(self, rows: pd.DataFrame):
        extra = [c for c in ABLATION_COLUMNS if c in rows.columns]
        self.columns = extra + COLUMNS
        order = extra + ["task", "method", "mode", "magnitude", "seed"]
        self.rows = rows[self.columns].sort_values(order, kind="mergesort").reset_index(drop=True)

    @classmethod
    def from_records(cls, records: List[Dict]) -> "EvalReport":
        return cls(pd.DataFrame.from_records(records, columns=COLUMNS))

    @classmethod
    def read_csv(cls, path: Path) -> "EvalReport":
        return cls(pd.read_csv(path))

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self, path: Optional[Path] = None) -> str:
        text = self.rows.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        if path is not None:
            Path(path).write_text(text)
        return text

    def aggregate(self) -> pd.DataFrame:
        """Mean exact return and 1.96 * stderr half-width across seeds."""
        keys = [c for c in ABLATION_COLUMNS if c in self.rows.columns] + GROUP_COLUMNS
        grouped = self.rows.groupby(keys, sort=True)["return_exact"].agg(["mean", "std", "count"]).reset_index()
        grouped["ci95"] = (1.96 * grouped["std"] / np.sqrt(grouped["count"])).fillna(0.0)
        return grouped.drop(columns=["std"]).rename(columns={"count": "n_seeds"})

    def worst_case(self) -> pd.DataFrame:
        """Per (task, method, seed), the lowest exact return over the perturbation grid."""
        keys = [c for c in ABLATION_COLUMNS if c in self.rows.columns] + ["env", "task", "method", "seed"]
        return self.rows.groupby(keys, sort=True)["return_exact"].min().reset_index()


def _seeded(config, seed: int):
    return config.model_copy(update={"seed": seed})


def run_sweep(config: SweepConfig) -> EvalReport:
    """Every (seed, task, method) latent evaluated exactly on every grid kernel."""
    mdp, tasks = build_env(config.env)
    grid = [(spec, perturb_kernel(mdp, spec, config.env)) for spec in config.grid]
    manager = default_manager()
    method_configs = {"fb_il": config.fb_il, "rbfm_light": config.light, "rbfm_heavy": config.heavy}

    records = []
    timings: Dict[str, List[float]] = defaultdict(list)
    for seed in config.seeds:
        logger.info(f"Seed {seed}: pretraining on nominal {config.env.family} data "
                    f"({config.exploration_source} exploration)")
        dataset = generate_exploratory_dataset(mdp, config.n_transitions, config.exploration_horizon,
                                               np.random.default_rng([seed, 0]),
                                               uniform_starts=config.exploration_uniform_starts,
                                               source=config.exploration_source,
                                               epsilon=config.exploration_epsilon)
        model = pretrain(dataset, _seeded(config.pretrain, seed))

        for task_index, (task, reward) in enumerate(tasks.items()):
            expert_rng = np.random.default_rng([seed, 1, task_index])
            if config.expert_source == "bfm":
                expert = generate_expert_from_model(mdp, model, dataset, reward, config.n_expert_traj,
                                                    config.expert_horizon, expert_rng)
            else:
                expert = generate_expert(mdp, reward, config.n_expert_traj, config.expert_horizon,
                                         config.expert_temperature, expert_rng)

            for method in config.methods:
                method_config = _seeded(method_configs[method], seed)
                started = time.perf_counter()
                result = manager.create(method, method_config.model_dump()).infer(model, expert)
                timings[method].append(time.perf_counter() - started)
                policy = policy_from_latent(model, result.z)

                for spec, perturbed in grid:
                    exact = evaluate_policy_exact(perturbed, policy, reward)
                    mc = float("nan")
                    if config.mc_episodes > 0:
                        mc, _ = evaluate_policy_mc(perturbed, policy, reward, config.mc_episodes,
                                                   np.random.default_rng([seed, 2, task_index]))
                    records.append({"env": config.env.family, "task": task, "method": method, "mode": spec.mode,
                                    "magnitude": spec.magnitude, "seed": seed, "return_exact": exact,
                                    "return_mc": mc})
                logger.info(f"  {task} / {method}: nominal-grid returns "
                            f"{[round(r['return_exact'], 3) for r in records[-len(grid):]]}")

    for method, elapsed in timings.items():
        logger.info(f"{method}: {len(elapsed)} inference runs, mean {np.mean(elapsed):.2f}s each")
    return EvalReport.from_records(records)


def apply_ablation(config: SweepConfig, parameter: str, value: Union[float, str]) -> SweepConfig:
    """Copy of the sweep config with one robustness or data parameter replaced."""
    if parameter == "heavy_eps":
        return config.model_copy(update={"heavy": config.heavy.model_copy(update={"eps": float(value)})})
    if parameter == "light_eps":
        return config.model_copy(update={"light": config.light.model_copy(update={"eps_l": float(value)})})
    if parameter == "n_transitions":
        return config.model_copy(update={"n_transitions": int(value)})
    if parameter == "exploration_source":
        if value not in EXPLORATION_SOURCES:
            raise PreconditionError(f"Unknown exploration source '{value}'",
                                    suggestions=[f"Sources: {', '.join(EXPLORATION_SOURCES)}"], component="ablate")
        return config.model_copy(update={"exploration_source": value})
    raise PreconditionError(f"Unknown ablation parameter '{parameter}'",
                            suggestions=[f"Parameters: {', '.join(ABLATION_PARAMETERS)}"], component="ablate")


def run_ablation(config: SweepConfig, parameter: str,
                 values: Optional[Sequence[Union[float, str]]] = None) -> EvalReport:
    """Rerun the sweep once per parameter value; rows are tagged with the value."""
    if parameter not in ABLATION_PARAMETERS:
        apply_ablation(config, parameter, 0.0)
    values = list(DEFAULT_ABLATION_VALUES[parameter] if values is None else values)
    # every value is validated before the first sweep starts
    configs = [apply_ablation(config, parameter, value) for value in values]
    frames = []
    for value, ablated in zip(values, configs):
        logger.info(f"Ablation {parameter}={value}")
        frame = run_sweep(ablated).rows.copy()
        frame.insert(0, "ablation_value", value)
        frame.insert(0, "ablation_param", parameter)
        frames.append(frame)
    return EvalReport(pd.concat(frames, ignore_index=True))
