"""Configuration management for the robust BFM imitation engine."""

import json
from pathlib import Path
from typing import List, Literal, Optional, Type, TypeVar

from pydantic import BaseModel, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from errors import ConfigError


class Settings(BaseSettings):
    """Process-level settings, read from RBFM_* environment variables or a .env file."""

    model_config = SettingsConfigDict(env_prefix="RBFM_", env_file=".env", env_file_encoding="utf-8", extra="ignore")

    log_level: str = Field(default="INFO")
    output_dir: Path = Field(default=Path.cwd() / "runs")
    default_seed: int = Field(default=0, ge=0)

    # Multiplier applied to oracle trial counts by `verify`
    verify_trials_scale: float = Field(default=1.0, gt=0.0)


def get_settings() -> Settings:
    """Get application settings."""
    return Settings()


OptimizerName = Literal["adam", "sgd"]
ExplorationSource = Literal["uniform", "novelty", "goal_directed"]


class EnvSpec(BaseModel):
    """Tabular environment family plus its size parameters."""

    family: Literal["chain", "cliff", "four_rooms"] = "four_rooms"
    n: int = Field(default=5, ge=2)  # chain length
    width: int = Field(default=6, ge=3)  # cliff
    height: int = Field(default=3, ge=2)  # cliff
    size: int = Field(default=11, ge=5)  # four_rooms side length
    slip: float = Field(default=0.1, ge=0.0, lt=1.0)
    gamma: float = Field(default=0.98, gt=0.0, lt=1.0)
    tasks: Optional[List[str]] = None  # None keeps every task of the family


class PerturbationSpec(BaseModel):
    """Dynamics perturbation applied only at evaluation time."""

    mode: Literal["slip_shift", "uniform_mix", "tv_adversarial"] = "tv_adversarial"
    magnitude: float = Field(default=0.0, ge=0.0)
    seed: int = Field(default=0, ge=0)

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "PerturbationSpec":
        """Parse the CLI form `mode:magnitude`."""
        try:
            mode, magnitude = text.split(":", 1)
            return cls(mode=mode, magnitude=float(magnitude), seed=seed)
        except (ValueError, ValidationError) as e:
            raise ConfigError(
                f"Invalid perturbation '{text}': {e}",
                suggestions=["Use the form mode:magnitude, e.g. tv_adversarial:0.1",
                             "Modes: slip_shift, uniform_mix, tv_adversarial"],
            )


# Upper end of the default sweep grid for each perturbation mode
MODE_MAX = {"slip_shift": 0.5, "uniform_mix": 1.0, "tv_adversarial": 0.5}


def default_grid(mode: str = "tv_adversarial", points: int = 6, seed: int = 0) -> List[PerturbationSpec]:
    """Monotone-severity grid from 0 to the mode maximum."""
    top = MODE_MAX[mode]
    return [PerturbationSpec(mode=mode, magnitude=round(top * i / (points - 1), 10), seed=seed) for i in range(points)]


class PretrainConfig(BaseModel):
    """Forward-backward pretraining hyperparameters (desk-scale defaults)."""

    steps: int = Field(default=20_000, ge=0)
    batch_size: int = Field(default=256, gt=0)
    lr: float = Field(default=5e-3, gt=0.0)
    polyak: float = Field(default=0.01, gt=0.0, le=1.0)
    z_mix_ratio: float = Field(default=0.5, ge=0.0, le=1.0)
    d: int = Field(default=8, gt=0)
    temperature: float = Field(default=0.2, gt=0.0)
    gamma: float = Field(default=0.98, gt=0.0, lt=1.0)
    optimizer: OptimizerName = "adam"
    init_scale: float = Field(default=0.1, ge=0.0)
    log_every: int = Field(default=1000, gt=0)
    seed: int = Field(default=0, ge=0)


class FbIlConfig(BaseModel):
    """FB-IL task inference hyperparameters."""

    steps: int = Field(default=3000, ge=0)
    lr: float = Field(default=1e-3, gt=0.0)
    batch_size: int = Field(default=512, gt=0)
    optimizer: OptimizerName = "adam"
    seed: int = Field(default=0, ge=0)


class LightConfig(BaseModel):
    """RBFM-Light task inference hyperparameters."""

    eps_l: float = Field(default=0.8, ge=0.0)
    steps: int = Field(default=5000, ge=0)
    lr: float = Field(default=5e-4, gt=0.0)
    batch_size: int = Field(default=512, gt=0)
    optimizer: OptimizerName = "adam"
    # Pins lambda instead of minimizing it exactly each step
    fixed_lambda: Optional[float] = None
    seed: int = Field(default=0, ge=0)


class HeavyConfig(BaseModel):
    """RBFM-Heavy task inference hyperparameters."""

    eps: float = Field(default=0.8, ge=0.0)
    steps: int = Field(default=5000, ge=0)
    lr_z: float = Field(default=3e-4, gt=0.0)
    lr_dual: float = Field(default=3e-4, gt=0.0)
    batch_size: int = Field(default=512, gt=0)
    gamma: float = Field(default=0.99, gt=0.0, lt=1.0)
    w_max: float = Field(default=10.0, gt=0.0)
    y_clip: Optional[float] = Field(default=1e-3, gt=0.0, lt=0.5)
    dual_steps_per_z_step: int = Field(default=1, ge=1)
    optimizer: OptimizerName = "adam"
    seed: int = Field(default=0, ge=0)


class PretrainJob(BaseModel):
    """Everything `pretrain` needs: environment, exploratory data size and FB hyperparameters."""

    env: EnvSpec = Field(default_factory=EnvSpec)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    n_transitions: int = Field(default=50_000, ge=0)
    horizon: int = Field(default=100, gt=0)
    # Episodes start anywhere instead of from mu
    uniform_starts: bool = True
    exploration_source: ExplorationSource = "uniform"
    exploration_epsilon: float = Field(default=0.2, ge=0.0, le=1.0)


class SweepConfig(BaseModel):
    """End-to-end robustness sweep."""

    env: EnvSpec = Field(default_factory=EnvSpec)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    methods: List[Literal["fb_il", "rbfm_light", "rbfm_heavy"]] = Field(
        default_factory=lambda: ["fb_il", "rbfm_light", "rbfm_heavy"])
    fb_il: FbIlConfig = Field(default_factory=FbIlConfig)
    light: LightConfig = Field(default_factory=LightConfig)
    heavy: HeavyConfig = Field(default_factory=HeavyConfig)
    grid: List[PerturbationSpec] = Field(default_factory=default_grid)
    n_transitions: int = Field(default=50_000, ge=1)
    exploration_horizon: int = Field(default=100, gt=0)
    exploration_uniform_starts: bool = True
    exploration_source: ExplorationSource = "uniform"
    exploration_epsilon: float = Field(default=0.2, ge=0.0, le=1.0)
    n_expert_traj: int = Field(default=4, gt=0)
    expert_horizon: int = Field(default=50, gt=0)
    expert_temperature: float = Field(default=0.05, ge=0.0)
    expert_source: Literal["value_iteration", "bfm"] = "value_iteration"
    mc_episodes: int = Field(default=0, ge=0)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])

    @model_validator(mode="after")
    def _check_nonempty(self) -> "SweepConfig":
        if not self.grid:
            raise ValueError("perturbation grid must not be empty")
        if not self.seeds:
            raise ValueError("seed list must not be empty")
        if not self.methods:
            raise ValueError("at least one method is required")
        return self


ModelT = TypeVar("ModelT", bound=BaseModel)


def load_config(model_cls: Type[ModelT], path: Path) -> ModelT:
    """Read a JSON config file and validate it against a pydantic model."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(
            f"Config file not found: {path}",
            suggestions=["Check the path passed on the command line",
                         f"Write a JSON document matching {model_cls.__name__}"],
        )

    try:
        return model_cls.model_validate_json(path.read_text())
    except ValidationError as e:
        raise ConfigError(
            f"Invalid {model_cls.__name__} in {path}",
            suggestions=[f"• {err['loc']}: {err['msg']}" for err in e.errors()],
        )


def dump_config(config: BaseModel) -> dict:
    """Plain-JSON view of a config, for embedding in result artifacts."""
    return json.loads(config.model_dump_json())
