"""Robust BFM Imitation Engine - Main CLI Interface."""

import functools
import json
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np
from loguru import logger

from base_inference import InferenceResult
from config import (
    EnvSpec,
    FbIlConfig,
    HeavyConfig,
    LightConfig,
    PerturbationSpec,
    PretrainJob,
    SweepConfig,
    get_settings,
    load_config,
)
from errors import ConfigError, RbfmError
from method_manager import default_manager

LOG_FORMAT = ("<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | "
              "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>")

METHOD_CONFIGS = {"fb_il": FbIlConfig, "rbfm_light": LightConfig, "rbfm_heavy": HeavyConfig}


def configure_logging(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format=LOG_FORMAT)


def cli_errors(action: str):
    """Print RbfmErrors with their suggestions and exit 1; log anything else with a traceback."""
    def decorator(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except RbfmError as e:
                click.echo(e.get_formatted_error())
                sys.exit(1)
            except Exception as e:
                click.echo(f"❌ {action} failed: {e}")
                logger.exception(f"{action} error")
                sys.exit(1)
        return wrapper
    return decorator


def _load_env(path: Optional[str]) -> EnvSpec:
    return load_config(EnvSpec, Path(path)) if path else EnvSpec()


def _resolve_out(out: Optional[str], default_name: str) -> Path:
    """The given --out path, or default_name under the configured output directory."""
    path = Path(out) if out else get_settings().output_dir / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _pick_task(tasks, task: str):
    if task not in tasks:
        raise ConfigError(f"Unknown task '{task}'", suggestions=[f"Available tasks: {', '.join(tasks)}"])
    return tasks[task]


@click.group()
@click.option('--log-level', default=None, help='Override RBFM_LOG_LEVEL')
def cli(log_level: Optional[str]):
    """🤖 Robust BFM Imitation Engine

    Pretrain a forward-backward model on nominal tabular dynamics, infer task
    latents from a few expert demonstrations, and measure how the imitating
    policy holds up when the dynamics shift.

    Methods: fb_il, rbfm_light, rbfm_heavy
    """
    configure_logging(log_level or get_settings().log_level)


@cli.command()
def status():
    """📊 Show registered methods, oracle checks and settings."""
    from oracles import CHECKS

    settings = get_settings()
    click.echo("🤖 Robust BFM Imitation Engine Status\n")

    manager = default_manager()
    for name, info in manager.get_method_status().items():
        mark = "✅" if info["configured"] else "❌"
        click.echo(f"{mark} {name}  ({info['config_model']} defaults)")
        for error in info["errors"]:
            click.echo(f"      • {error}")

    click.echo("\n🔬 Oracle checks:")
    for name, (suite, trials, _) in CHECKS.items():
        click.echo(f"   {suite:<10} {name} ({trials} trials)")

    click.echo(f"\n⚙️  Output dir: {settings.output_dir}")
    click.echo(f"⚙️  Log level: {settings.log_level}")


@cli.command()
@click.option('--config', 'config_path', required=True, type=click.Path(exists=True), help='PretrainJob JSON')
@click.option('--out', type=click.Path(), help='Model checkpoint JSON (default OUTPUT_DIR/model.json)')
@cli_errors("Pretraining")
def pretrain(config_path: str, out: Optional[str]):
    """🧠 Pretrain a forward-backward model on nominal exploratory data."""
    from datasets import generate_exploratory_dataset
    from environments import build_env
    from fb_model import pretrain as run_pretrain, save_model

    job = load_config(PretrainJob, Path(config_path))
    mdp, _ = build_env(job.env)
    dataset = generate_exploratory_dataset(mdp, job.n_transitions, job.horizon,
                                           np.random.default_rng([job.pretrain.seed, 0]),
                                           uniform_starts=job.uniform_starts, source=job.exploration_source,
                                           epsilon=job.exploration_epsilon)
    model = run_pretrain(dataset, job.pretrain)
    out = _resolve_out(out, "model.json")
    save_model(model, out)
    click.echo(f"✅ Model saved to {out} ({mdp.n_states} states, d={model.d})")


@cli.command()
@click.option('--env', 'env_path', type=click.Path(exists=True), help='EnvSpec JSON (default four_rooms)')
@click.option('--task', required=True, help='Task name of the environment')
@click.option('--out', type=click.Path(), help='Expert dataset JSON (default OUTPUT_DIR/expert_TASK.json)')
@click.option('--n-traj', default=4, show_default=True, help='Number of expert trajectories')
@click.option('--horizon', default=50, show_default=True, help='Trajectory length')
@click.option('--temperature', default=0.05, show_default=True, help='Expert softmax temperature (0 = greedy)')
@click.option('--seed', default=0, show_default=True)
@cli_errors("Expert generation")
def expert(env_path: Optional[str], task: str, out: Optional[str], n_traj: int, horizon: int, temperature: float, seed: int):
    """🎓 Generate expert demonstrations on the nominal dynamics."""
    from datasets import generate_expert, save_expert
    from environments import build_env

    mdp, tasks = build_env(_load_env(env_path))
    demos = generate_expert(mdp, _pick_task(tasks, task), n_traj, horizon, temperature, seed)
    out = _resolve_out(out, f"expert_{task}.json")
    save_expert(demos, out)
    click.echo(f"✅ {n_traj} trajectories for '{task}' saved to {out}")


@cli.command()
@click.option('--model', 'model_path', required=True, type=click.Path(exists=True))
@click.option('--expert', 'expert_path', required=True, type=click.Path(exists=True))
@click.option('--method', required=True, type=click.Choice(list(METHOD_CONFIGS)))
@click.option('--config', 'config_path', type=click.Path(exists=True), help='Method config JSON')
@click.option('--out', type=click.Path(), help='Inference result JSON (default OUTPUT_DIR/z_METHOD.json)')
@cli_errors("Inference")
def infer(model_path: str, expert_path: str, method: str, config_path: Optional[str], out: Optional[str]):
    """🎯 Infer a task latent from expert demonstrations."""
    from datasets import load_expert
    from fb_model import load_model

    method_config = load_config(METHOD_CONFIGS[method], Path(config_path)) if config_path else METHOD_CONFIGS[method]()
    runner = default_manager().create(method, method_config.model_dump())
    result = runner.infer(load_model(Path(model_path)), load_expert(Path(expert_path)))
    out = _resolve_out(out, f"z_{method}.json")
    out.write_text(json.dumps(result.to_dict(), indent=2))
    click.echo(f"✅ {method}: final loss {result.loss_trace[-1] if result.loss_trace else float('nan'):.5f}, "
               f"latent saved to {out}")


@cli.command(name="eval")
@click.option('--model', 'model_path', required=True, type=click.Path(exists=True))
@click.option('--z', 'z_path', required=True, type=click.Path(exists=True), help='Inference result JSON')
@click.option('--task', required=True)
@click.option('--perturb', default="tv_adversarial:0", show_default=True, help='mode:magnitude')
@click.option('--env', 'env_path', type=click.Path(exists=True), help='EnvSpec JSON (default four_rooms)')
@click.option('--seed', default=0, show_default=True, help='Seed of the tv_adversarial kernel')
@click.option('--mc-episodes', default=0, show_default=True, help='Monte-Carlo cross-check episodes')
@cli_errors("Evaluation")
def evaluate(model_path: str, z_path: str, task: str, perturb: str, env_path: Optional[str], seed: int,
             mc_episodes: int):
    """📈 Evaluate an inferred latent on perturbed dynamics."""
    from environments import build_env, perturb_kernel
    from evaluation import evaluate_policy_exact, evaluate_policy_mc
    from fb_model import load_model, policy_from_latent

    env = _load_env(env_path)
    spec = PerturbationSpec.parse(perturb, seed=seed)
    mdp, tasks = build_env(env)
    reward = _pick_task(tasks, task)
    model = load_model(Path(model_path))
    z = InferenceResult.from_dict(json.loads(Path(z_path).read_text())).z
    policy = policy_from_latent(model, z)

    perturbed = perturb_kernel(mdp, spec, env)
    click.echo(f"📈 {task} under {spec.mode}={spec.magnitude}: exact return "
               f"{evaluate_policy_exact(perturbed, policy, reward):.6f}")
    if mc_episodes > 0:
        mean, stderr = evaluate_policy_mc(perturbed, policy, reward, mc_episodes, seed)
        click.echo(f"🎲 Monte-Carlo: {mean:.6f} ± {stderr:.6f} (stderr, {mc_episodes} episodes)")


@cli.command()
@click.option('--config', 'config_path', required=True, type=click.Path(exists=True), help='SweepConfig JSON')
@click.option('--out', type=click.Path(), help='Report CSV (default OUTPUT_DIR/sweep.csv)')
@click.option('--summary', is_flag=True, help='Print seed aggregates')
@cli_errors("Sweep")
def sweep(config_path: str, out: Optional[str], summary: bool):
    """🌪️  Run a perturbation sweep over methods, tasks and seeds."""
    from sweep_runner import run_sweep

    report = run_sweep(load_config(SweepConfig, Path(config_path)))
    out = _resolve_out(out, "sweep.csv")
    report.to_csv(out)
    click.echo(f"✅ {len(report)} rows written to {out}")
    if summary:
        click.echo(report.aggregate().to_string(index=False))


@cli.command()
@click.option('--config', 'config_path', required=True, type=click.Path(exists=True), help='SweepConfig JSON')
@click.option('--parameter', required=True, type=click.Choice(['heavy_eps', 'light_eps', 'n_transitions', 'exploration_source']))
@click.option('--values', default=None, help='Comma-separated values (default grid if omitted)')
@click.option('--out', type=click.Path(), help='Report CSV (default OUTPUT_DIR/ablation_PARAMETER.csv)')
@cli_errors("Ablation")
def ablate(config_path: str, parameter: str, values: Optional[str], out: Optional[str]):
    """🧪 Sweep once per value of a robustness or data-size parameter."""
    from sweep_runner import run_ablation

    parsed = None
    if values:
        # source names stay strings
        parsed = values.split(",") if parameter == "exploration_source" else [float(v) for v in values.split(",")]
    report = run_ablation(load_config(SweepConfig, Path(config_path)), parameter, parsed)
    out = _resolve_out(out, f"ablation_{parameter}.csv")
    report.to_csv(out)
    click.echo(f"✅ {len(report)} rows written to {out}")
    click.echo(report.aggregate().to_string(index=False))


@cli.command()
@click.option('--suite', default='all', show_default=True,
              type=click.Choice(['all', 'lemmas', 'props', 'gradients', 'model']))
@click.option('--out', default=None, type=click.Path(), help='Directory for per-check JSON reports')
@click.option('--seed', default=None, type=int, help='Defaults to RBFM_DEFAULT_SEED')
@click.option('--check', 'checks', multiple=True, help='Run only the named check(s)')
@cli_errors("Verification")
def verify(suite: str, out: Optional[str], seed: Optional[int], checks):
    """🔬 Run the brute-force oracle checks."""
    from oracles import run_checks

    settings = get_settings()
    reports = run_checks(suite, settings.default_seed if seed is None else seed, settings.verify_trials_scale,
                         names=list(checks) or None)

    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for report in reports:
            (out_dir / f"{report.name}.json").write_text(json.dumps(report.to_dict(), indent=2))

    click.echo(f"\n{'check':<20} {'trials':>7} {'max_violation':>14} {'tolerance':>10}  result")
    for report in reports:
        click.echo(f"{report.name:<20} {report.trials:>7} {report.max_violation:>14.3e} "
                   f"{report.tolerance:>10.1e}  {'✅' if report.passed else '❌'}")

    failed = [r.name for r in reports if not r.passed]
    click.echo(f"\n📊 {len(reports) - len(failed)}/{len(reports)} checks passed")
    if failed:
        sys.exit(1)


if __name__ == '__main__':
    cli()
