"""End-to-end tests of the command-line interface."""

import json
import sys

import pytest
from click.testing import CliRunner
from loguru import logger

from config import dump_config, EnvSpec, FbIlConfig, PerturbationSpec, PretrainConfig, SweepConfig
from main import cli

CHAIN = {"family": "chain", "n": 5}


@pytest.fixture
def runner():
    yield CliRunner()
    # commands point loguru at the runner's captured stderr
    logger.remove()
    logger.add(sys.stderr)


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def invoke(runner, *args):
    return runner.invoke(cli, ["--log-level", "WARNING", *args])


def test_status(runner):
    result = invoke(runner, "status")
    assert result.exit_code == 0
    for name in ("fb_il", "rbfm_light", "rbfm_heavy", "prop1_duality"):
        assert name in result.output


def test_pretrain_expert_infer_eval(runner, tmp_path):
    env = write_json(tmp_path / "env.json", CHAIN)
    job = write_json(tmp_path / "job.json", {"env": CHAIN, "n_transitions": 200, "horizon": 10,
                                             "pretrain": {"steps": 10, "batch_size": 16, "d": 4}})
    model, expert, z = tmp_path / "model.json", tmp_path / "expert.json", tmp_path / "z.json"

    result = invoke(runner, "pretrain", "--config", job, "--out", str(model))
    assert result.exit_code == 0, result.output
    assert model.exists()

    result = invoke(runner, "expert", "--env", env, "--task", "goal_right", "--out", str(expert),
                    "--n-traj", "2", "--horizon", "6")
    assert result.exit_code == 0, result.output

    method_config = write_json(tmp_path / "fb_il.json", {"steps": 5, "batch_size": 8})
    result = invoke(runner, "infer", "--model", str(model), "--expert", str(expert), "--method", "fb_il",
                    "--config", method_config, "--out", str(z))
    assert result.exit_code == 0, result.output
    assert len(json.loads(z.read_text())["loss_trace"]) == 5

    result = invoke(runner, "eval", "--model", str(model), "--z", str(z), "--task", "goal_right", "--env", env,
                    "--perturb", "uniform_mix:0.1", "--mc-episodes", "10")
    assert result.exit_code == 0, result.output
    assert "exact return" in result.output
    assert "Monte-Carlo" in result.output

    result = invoke(runner, "eval", "--model", str(model), "--z", str(z), "--task", "nowhere", "--env", env)
    assert result.exit_code == 1
    assert "Unknown task" in result.output


def test_invalid_method_config_exits_with_message(runner, tmp_path):
    bad = write_json(tmp_path / "light.json", {"eps_l": -1.0})
    model = write_json(tmp_path / "model.json", {})
    expert = write_json(tmp_path / "expert.json", {})
    result = invoke(runner, "infer", "--model", model, "--expert", expert, "--method", "rbfm_light",
                    "--config", bad, "--out", str(tmp_path / "z.json"))
    assert result.exit_code == 1
    assert "❌" in result.output
    assert "LightConfig" in result.output


def test_verify_single_check(runner, tmp_path):
    out = tmp_path / "reports"
    result = invoke(runner, "verify", "--check", "soft_tv_identities", "--out", str(out))
    assert result.exit_code == 0, result.output
    assert "1/1 checks passed" in result.output
    assert json.loads((out / "soft_tv_identities.json").read_text())["passed"] is True


def test_sweep_writes_csv(runner, tmp_path):
    config = SweepConfig(env=EnvSpec(family="chain", n=4, tasks=["goal_right"]),
                         pretrain=PretrainConfig(steps=5, batch_size=16, d=4),
                         methods=["fb_il"], fb_il=FbIlConfig(steps=5, batch_size=8),
                         grid=[PerturbationSpec(mode="uniform_mix", magnitude=0.0),
                               PerturbationSpec(mode="uniform_mix", magnitude=0.5)],
                         n_transitions=100, exploration_horizon=10, n_expert_traj=1, expert_horizon=5, seeds=[0])
    path = write_json(tmp_path / "sweep.json", dump_config(config))
    out = tmp_path / "report.csv"
    result = invoke(runner, "sweep", "--config", path, "--out", str(out), "--summary")
    assert result.exit_code == 0, result.output
    lines = out.read_text().splitlines()
    assert lines[0] == "env,task,method,mode,magnitude,seed,return_exact,return_mc"
    assert len(lines) == 3


def test_artifacts_are_byte_identical_on_rerun(runner, tmp_path):
    env = write_json(tmp_path / "env.json", CHAIN)
    job = write_json(tmp_path / "job.json", {"env": CHAIN, "n_transitions": 200, "horizon": 10,
                                             "pretrain": {"steps": 10, "batch_size": 16, "d": 4}})
    method_config = write_json(tmp_path / "light.json", {"steps": 5, "batch_size": 8})
    expert = tmp_path / "expert.json"
    assert invoke(runner, "expert", "--env", env, "--task", "goal_right", "--out", str(expert),
                  "--n-traj", "2", "--horizon", "6").exit_code == 0

    for run in ("a", "b"):
        run_dir = tmp_path / run
        result = invoke(runner, "pretrain", "--config", job, "--out", str(run_dir / "model.json"))
        assert result.exit_code == 0, result.output
        result = invoke(runner, "infer", "--model", str(run_dir / "model.json"), "--expert", str(expert),
                        "--method", "rbfm_light", "--config", method_config, "--out", str(run_dir / "z.json"))
        assert result.exit_code == 0, result.output
        result = invoke(runner, "verify", "--check", "soft_tv_identities", "--check", "prop1_duality",
                        "--out", str(run_dir / "reports"))
        assert result.exit_code == 0, result.output

    for name in ("model.json", "z.json", "reports/soft_tv_identities.json", "reports/prop1_duality.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_artifacts_default_to_the_output_dir(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("RBFM_OUTPUT_DIR", str(tmp_path / "runs"))
    job = write_json(tmp_path / "job.json", {"env": CHAIN, "n_transitions": 100, "horizon": 10,
                                             "pretrain": {"steps": 5, "batch_size": 16, "d": 4}})
    result = invoke(runner, "pretrain", "--config", job)
    assert result.exit_code == 0, result.output
    assert (tmp_path / "runs" / "model.json").exists()

    env = write_json(tmp_path / "env.json", CHAIN)
    result = invoke(runner, "expert", "--env", env, "--task", "goal_right", "--n-traj", "1", "--horizon", "4")
    assert result.exit_code == 0, result.output
    assert (tmp_path / "runs" / "expert_goal_right.json").exists()


def test_ablate_over_exploration_sources(runner, tmp_path):
    config = SweepConfig(env=EnvSpec(family="chain", n=4, tasks=["goal_right"]),
                         pretrain=PretrainConfig(steps=5, batch_size=16, d=4),
                         methods=["fb_il"], fb_il=FbIlConfig(steps=5, batch_size=8),
                         grid=[PerturbationSpec(mode="uniform_mix", magnitude=0.0)],
                         n_transitions=100, exploration_horizon=10, n_expert_traj=1, expert_horizon=5, seeds=[0])
    path = write_json(tmp_path / "sweep.json", dump_config(config))
    out = tmp_path / "ablation.csv"
    result = invoke(runner, "ablate", "--config", path, "--parameter", "exploration_source",
                    "--values", "uniform,novelty", "--out", str(out))
    assert result.exit_code == 0, result.output
    lines = out.read_text().splitlines()
    assert lines[0].startswith("ablation_param,ablation_value,")
    assert len(lines) == 3
    assert "novelty" in lines[2]
