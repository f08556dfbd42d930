"""Tests for the forward-backward model: embeddings, latent sampling, TD gradients and pretraining."""

import numpy as np
import pytest

from config import PretrainConfig
from errors import EmptyDataset, ZeroVector
from fb_model import (
    FbBatch,
    TransitionDataset,
    Transition,
    fb_td_loss_and_grads,
    forward_embed,
    init_model,
    load_model,
    policy_from_latent,
    pretrain,
    project_to_sphere,
    sample_latent,
    sample_latents,
    save_model,
    z_from_reward,
)
from mdp_core import RewardTable
from oracles import check_fb_gradients


def small_dataset(rng, n=200, n_states=5, n_actions=3):
    return TransitionDataset(s=rng.integers(n_states, size=n), a=rng.integers(n_actions, size=n),
                             s_next=rng.integers(n_states, size=n), n_states=n_states, n_actions=n_actions)


def test_dataset_rejects_out_of_range_indices():
    from errors import DimensionMismatch

    with pytest.raises(DimensionMismatch):
        TransitionDataset(s=[0, 5], a=[0, 0], s_next=[1, 1], n_states=5, n_actions=2)


def test_dataset_from_transitions():
    data = TransitionDataset.from_transitions([Transition(0, 1, 2), Transition(2, 0, 1)], 3, 2)
    assert len(data) == 2
    assert data.transitions()[1] == Transition(2, 0, 1)
    np.testing.assert_array_equal(data.states, [2, 1])
    assert data.coverage()[0, 1] == 1


def test_init_model_shapes_and_targets(tiny_model):
    assert tiny_model.theta.shape == (5, 3, 4, 4)
    assert tiny_model.theta0.shape == (5, 3, 4)
    np.testing.assert_allclose(np.linalg.norm(tiny_model.b, axis=1), 2.0)
    np.testing.assert_array_equal(tiny_model.target_theta, tiny_model.theta)
    assert tiny_model.target_b is not tiny_model.b


def test_forward_embed_is_affine_in_z(tiny_model, rng):
    z1, z2 = rng.standard_normal(4), rng.standard_normal(4)
    left = forward_embed(tiny_model, 2, 1, 0.3 * z1 + 0.7 * z2)
    right = 0.3 * forward_embed(tiny_model, 2, 1, z1) + 0.7 * forward_embed(tiny_model, 2, 1, z2)
    np.testing.assert_allclose(left, right, atol=1e-12)


def test_identity_forward_returns_latent(tiny_model, rng):
    tiny_model.theta[:] = np.eye(4)
    tiny_model.theta0[:] = 0.0
    z = rng.standard_normal(4)
    np.testing.assert_allclose(forward_embed(tiny_model, 0, 0, z), z)


def test_project_to_sphere():
    np.testing.assert_allclose(project_to_sphere(np.array([3.0, 4.0])), np.array([3.0, 4.0]) * np.sqrt(2) / 5)
    with pytest.raises(ZeroVector):
        project_to_sphere(np.zeros(3))


def test_latent_from_b_is_a_dataset_row(tiny_model, rng):
    data = small_dataset(rng)
    z = sample_latent(tiny_model, data, 0.0, rng)
    assert any(np.array_equal(z, tiny_model.b[s]) for s in data.states)
    assert np.linalg.norm(z) == pytest.approx(2.0)


def test_sphere_latents_are_centered(tiny_model, rng):
    data = small_dataset(rng)
    z = sample_latents(tiny_model, data, 100_000, 1.0, rng)
    np.testing.assert_allclose(np.linalg.norm(z, axis=1), 2.0)
    assert abs(z[:, 0].mean()) < 0.02


def test_latent_sampling_needs_data_unless_pure_sphere(tiny_model, rng):
    empty = TransitionDataset(s=[], a=[], s_next=[], n_states=5, n_actions=3)
    with pytest.raises(EmptyDataset):
        sample_latent(tiny_model, empty, 0.5, rng)
    assert np.linalg.norm(sample_latent(tiny_model, empty, 1.0, rng)) == pytest.approx(2.0)


def test_zero_forward_gives_uniform_policy(tiny_model, rng):
    tiny_model.theta[:] = 0.0
    tiny_model.theta0[:] = 0.0
    np.testing.assert_allclose(policy_from_latent(tiny_model, rng.standard_normal(4)), 1.0 / 3.0)


def test_cold_temperature_is_nearly_greedy(tiny_model, rng):
    z = project_to_sphere(rng.standard_normal(4))
    policy = policy_from_latent(tiny_model, z, temperature=1e-9)
    assert np.all(policy.max(axis=1) > 0.99)


def test_td_loss_vanishes_with_zero_forward(tiny_model, rng):
    tiny_model.theta[:] = 0.0
    tiny_model.theta0[:] = 0.0
    tiny_model.target_theta[:] = 0.0
    tiny_model.target_theta0[:] = 0.0
    n = 8
    batch = FbBatch(s=rng.integers(5, size=n), a=rng.integers(3, size=n), s_next=rng.integers(5, size=n),
                    a_next=rng.integers(3, size=n), s_plus=rng.integers(5, size=n), z=rng.standard_normal((n, 4)))
    result = fb_td_loss_and_grads(tiny_model, batch, 0.9)
    assert result.loss == 0.0
    assert not np.any(result.grad_b)


def test_td_gradients_match_central_differences(rng):
    report = check_fb_gradients(3, rng)
    assert report.passed, report.details


def test_pretrain_without_steps_is_the_seeded_init(rng):
    data = small_dataset(rng)
    config = PretrainConfig(steps=0, d=4, seed=7)
    model = pretrain(data, config)
    reference = init_model(5, 3, 4, config.temperature, 7, config.init_scale)
    np.testing.assert_array_equal(model.theta, reference.theta)
    np.testing.assert_array_equal(model.b, reference.b)


def test_pretrain_is_deterministic_and_keeps_b_on_sphere(rng):
    data = small_dataset(rng)
    config = PretrainConfig(steps=25, batch_size=16, d=4, seed=3, lr=1e-2)
    first, second = pretrain(data, config), pretrain(data, config)
    np.testing.assert_array_equal(first.theta, second.theta)
    np.testing.assert_array_equal(first.b, second.b)
    np.testing.assert_allclose(np.linalg.norm(first.b, axis=1), 2.0)
    assert np.all(np.isfinite(first.theta))


def test_full_polyak_copies_main_parameters(rng):
    data = small_dataset(rng)
    model = pretrain(data, PretrainConfig(steps=3, batch_size=8, d=4, polyak=1.0))
    np.testing.assert_allclose(model.target_theta, model.theta)
    np.testing.assert_allclose(model.target_b, model.b)


def test_pretrain_rejects_empty_dataset():
    empty = TransitionDataset(s=[], a=[], s_next=[], n_states=5, n_actions=3)
    with pytest.raises(EmptyDataset):
        pretrain(empty, PretrainConfig(steps=1))


def test_z_from_reward(tiny_model, rng):
    data = small_dataset(rng)
    with pytest.raises(ZeroVector):
        z_from_reward(tiny_model, data, RewardTable("zero", np.zeros(5)))

    z = z_from_reward(tiny_model, data, RewardTable("ones", np.ones(5)))
    np.testing.assert_allclose(z, project_to_sphere(tiny_model.b[data.states].mean(axis=0)))
    assert np.linalg.norm(z) == pytest.approx(2.0)


def test_save_and_load_model(tmp_path, tiny_model):
    save_model(tiny_model, tmp_path / "model.json")
    loaded = load_model(tmp_path / "model.json")
    np.testing.assert_array_equal(loaded.theta, tiny_model.theta)
    np.testing.assert_array_equal(loaded.b, tiny_model.b)
    assert loaded.temperature == tiny_model.temperature


def test_td_loss_scores_every_transition_against_every_s_plus(tiny_model, rng):
    n, m, gamma = 5, 3, 0.7
    tiny_model.target_b = rng.standard_normal(tiny_model.b.shape)
    batch = FbBatch(s=rng.integers(5, size=n), a=rng.integers(3, size=n), s_next=rng.integers(5, size=n),
                    a_next=rng.integers(3, size=n), s_plus=rng.integers(5, size=m), z=rng.standard_normal((n, 4)))

    squared, pull = 0.0, 0.0
    for i in range(n):
        f = forward_embed(tiny_model, batch.s[i], batch.a[i], batch.z[i])
        f_bar = tiny_model.target_theta[batch.s_next[i], batch.a_next[i]] @ batch.z[i] \
            + tiny_model.target_theta0[batch.s_next[i], batch.a_next[i]]
        pull += f @ tiny_model.b[batch.s_next[i]]
        for j in range(m):
            plus = batch.s_plus[j]
            squared += (f @ tiny_model.b[plus] - gamma * f_bar @ tiny_model.target_b[plus]) ** 2

    result = fb_td_loss_and_grads(tiny_model, batch, gamma)
    assert result.loss == pytest.approx(squared / (n * m) - 2.0 * pull / n, rel=1e-9)


def test_td_loss_without_discount_is_the_plain_square(tiny_model, rng):
    n = 4
    batch = FbBatch(s=rng.integers(5, size=n), a=rng.integers(3, size=n), s_next=rng.integers(5, size=n),
                    a_next=rng.integers(3, size=n), s_plus=np.array([2]), z=rng.standard_normal((n, 4)))
    f = np.stack([forward_embed(tiny_model, s, a, z) for s, a, z in zip(batch.s, batch.a, batch.z)])
    expected = np.mean((f @ tiny_model.b[2]) ** 2) - 2.0 * np.mean(np.sum(f * tiny_model.b[batch.s_next], axis=1))
    assert fb_td_loss_and_grads(tiny_model, batch, 0.0).loss == pytest.approx(expected, rel=1e-9)


@pytest.mark.slow
def test_reward_prompted_policy_beats_uniform_on_four_rooms():
    from config import EnvSpec
    from datasets import generate_exploratory_dataset
    from environments import build_env
    from evaluation import evaluate_policy_exact
    from mdp_core import uniform_policy

    mdp, tasks = build_env(EnvSpec(family="four_rooms"))
    data = generate_exploratory_dataset(mdp, 50_000, 100, np.random.default_rng([0, 0]))
    model = pretrain(data, PretrainConfig(steps=20_000, d=8, gamma=mdp.gamma))
    uniform = uniform_policy(mdp.n_states, mdp.n_actions)
    for reward in tasks.values():
        prompted = policy_from_latent(model, z_from_reward(model, data, reward))
        assert evaluate_policy_exact(mdp, prompted, reward) > evaluate_policy_exact(mdp, uniform, reward)
