"""Brute-force verifiers for the occupancy bounds, dual reductions and analytic gradients.

Every check returns a CheckReport; the registry at the bottom groups them into
suites for the `verify` command.
"""

import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import linalg
from scipy.optimize import minimize
from scipy.stats import spearmanr

from config import FbIlConfig, HeavyConfig, LightConfig
from errors import NoConvergence, PreconditionError
from mdp_core import RewardTable, TabularMdp, policy_evaluation, rollout
from occupancy import bellman_flow_residual, triple_occupancy, tv_distance

_LOG2 = np.log(2.0)


@dataclass
class CheckReport:
    name: str
    trials: int
    max_violation: float
    tolerance: float
    passed: bool
    details: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "trials": self.trials,
            "max_violation": self.max_violation,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "details": self.details,
        }


def _report(name: str, violations: List[float], tolerance: float, details: List[Dict[str, Any]]) -> CheckReport:
    worst = float(max(violations)) if violations else 0.0
    return CheckReport(name=name, trials=len(violations), max_violation=worst, tolerance=tolerance,
                       passed=bool(worst <= tolerance), details=details)


def random_mdp(n_states: int, n_actions: int, gamma: float, rng: np.random.Generator) -> TabularMdp:
    kernel = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    return TabularMdp(kernel=kernel, mu=rng.dirichlet(np.ones(n_states)), gamma=gamma)


def random_policy(n_states: int, n_actions: int, rng: np.random.Generator) -> np.ndarray:
    return rng.dirichlet(np.ones(n_actions), size=n_states)


def tv_worstcase_primal(p: np.ndarray, losses: np.ndarray, eps: float) -> float:
    """max E_q[losses] over TV(q, p) <= eps by greedy mass transfer.

    Mass leaves the lowest-loss entries first and lands on the first
    maximizing entry.
    """
    q = np.array(p, dtype=np.float64)
    losses = np.asarray(losses, dtype=np.float64)
    target = int(np.argmax(losses))
    budget = min(eps, 1.0 - q[target])
    for j in np.argsort(losses, kind="stable"):
        if budget <= 0.0:
            break
        if j == target or q[j] <= 0.0:
            continue
        moved = min(q[j], budget)
        q[j] -= moved
        q[target] += moved
        budget -= moved
    return float(q @ losses)


def random_kernel_in_tv_ball(mdp: TabularMdp, eps_prime: float, rng: np.random.Generator) -> TabularMdp:
    """Per row, move a uniform-random share of eps_prime toward a Dirichlet-drawn target."""
    if not 0.0 <= eps_prime <= 1.0:
        raise PreconditionError(f"eps_prime={eps_prime} must lie in [0, 1]", component="oracles")
    if eps_prime == 0.0:
        return mdp.with_kernel(mdp.kernel.copy())

    nominal = mdp.kernel
    targets = rng.dirichlet(np.ones(mdp.n_states), size=nominal.shape[:2])
    gaps = 0.5 * np.abs(targets - nominal).sum(axis=2)
    share = rng.random(nominal.shape[:2])
    t = np.where(gaps > 0.0, np.minimum(1.0, share * eps_prime / np.where(gaps > 0.0, gaps, 1.0)), 0.0)
    kernel = (1.0 - t)[:, :, None] * nominal + t[:, :, None] * targets
    kernel = np.clip(kernel, 0.0, None)
    return mdp.with_kernel(kernel / kernel.sum(axis=2, keepdims=True))


def _lemma_check(name: str, marginal: Callable[[TabularMdp], np.ndarray], bound: float, mdp: TabularMdp,
                 eps_prime: float, trials: int, rng: np.random.Generator) -> CheckReport:
    if trials < 1:
        raise PreconditionError(f"trials must be >= 1, got {trials}", component="oracles")
    nominal = marginal(mdp)
    violations, details = [], []
    for trial in range(trials):
        perturbed = random_kernel_in_tv_ball(mdp, eps_prime, rng)
        tv = tv_distance(marginal(perturbed), nominal)
        violations.append(tv - bound)
        details.append({"trial": trial, "tv": tv, "bound": bound})
    return _report(name, violations, 1e-10, details)


def check_lemma_state(mdp: TabularMdp, policy: np.ndarray, eps_prime: float, trials: int,
                      rng: np.random.Generator) -> CheckReport:
    bound = min(1.0, mdp.gamma * eps_prime / (1.0 - mdp.gamma))
    return _lemma_check("lemma_state", lambda m: triple_occupancy(m, policy).rho1, bound, mdp, eps_prime, trials, rng)


def check_lemma_sa(mdp: TabularMdp, policy: np.ndarray, eps_prime: float, trials: int,
                   rng: np.random.Generator) -> CheckReport:
    bound = min(1.0, mdp.gamma * eps_prime / (1.0 - mdp.gamma))
    return _lemma_check("lemma_sa", lambda m: triple_occupancy(m, policy).rho2, bound, mdp, eps_prime, trials, rng)


def check_lemma_triple(mdp: TabularMdp, policy: np.ndarray, eps_prime: float, trials: int,
                       rng: np.random.Generator) -> CheckReport:
    bound = min(1.0, eps_prime / (1.0 - mdp.gamma))
    return _lemma_check("lemma_triple", lambda m: triple_occupancy(m, policy).rho3, bound, mdp, eps_prime, trials, rng)


def check_bellman_flow(trials: int, rng: np.random.Generator) -> CheckReport:
    """Exact triple occupancies satisfy the flow equalities."""
    violations, details = [], []
    for trial in range(trials):
        n_states, n_actions = int(rng.integers(2, 7)), int(rng.integers(1, 4))
        mdp = random_mdp(n_states, n_actions, float(rng.uniform(0.1, 0.99)), rng)
        policy = random_policy(n_states, n_actions, rng)
        residual = float(np.max(np.abs(bellman_flow_residual(triple_occupancy(mdp, policy), mdp, policy))))
        violations.append(residual)
        details.append({"trial": trial, "n_states": n_states, "gamma": mdp.gamma, "residual": residual})
    return _report("bellman_flow", violations, 1e-10, details)


def check_prop1_duality(trials: int, rng: np.random.Generator) -> CheckReport:
    """Exact lambda-minimized dual equals the greedy TV worst case."""
    from methods.rbfm_light import light_minimize_lambda

    instances = [(np.full(3, 1.0 / 3.0), np.array([1.0, 2.0, 3.0]), 0.5)]
    for _ in range(max(trials - 1, 0)):
        n = int(rng.integers(1, 21))
        p = rng.dirichlet(np.ones(n))
        losses = np.full(n, rng.uniform(0.0, 2.0)) if rng.random() < 0.1 else rng.uniform(0.0, 2.0, n)
        instances.append((p, losses, float(rng.uniform(0.0, 1.5))))

    violations, details = [], []
    for trial, (p, losses, eps) in enumerate(instances):
        _, dual = light_minimize_lambda(losses, p, eps)
        primal = tv_worstcase_primal(p, losses, eps)
        violations.append(abs(dual - primal))
        details.append({"trial": trial, "n": len(p), "eps": eps, "dual": dual, "primal": primal})
    return _report("prop1_duality", violations, 1e-8, details)


def check_prop2_interval(trials: int, rng: np.random.Generator) -> CheckReport:
    """A global minimizer over [-10, 10] exists inside [0, max loss]."""
    from methods.rbfm_light import light_minimize_lambda

    grid = np.round(np.arange(-100_000, 100_001) * 1e-4, 4)
    violations, details = [], []
    for trial in range(trials):
        n = int(rng.integers(1, 21))
        w = rng.dirichlet(np.ones(n))
        losses = np.round(rng.integers(0, 20_001, n) * 1e-4, 4)
        eps = float(rng.uniform(0.0, 1.5))
        top = losses.max()

        values = np.maximum(losses[None, :] - grid[:, None], 0.0) @ w + eps * np.maximum(top - grid, 0.0) + grid
        inside = (grid >= 0.0) & (grid <= top)
        global_min, inside_min = values.min(), values[inside].min()
        lam, exact = light_minimize_lambda(losses, w, eps)

        violation = max(inside_min - global_min, abs(exact - global_min),
                        0.0 if 0.0 <= lam <= (1.0 + eps) * top else abs(lam))
        violations.append(float(violation))
        details.append({"trial": trial, "n": n, "eps": eps, "lambda": lam, "value": exact,
                        "grid_min": float(global_min)})
    return _report("prop2_interval", violations, 1e-6, details)


def _log_cosh_generator(w: np.ndarray) -> np.ndarray:
    u = w - 1.0
    return 0.5 * (np.logaddexp(u, -u) - _LOG2)


def check_prop3_closed_form(trials: int, w_max: float, grid_step: float, rng: np.random.Generator,
                            y_clip: float = 1e-3) -> CheckReport:
    """Grid argmax of -tau f(w) + c w agrees with optimal_weight within one grid step."""
    from methods.rbfm_heavy import optimal_weight

    config = HeavyConfig(w_max=w_max, y_clip=y_clip)
    grid = np.arange(0.0, w_max + grid_step / 2.0, grid_step)
    cases = [(0.0, 1.0), (0.2, 1.0), (-0.45, 1.0)]
    for _ in range(max(trials - len(cases), 0)):
        tau = float(rng.uniform(0.1, 5.0))
        cases.append((tau * float(rng.uniform(-0.45, 0.45)), tau))

    violations, details = [], []
    for trial, (c, tau) in enumerate(cases):
        best = float(grid[np.argmax(-tau * _log_cosh_generator(grid) + c * grid)])
        w_star = float(optimal_weight(c, tau, config))
        violations.append(abs(best - w_star) - grid_step)
        details.append({"trial": trial, "c": c, "tau": tau, "grid_argmax": best, "closed_form": w_star})
    return _report("prop3_closed_form", violations, 0.0, details)


def check_soft_tv_identities() -> CheckReport:
    """Anchor values, inverse round trips, derivative and the 1/2 |x - 1| envelope of the generator."""
    from methods.rbfm_heavy import soft_tv_f, soft_tv_fprime, soft_tv_fprime_inv

    xs = np.linspace(0.0, 10.0, 10_001)
    h = 1e-5
    fd = (_log_cosh_generator(xs + h) - _log_cosh_generator(xs - h)) / (2.0 * h)
    # identity -> (deviation, allowed deviation)
    checks = {
        "f(1)": (abs(soft_tv_f(1.0)), 1e-15),
        "inv(0)": (abs(soft_tv_fprime_inv(0.0) - 1.0), 1e-15),
        "round_trip": (max(abs(soft_tv_fprime(soft_tv_fprime_inv(y)) - y) for y in (-0.4, -0.1, 0.3)), 1e-10),
        "f_matches_log_cosh": (float(np.max(np.abs(soft_tv_f(xs) - _log_cosh_generator(xs)))), 1e-12),
        "fprime_matches_fd": (float(np.max(np.abs(soft_tv_fprime(xs) - fd))), 1e-8),
        "envelope": (float(np.max(soft_tv_f(xs) - 0.5 * np.abs(xs - 1.0))), 1e-12),
    }
    violations = [max(0.0, float(dev) - tol) for dev, tol in checks.values()]
    details = [{"identity": k, "deviation": float(dev), "allowed": tol} for k, (dev, tol) in checks.items()]
    return _report("soft_tv_identities", violations, 0.0, details)


def central_difference(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Entry-wise central differences of a scalar function; x is restored afterwards."""
    grad = np.zeros_like(x)
    flat, out = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        up = fn(x)
        flat[i] = original - h
        down = fn(x)
        flat[i] = original
        out[i] = (up - down) / (2.0 * h)
    return grad


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_fb_gradients(trials: int, rng: np.random.Generator) -> CheckReport:
    """Analytic TD gradients against central differences on tiny random models."""
    from fb_model import FbBatch, fb_td_loss_and_grads, init_model

    violations, details = [], []
    for trial in range(trials):
        model = init_model(2, 2, 3, 0.5, rng, init_scale=1.0)
        model.target_theta = rng.standard_normal(model.theta.shape)
        model.target_theta0 = rng.standard_normal(model.theta0.shape)
        model.target_b = rng.standard_normal(model.b.shape)
        n = 6
        z = rng.standard_normal((n, 3))
        batch = FbBatch(s=rng.integers(2, size=n), a=rng.integers(2, size=n), s_next=rng.integers(2, size=n),
                        a_next=rng.integers(2, size=n), s_plus=rng.integers(2, size=n - 2), z=z)
        gamma = float(rng.uniform(0.0, 0.99))
        analytic = fb_td_loss_and_grads(model, batch, gamma).grads()

        errors = {}
        for name, param in model.params().items():
            numeric = central_difference(lambda _: fb_td_loss_and_grads(model, batch, gamma).loss, param)
            errors[name] = _relative_error(analytic[name], numeric)
        violations.append(max(errors.values()))
        details.append({"trial": trial, "gamma": gamma, **errors})
    return _report("fb_gradients", violations, 1e-4, details)


@dataclass
class HeavyInstance:
    """Fixed-z inner problem: dynamics, model, latent and the true expert policy."""

    mdp: TabularMdp
    model: Any
    z: np.ndarray
    expert_policy: np.ndarray


def random_heavy_instance(rng: np.random.Generator, n_states: int = 3, n_actions: int = 2, d: int = 3,
                          gamma: float = 0.9) -> HeavyInstance:
    from fb_model import init_model, project_to_sphere

    mdp = random_mdp(n_states, n_actions, gamma, rng)
    model = init_model(n_states, n_actions, d, 0.5, rng, init_scale=1.0)
    return HeavyInstance(mdp=mdp, model=model, z=project_to_sphere(rng.standard_normal(d)),
                         expert_policy=random_policy(n_states, n_actions, rng))


def _exact_heavy_batch(instance: HeavyInstance, rho3: np.ndarray):
    """Every supported (s, a, s') and every (s0, a0), weighted by their exact masses."""
    from methods.rbfm_heavy import HeavyMinibatch

    n_states, n_actions = instance.mdp.n_states, instance.mdp.n_actions
    s, a, s_next = np.nonzero(rho3 > 0.0)
    s0, a0 = np.divmod(np.arange(n_states * n_actions), n_actions)
    init = (instance.mdp.mu[:, None] * instance.expert_policy).ravel()
    return HeavyMinibatch(s=s, a=a, s_next=s_next, s0=s0, a0=a0, weights=rho3[s, a, s_next], init_weights=init)


def check_heavy_gradients(trials: int, rng: np.random.Generator) -> CheckReport:
    """Critic and actor gradients against central differences with the density ratios frozen."""
    from methods.rbfm_heavy import HeavyDualState, HeavyMinibatch, heavy_losses_and_grads

    violations, details = [], []
    for trial in range(trials):
        instance = random_heavy_instance(rng)
        n_states, n_actions = instance.mdp.n_states, instance.mdp.n_actions
        config = HeavyConfig(eps=float(rng.uniform(0.0, 1.0)), gamma=instance.mdp.gamma, y_clip=1e-3)
        n = 8
        batch = HeavyMinibatch(s=rng.integers(n_states, size=n), a=rng.integers(n_actions, size=n),
                               s_next=rng.integers(n_states, size=n), s0=rng.integers(n_states, size=n),
                               a0=rng.integers(n_actions, size=n))
        dual = HeavyDualState(q=rng.standard_normal((n_states, n_actions)), tau=float(rng.uniform(0.5, 2.0)))
        base = heavy_losses_and_grads(instance.model, instance.z, instance.expert_policy, dual, config, batch)
        frozen = base.weights.copy()

        def critic(_):
            return heavy_losses_and_grads(instance.model, instance.z, instance.expert_policy, dual, config, batch,
                                          frozen_weights=frozen).critic_loss

        def actor(z):
            return heavy_losses_and_grads(instance.model, z, instance.expert_policy, dual, config, batch,
                                          frozen_weights=frozen).actor_loss

        tau_box = np.array([dual.tau])

        def critic_tau(_):
            dual.tau = float(tau_box[0])
            return critic(None)

        errors = {
            "q": _relative_error(base.grad_q, central_difference(critic, dual.q)),
            "tau": _relative_error(np.array([base.grad_tau]), central_difference(critic_tau, tau_box)),
            "z": _relative_error(base.grad_z, central_difference(actor, instance.z.copy())),
        }
        violations.append(max(errors.values()))
        details.append({"trial": trial, **errors})
    return _report("heavy_gradients", violations, 1e-3, details)


def fb_q_rank_correlation(model: Any, mdp: TabularMdp, reward: RewardTable, dataset: Any) -> float:
    """Spearman correlation between F(s,a,z)^T z and the exact Q of pi_z, for z inferred from the reward."""
    from fb_model import policy_from_latent, q_scores, z_from_reward

    z = z_from_reward(model, dataset, reward)
    _, q_true = policy_evaluation(mdp, policy_from_latent(model, z), reward)
    correlation = spearmanr(q_scores(model, z).ravel(), q_true.ravel()).correlation
    return float(correlation) if np.isfinite(correlation) else 0.0


def check_fb_rank_correlation(trials: int, rng: np.random.Generator, threshold: float = 0.8) -> CheckReport:
    """Pretrain on a 5-state chain and compare the model's Q ranking with policy evaluation."""
    from config import EnvSpec, PretrainConfig
    from datasets import generate_exploratory_dataset
    from environments import build_env
    from fb_model import pretrain

    mdp, tasks = build_env(EnvSpec(family="chain", n=5, slip=0.0))
    violations, details = [], []
    for trial in range(trials):
        seed = int(rng.integers(1_000_000))
        dataset = generate_exploratory_dataset(mdp, 10_000, 20, np.random.default_rng([seed, 0]), uniform_starts=True)
        model = pretrain(dataset, PretrainConfig(steps=20_000, d=8, gamma=mdp.gamma, seed=seed, log_every=5000))
        correlation = fb_q_rank_correlation(model, mdp, tasks["goal_right"], dataset)
        violations.append(threshold - correlation)
        details.append({"trial": trial, "seed": seed, "spearman": correlation})
    return _report("fb_rank_correlation", violations, 0.0, details)


def check_light_reduction(trials: int, rng: np.random.Generator) -> CheckReport:
    """With eps_l = 0, RBFM-Light follows FB-IL's iterates exactly."""
    from base_inference import ExpertDataset
    from fb_model import init_model
    from methods.fb_il import infer_fb_il
    from methods.rbfm_light import infer_rbfm_light

    violations, details = [], []
    for trial in range(trials):
        mdp = random_mdp(5, 3, 0.9, rng)
        model = init_model(5, 3, 4, 0.5, rng, init_scale=0.5)
        behaviour = random_policy(5, 3, rng)
        expert = ExpertDataset.from_trajectories([rollout(mdp, behaviour, 10, rng) for _ in range(3)], 5, 3)
        seed = int(rng.integers(1_000_000))

        z_fb = infer_fb_il(model, expert, FbIlConfig(steps=40, lr=1e-2, batch_size=16, seed=seed)).z
        gaps = {}
        for label, fixed in (("exact_lambda", None), ("fixed_zero", 0.0)):
            light = LightConfig(eps_l=0.0, steps=40, lr=1e-2, batch_size=16, seed=seed, fixed_lambda=fixed)
            gaps[label] = float(np.max(np.abs(infer_rbfm_light(model, expert, light).z - z_fb)))
        violations.append(max(gaps.values()))
        details.append({"trial": trial, "seed": seed, **gaps})
    return _report("light_reduction", violations, 0.0, details)


def _flow_system(instance: HeavyInstance, support: Tuple[np.ndarray, ...]) -> Tuple[np.ndarray, np.ndarray]:
    """Flow equalities A x = b over the supported triples."""
    mdp, policy = instance.mdp, instance.expert_policy
    n_actions, gamma = mdp.n_actions, mdp.gamma
    s, a, s_next = support
    matrix = np.zeros((mdp.n_states * n_actions, len(s)))
    for j in range(len(s)):
        matrix[s[j] * n_actions + a[j], j] += 1.0
        matrix[s_next[j] * n_actions:(s_next[j] + 1) * n_actions, j] -= gamma * policy[s_next[j]]
    rhs = ((1.0 - gamma) * mdp.mu[:, None] * policy).ravel()
    return matrix, rhs


def _primal_worst_case(instance: HeavyInstance, rho3: np.ndarray, eps: float, w_max: float,
                       iters: int) -> float:
    """max E_rho[L] over flow-consistent rho with ratio in [0, w_max] and divergence <= eps.

    Flow equalities hold exactly through a null-space parametrization; the
    remaining constraints are squared-hinge penalties with growing weight,
    and the last iterate is pulled back toward rho until it is feasible.
    """
    from base_inference import imitation_losses_and_grads

    support = np.nonzero(rho3 > 0.0)
    nominal = rho3[support]
    matrix, rhs = _flow_system(instance, support)
    basis = linalg.null_space(matrix)
    losses = imitation_losses_and_grads(instance.model, instance.z, instance.expert_policy)[0][support[0]]
    if basis.shape[1] == 0:
        return float(nominal @ losses)

    def divergence(x: np.ndarray) -> float:
        return float(nominal @ _log_cosh_generator(x / nominal))

    def penalized(y: np.ndarray, kappa: float) -> Tuple[float, np.ndarray]:
        x = nominal + basis @ y
        value, grad = -float(losses @ x), -losses.copy()
        excess = divergence(x) - eps
        if excess > 0.0:
            value += kappa * excess ** 2
            grad += 2.0 * kappa * excess * 0.5 * np.tanh(x / nominal - 1.0)
        below = np.minimum(x, 0.0)
        above = np.maximum(x - w_max * nominal, 0.0)
        value += kappa * float(below @ below + above @ above)
        grad += 2.0 * kappa * (below + above)
        return value, basis.T @ grad

    y = np.zeros(basis.shape[1])
    for kappa in 10.0 ** np.arange(1, 11):
        result = minimize(penalized, y, args=(kappa,), jac=True, method="L-BFGS-B",
                          options={"maxiter": iters, "gtol": 1e-12})
        y = result.x
    if result.status == 1 and np.linalg.norm(result.jac) > 1e-6:
        raise NoConvergence("Primal penalty solve hit its iteration cap", component="oracles")

    def feasible(t: float) -> bool:
        x = nominal + t * (basis @ y)
        return divergence(x) <= eps + 1e-12 and np.all(x >= 0.0) and np.all(x <= w_max * nominal)

    lo, hi = 0.0, 1.0
    if feasible(hi):
        lo = hi
    else:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if feasible(mid) else (lo, mid)
    return float(losses @ (nominal + lo * (basis @ y)))


def _dual_value(instance: HeavyInstance, rho3: np.ndarray, eps: float, w_max: float, iters: int) -> float:
    """min over (Q, tau >= 0) of the exact-expectation critic loss."""
    from methods.rbfm_heavy import HeavyDualState, heavy_losses_and_grads

    n_states, n_actions = instance.mdp.n_states, instance.mdp.n_actions
    config = HeavyConfig(eps=eps, gamma=instance.mdp.gamma, w_max=w_max, y_clip=None)
    batch = _exact_heavy_batch(instance, rho3)

    def objective(v: np.ndarray) -> Tuple[float, np.ndarray]:
        dual = HeavyDualState(q=v[:-1].reshape(n_states, n_actions).copy(), tau=float(v[-1]))
        result = heavy_losses_and_grads(instance.model, instance.z, instance.expert_policy, dual, config, batch)
        return result.critic_loss, np.append(result.grad_q.ravel(), result.grad_tau)

    start = np.append(np.zeros(n_states * n_actions), 1.0)
    bounds = [(None, None)] * (n_states * n_actions) + [(0.0, 1e6)]
    result = minimize(objective, start, jac=True, method="L-BFGS-B", bounds=bounds,
                      options={"maxiter": iters, "gtol": 1e-9})
    if result.status == 1 and np.linalg.norm(result.jac) > 1e-6:
        raise NoConvergence("Dual critic solve hit its iteration cap", component="oracles")
    return float(result.fun)


def check_heavy_duality_gap(instance: HeavyInstance, eps: float, iters: int = 5000,
                            w_max: float = 10.0) -> CheckReport:
    """Relative gap between the penalized primal worst case and the minimized critic loss."""
    if instance.mdp.n_states > 4 or instance.mdp.n_actions > 2:
        raise PreconditionError("Duality-gap check is limited to 4 states and 2 actions", component="oracles")
    rho3 = triple_occupancy(instance.mdp, instance.expert_policy).rho3
    primal = _primal_worst_case(instance, rho3, eps, w_max, iters)
    dual = _dual_value(instance, rho3, eps, w_max, iters)
    gap = abs(dual - primal) / max(abs(dual), abs(primal), 1e-6)
    return _report("heavy_duality_gap", [gap], 5e-2,
                   [{"eps": eps, "primal": primal, "dual": dual, "relative_gap": gap}])


GAP_RADII = (0.1, 0.3)


def _heavy_gap_suite(trials: int, rng: np.random.Generator) -> CheckReport:
    reports = [check_heavy_duality_gap(random_heavy_instance(rng), GAP_RADII[trial % len(GAP_RADII)])
               for trial in range(trials)]
    details = [r.details[0] for r in reports]
    return _report("heavy_duality_gap", [r.max_violation for r in reports], 5e-2, details)


LEMMA_GAMMAS = (0.5, 0.9, 0.98)


def _lemma_suite(check: Callable) -> Callable[[int, np.random.Generator], CheckReport]:
    """One fresh (MDP, policy, eps') per trial, cycling through LEMMA_GAMMAS."""
    def run(trials: int, rng: np.random.Generator) -> CheckReport:
        reports = []
        for trial in range(trials):
            n_states, n_actions = int(rng.integers(2, 9)), int(rng.integers(1, 4))
            mdp = random_mdp(n_states, n_actions, LEMMA_GAMMAS[trial % len(LEMMA_GAMMAS)], rng)
            eps_prime = float(rng.uniform(0.0, 0.3))
            reports.append(check(mdp, random_policy(n_states, n_actions, rng), eps_prime, 1, rng))
        details = [{**r.details[0], "gamma": LEMMA_GAMMAS[i % len(LEMMA_GAMMAS)]} for i, r in enumerate(reports)]
        return _report(reports[0].name, [r.max_violation for r in reports], reports[0].tolerance, details)
    return run


# name -> (suite, default trials, runner(trials, rng))
CHECKS: Dict[str, Tuple[str, int, Callable[[int, np.random.Generator], CheckReport]]] = {
    "lemma_state": ("lemmas", 200, _lemma_suite(check_lemma_state)),
    "lemma_sa": ("lemmas", 200, _lemma_suite(check_lemma_sa)),
    "lemma_triple": ("lemmas", 200, _lemma_suite(check_lemma_triple)),
    "bellman_flow": ("lemmas", 100, check_bellman_flow),
    "prop1_duality": ("props", 1000, check_prop1_duality),
    "prop2_interval": ("props", 500, check_prop2_interval),
    "prop3_closed_form": ("props", 1000, lambda n, rng: check_prop3_closed_form(n, 10.0, 1e-3, rng)),
    "soft_tv_identities": ("props", 1, lambda n, rng: check_soft_tv_identities()),
    "light_reduction": ("props", 3, check_light_reduction),
    "heavy_duality_gap": ("props", 20, _heavy_gap_suite),
    "fb_gradients": ("gradients", 50, check_fb_gradients),
    "heavy_gradients": ("gradients", 50, check_heavy_gradients),
    "fb_rank_correlation": ("model", 1, check_fb_rank_correlation),
}

SUITES = ("all", "lemmas", "props", "gradients", "model")


def run_checks(suite: str = "all", seed: int = 0, trials_scale: float = 1.0,
               names: Optional[List[str]] = None) -> List[CheckReport]:
    """Run every check of a suite in registry order, each with its own seeded generator."""
    if suite not in SUITES:
        raise PreconditionError(f"Unknown suite '{suite}'", suggestions=[f"Suites: {', '.join(SUITES)}"])
    reports = []
    for index, (name, (group, trials, runner)) in enumerate(CHECKS.items()):
        if (suite != "all" and group != suite) or (names is not None and name not in names):
            continue
        started = time.perf_counter()
        report = runner(max(1, int(round(trials * trials_scale))), np.random.default_rng([seed, index]))
        logger.info(f"{'✅' if report.passed else '❌'} {name}: max_violation={report.max_violation:.3e} "
                    f"(tol {report.tolerance:g}, {report.trials} trials, {time.perf_counter() - started:.1f}s)")
        reports.append(report)
    return reports
