"""Oracle-backed consistency checks runnable from the CLI and the test suite.

Each check measures a residual that the theory says must vanish (to the
stated tolerance) and reports pass/fail. The fault-injection hook perturbs a
named check so harness failure paths stay testable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .models import GraphMarginalModel, MlpMarginalModel, ModelConfig
from .objectives import fm_baseline_loss, fm_equivalence_residual, gaussian_vfm_loss
from .paths import (
    FiniteDataset,
    conditional_velocity,
    marginal_score_oracle,
    marginal_velocity_oracle,
    mixture_log_density,
    posterior_oracle,
)
from .sampling import GraphStateCodec, IntegratorConfig, integrate_ode, integrate_sde
from .spaces import CategoricalSpace, StatePoint
from .tensor import Tensor

__all__ = ["CheckResult", "run_all_checks", "CHECK_NAMES"]


@dataclass
class CheckResult:
    name: str
    residual: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.threshold


def random_dataset(rng: np.random.Generator, max_d: int = 3, max_k: int = 4, max_points: int = 16):
    space = CategoricalSpace(
        tuple(int(rng.integers(2, max_k + 1)) for _ in range(int(rng.integers(1, max_d + 1))))
    )
    n = int(rng.integers(1, max_points + 1))
    labels = np.stack([rng.integers(0, k, size=n) for k in space.K], axis=-1)
    w = rng.uniform(0.1, 1.0, size=n)
    return FiniteDataset.from_labels(space, labels, w / w.sum())


def check_mean_field_velocity(seed: int = 0, n_datasets: int = 100) -> CheckResult:
    """Expected conditional velocity vs velocity toward the marginal mean."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_datasets):
        ds = random_dataset(rng)
        t = float(rng.uniform(0.0, 0.95))
        x = rng.standard_normal(ds.space.total_dim)
        sp = StatePoint(t, x)
        full = marginal_velocity_oracle(ds, sp)
        mean = posterior_oracle(ds, sp).marginals
        via_mean = conditional_velocity(t, x, mean)
        worst = max(worst, float(np.abs(full - via_mean).max()))
    return CheckResult("mean_field_velocity", worst, 1e-10)


def check_gaussian_fm_equivalence(
    seed: int = 0, n_instances: int = 1000, inject_fault: bool = False
) -> CheckResult:
    """Shifted Gaussian NLL vs velocity-regression loss on random instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        dim = int(rng.integers(1, 8))
        t = float(rng.uniform(0.0, 0.95))
        mu = rng.uniform(-2, 2, dim)
        x = rng.uniform(-2, 2, dim)
        x1 = rng.uniform(-2, 2, dim)
        worst = max(worst, fm_equivalence_residual(mu, x, x1, t))
    if inject_fault:
        worst += 1e-6
    return CheckResult("gaussian_fm_equivalence", worst, 1e-10)


def check_loss_scaling(seed: int = 0, n_instances: int = 1000) -> CheckResult:
    """Velocity loss of the marginal field == 2/(1-t)^2 times the endpoint MSE."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        dim = int(rng.integers(1, 8))
        t = float(rng.uniform(0.0, 0.95))
        mu = rng.uniform(-2, 2, dim)
        x = rng.uniform(-2, 2, dim)
        x1 = rng.uniform(-2, 2, dim)
        v = (mu - x) / (1.0 - t)
        lhs = fm_baseline_loss(Tensor(v), t, x, x1).item()
        rhs = 2.0 / (1.0 - t) ** 2 * gaussian_vfm_loss(Tensor(mu), x1).item()
        denom = max(abs(lhs), abs(rhs), 1e-300)
        worst = max(worst, abs(lhs - rhs) / denom)
    return CheckResult("loss_scaling", worst, 1e-12)


def check_score_expectation(seed: int = 0, trials: int = 50) -> CheckResult:
    """Posterior-expected conditional score vs finite differences of the exact
    mixture log-density."""
    rng = np.random.default_rng(seed)
    h = 1e-5
    worst = 0.0
    for _ in range(trials):
        ds = random_dataset(rng, max_points=8)
        t = float(rng.uniform(0.1, 0.9))
        x = rng.standard_normal(ds.space.total_dim)
        analytic = marginal_score_oracle(ds, StatePoint(t, x))
        numeric = np.zeros_like(x)
        for j in range(x.size):
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            numeric[j] = (
                mixture_log_density(ds, StatePoint(t, xp))
                - mixture_log_density(ds, StatePoint(t, xm))
            ) / (2 * h)
        err = np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic)))
        worst = max(worst, float(err))
    return CheckResult("score_expectation", worst, 1e-5)


def _tiny_graph_model(seed: int = 0, n_layers: int = 2) -> GraphMarginalModel:
    cfg = ModelConfig(
        n_layers=n_layers,
        hidden_node=16,
        hidden_edge=8,
        hidden_global=16,
        n_heads=2,
        time_embedding_dim=8,
    )
    return GraphMarginalModel(cfg, k_node=2, k_edge_classes=2, seed=seed)


def _random_graph_state(rng, n, kv, ke):
    hn = rng.standard_normal((n, kv))
    he = rng.standard_normal((n, n, ke))
    he = 0.5 * (he + he.transpose(1, 0, 2))
    he[np.arange(n), np.arange(n)] = 0.0
    return hn, he


def _perms_for(n: int, rng, exhaustive_limit: int = 4, n_sampled: int = 10):
    if n <= exhaustive_limit:
        return [p for p in itertools.permutations(range(n)) if p != tuple(range(n))]
    return [tuple(rng.permutation(n).tolist()) for _ in range(n_sampled)]


def check_model_equivariance(seed: int = 0) -> CheckResult:
    """predict(pi . x) == pi . predict(x) for an untrained model."""
    rng = np.random.default_rng(seed)
    model = _tiny_graph_model(seed)
    worst = 0.0
    for n in (3, 4, 5, 6):
        hn, he = _random_graph_state(rng, n, model.k_node, model.k_edge_classes)
        t = float(rng.uniform(0, 1))
        node_out, edge_out = model.predict_marginals(hn, he, t)
        for p in _perms_for(n, rng):
            perm = np.asarray(p)
            node_p, edge_p = model.predict_marginals(hn[perm], he[np.ix_(perm, perm)], t)
            worst = max(worst, float(np.abs(node_p - node_out[perm]).max()))
            worst = max(
                worst, float(np.abs(edge_p - edge_out[np.ix_(perm, perm)]).max())
            )
    return CheckResult("model_equivariance", worst, 1e-8)


def _permute_flat(codec: GraphStateCodec, x: np.ndarray, perm: np.ndarray) -> np.ndarray:
    hn, he = codec.unflatten(x[None])
    return codec.flatten(hn[:, perm], he[:, perm][:, :, perm])[0]


def check_trajectory_equivariance(seed: int = 0) -> CheckResult:
    """Integrating from pi . x0 lands at pi . (final state from x0)."""
    rng = np.random.default_rng(seed)
    model = _tiny_graph_model(seed)
    cfg = IntegratorConfig(n_steps=50)
    worst = 0.0
    for n in (3, 4, 5):
        codec = GraphStateCodec(n, model.k_node, model.k_edge_classes)
        x0 = rng.standard_normal(codec.dim)
        final = integrate_ode(x0[None], codec.field_fn(model), cfg, keep_states=False).final[0]
        for p in _perms_for(n, rng, n_sampled=4):
            perm = np.asarray(p)
            x0p = _permute_flat(codec, x0, perm)
            final_p = integrate_ode(
                x0p[None], codec.field_fn(model), cfg, keep_states=False
            ).final[0]
            worst = max(worst, float(np.abs(final_p - _permute_flat(codec, final, perm)).max()))
    return CheckResult("trajectory_equivariance", worst, 1e-8)


def check_sde_ode_identity(seed: int = 0) -> CheckResult:
    """With zero diffusion the stochastic integrator IS the Euler ODE."""
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng)
    space = ds.space

    def marginal_fn(t, x):
        return np.stack(
            [posterior_oracle(ds, StatePoint(t, row)).marginals for row in np.atleast_2d(x)]
        )

    cfg = IntegratorConfig(n_steps=40, g_const=0.0)
    x0 = rng.standard_normal((3, space.total_dim))
    a = integrate_ode(x0, marginal_fn, cfg, keep_states=False).final
    b = integrate_sde(x0, marginal_fn, cfg, keep_states=False).final
    return CheckResult("sde_ode_identity", float(np.abs(a - b).max()), 0.0)


CHECK_NAMES = (
    "mean_field_velocity",
    "gaussian_fm_equivalence",
    "loss_scaling",
    "score_expectation",
    "model_equivariance",
    "trajectory_equivariance",
    "sde_ode_identity",
)


def run_all_checks(seed: int = 0, inject_fault: str | None = None) -> list[CheckResult]:
    if inject_fault is not None and inject_fault not in CHECK_NAMES:
        raise ValueError(f"unknown check {inject_fault!r}; known: {CHECK_NAMES}")
    results = [
        check_mean_field_velocity(seed),
        check_gaussian_fm_equivalence(
            seed, inject_fault=(inject_fault == "gaussian_fm_equivalence")
        ),
        check_loss_scaling(seed),
        check_score_expectation(seed),
        check_model_equivariance(seed),
        check_trajectory_equivariance(seed),
        check_sde_ode_identity(seed),
    ]
    if inject_fault is not None and inject_fault != "gaussian_fm_equivalence":
        for r in results:
            if r.name == inject_fault:
                r.residual = r.threshold + max(r.threshold, 1e-6)
    return results
