"""Training losses: categorical cross-entropy, Gaussian endpoint MSE, and the
velocity-regression baseline, plus the identities that connect them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .paths import FiniteDataset, conditional_velocity, posterior_oracle
from .rng import generator
from .spaces import StatePoint
from .tensor import Tensor

__all__ = [
    "LossValue",
    "PROB_FLOOR",
    "catflow_loss",
    "gaussian_vfm_loss",
    "fm_baseline_loss",
    "fm_equivalence_residual",
    "posterior_kl_gap",
]

# cross-entropy is undefined at exactly zero probability; clamps are counted
PROB_FLOOR = 1e-12


@dataclass
class LossValue:
    value: Tensor
    kind: str
    clamp_count: int = 0
    t_mean: float = float("nan")

    def item(self) -> float:
        return self.value.item()


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def catflow_loss(mu, x1: np.ndarray) -> LossValue:
    """Cross-entropy of one-hot targets under per-variable marginals.

    ``mu`` holds concatenated probability blocks (Tensor to train through it);
    ``x1`` is the one-hot target with the same layout. Batched inputs are
    averaged over the leading axis.
    """
    mu = _as_tensor(mu)
    x1 = np.asarray(x1, dtype=np.float64)
    if mu.shape != x1.shape:
        raise ValueError(f"marginal/target shape mismatch: {mu.shape} vs {x1.shape}")
    clamps = int(np.sum((mu.data < PROB_FLOOR) & (x1 > 0)))
    ce = T.neg(T.tsum(T.mul(T.log(T.maximum(mu, PROB_FLOOR)), x1), axis=-1))
    if ce.ndim > 0:
        ce = T.tmean(ce)
    return LossValue(ce, "catflow", clamps)


def gaussian_vfm_loss(mu, x1: np.ndarray) -> LossValue:
    """Half squared distance between the predicted endpoint mean and the target."""
    mu = _as_tensor(mu)
    x1 = np.asarray(x1, dtype=np.float64)
    if mu.shape != x1.shape:
        raise ValueError(f"mean/target shape mismatch: {mu.shape} vs {x1.shape}")
    diff = T.sub(mu, x1)
    sq = T.tsum(T.mul(diff, diff), axis=-1)
    if sq.ndim > 0:
        sq = T.tmean(sq)
    return LossValue(T.mul(sq, 0.5), "gaussian_vfm")


def fm_baseline_loss(v, t, x: np.ndarray, x1: np.ndarray) -> LossValue:
    """Squared error against the straight-line conditional velocity.

    ``t`` may be a scalar or a per-row vector for batched inputs.
    """
    v = _as_tensor(v)
    x = np.asarray(x, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr >= 1.0):
        raise ValueError("baseline target is singular at t >= 1")
    if v.shape != x1.shape or x.shape != x1.shape:
        raise ValueError(f"shape mismatch: v {v.shape}, x {x.shape}, x1 {x1.shape}")
    target = (x1 - x) / (1.0 - t_arr)[..., None] if t_arr.ndim else (x1 - x) / (1.0 - t_arr)
    diff = T.sub(v, target)
    sq = T.tsum(T.mul(diff, diff), axis=-1)
    if sq.ndim > 0:
        sq = T.tmean(sq)
    return LossValue(sq, "fm_baseline")


def fm_equivalence_residual(mu: np.ndarray, x: np.ndarray, x1: np.ndarray, t: float) -> float:
    """Gap between the shifted Gaussian negative log-likelihood and the
    velocity-regression loss for the straight-line field.

    The endpoint density N(x1; mu, (1-t)^2/2 * I) and the squared velocity
    error agree up to a mu-independent shift; the residual should vanish to
    float precision. Both sides are computed independently.
    """
    if t >= 1.0:
        raise ValueError(f"requires t < 1, got {t}")
    mu = np.asarray(mu, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    dim = x1.size
    var = (1.0 - t) ** 2 / 2.0
    nll = 0.5 * np.sum((x1 - mu) ** 2) / var + 0.5 * dim * math.log(2.0 * math.pi * var)
    shift = 0.5 * dim * math.log(2.0 * math.pi * var)
    v = (mu - x) / (1.0 - t)
    fm = fm_baseline_loss(Tensor(v), t, x, x1).item()
    return abs((nll - shift) - fm)


def posterior_kl_gap(
    ds: FiniteDataset,
    marginal_fn,
    n_samples: int,
    seed: int,
) -> float:
    """Monte-Carlo mean-field gap: per-variable KL from the exact posterior
    marginals to the model marginals, averaged over (t, x) draws.

    ``marginal_fn(t, x) -> flat marginal vector`` is the variational model.
    Sampling follows the training distribution: t uniform, x1 from the data,
    x0 standard normal. Returns nats; zero when the model matches the oracle
    marginals exactly.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = generator(seed)
    space = ds.space
    off = space.offsets
    total = 0.0
    for _ in range(n_samples):
        t = float(rng.uniform(0.0, 1.0 - 1e-6))
        idx = int(rng.choice(len(ds), p=ds.weights))
        x0 = rng.standard_normal(space.total_dim)
        x = t * ds.points[idx] + (1.0 - t) * x0
        sp = StatePoint(t, x)
        post = posterior_oracle(ds, sp)
        q = np.asarray(marginal_fn(t, x), dtype=np.float64)
        if q.shape != (space.total_dim,):
            raise ValueError(f"marginal_fn returned shape {q.shape}")
        for d in range(space.D):
            p_d = post.marginals[off[d]:off[d + 1]]
            q_d = np.maximum(q[off[d]:off[d + 1]], PROB_FLOOR)
            mask = p_d > 0
            total += float(np.sum(p_d[mask] * (np.log(p_d[mask]) - np.log(q_d[mask]))))
    return total / n_samples


def oracle_marginal_fn(ds: FiniteDataset):
    """Adapter exposing the exact posterior marginals as a model-like callable."""

    def fn(t: float, x: np.ndarray) -> np.ndarray:
        return posterior_oracle(ds, StatePoint(float(t), x)).marginals

    return fn


def velocity_from_marginals(t, x: np.ndarray, mu: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Field toward the predicted simplex point: (mu - x)/(1 - t + eps)."""
    t_arr = np.asarray(t, dtype=np.float64)
    denom = 1.0 - t_arr + eps
    if t_arr.ndim:
        denom = denom[..., None]
    return (np.asarray(mu, dtype=np.float64) - np.asarray(x, dtype=np.float64)) / denom


def score_from_marginals(t, x: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Variational score -(x - t*mu)/(1-t)^2 implied by the endpoint marginals."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr >= 1.0):
        raise ValueError("score is singular at t >= 1")
    scale = (1.0 - t_arr) ** 2
    if t_arr.ndim:
        return -(x - t_arr[..., None] * mu) / scale[..., None]
    return -(x - t_arr * mu) / scale


__all__ += ["oracle_marginal_fn", "velocity_from_marginals", "score_from_marginals"]
