"""Probability-path geometry and exact brute-force posterior oracles.

The conditional path is the straight-line interpolant with a standard normal
source, so p_t(x | x1) = N(t * x1, (1 - t)^2 I). Over a finite dataset the
posterior over endpoints, the marginal velocity, and the marginal score are
all computable by direct summation; everything here runs in log space. These
oracles are the reference implementations the learned models are checked
against, so they stay independent of the model code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spaces import CategoricalSpace, StatePoint

__all__ = [
    "FiniteDataset",
    "PosteriorDistribution",
    "interpolate",
    "conditional_velocity",
    "conditional_score",
    "posterior_oracle",
    "marginal_velocity_oracle",
    "marginal_score_oracle",
    "mixture_log_density",
]

_MAX_ORACLE_POINTS = 10_000


@dataclass
class FiniteDataset:
    """Weighted one-hot endpoints of a categorical space."""

    space: CategoricalSpace
    points: np.ndarray = field(repr=False)  # (n, total_dim), one-hot per block
    weights: np.ndarray = field(repr=False)  # (n,), sums to 1

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != self.space.total_dim:
            raise ValueError(f"points must be (n, {self.space.total_dim}), got {pts.shape}")
        if w.shape != (pts.shape[0],):
            raise ValueError(f"weights shape {w.shape} does not match {pts.shape[0]} points")
        if pts.shape[0] == 0:
            raise ValueError("dataset must be nonempty")
        if pts.shape[0] > _MAX_ORACLE_POINTS:
            raise ValueError(f"oracle datasets are capped at {_MAX_ORACLE_POINTS} points")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        total = w.sum()
        if not np.isclose(total, 1.0, atol=1e-9):
            raise ValueError(f"weights must sum to 1, got {total}")
        off = self.space.offsets
        for d in range(self.space.D):
            block = pts[:, off[d]:off[d + 1]]
            if not (np.all((block == 0) | (block == 1)) and np.all(block.sum(axis=1) == 1)):
                raise ValueError(f"points are not one-hot in block {d}")
        self.points = pts
        self.weights = w

    @classmethod
    def from_labels(cls, space: CategoricalSpace, labels, weights=None) -> "FiniteDataset":
        labels = np.asarray(labels, dtype=np.int64)
        pts = space.onehot(labels)
        if weights is None:
            weights = np.full(len(pts), 1.0 / len(pts))
        return cls(space, pts, np.asarray(weights, dtype=np.float64))

    def __len__(self) -> int:
        return len(self.weights)


@dataclass
class PosteriorDistribution:
    """Exact endpoint posterior over dataset indices at one state point."""

    support: np.ndarray  # dataset indices
    probs: np.ndarray
    marginals: np.ndarray  # concatenated per-variable probability vectors
    space: CategoricalSpace


def interpolate(t: float, x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
    """Straight-line point t*x1 + (1-t)*x0."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ValueError(f"dimension mismatch: {x0.shape} vs {x1.shape}")
    return t * x1 + (1.0 - t) * x0


def conditional_velocity(t: float, x: np.ndarray, x1: np.ndarray) -> np.ndarray:
    """Straight-line continuation (x1 - x)/(1 - t); singular at t = 1."""
    if t >= 1.0:
        raise ValueError(f"conditional velocity is singular at t >= 1, got {t}")
    x = np.asarray(x, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x.shape != x1.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x1.shape}")
    return (x1 - x) / (1.0 - t)


def conditional_score(t: float, x: np.ndarray, x1: np.ndarray) -> np.ndarray:
    """Score of N(t*x1, (1-t)^2 I) at x, i.e. -(x - t*x1)/(1-t)^2."""
    if t >= 1.0 or t < 0.0:
        raise ValueError(f"conditional score requires 0 <= t < 1, got {t}")
    x = np.asarray(x, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x.shape != x1.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x1.shape}")
    return -(x - t * x1) / (1.0 - t) ** 2


def _log_path_likelihoods(ds: FiniteDataset, sp: StatePoint) -> np.ndarray:
    """log N(x; t*x1_i, (1-t)^2 I) for every dataset point."""
    t = sp.t
    sigma = 1.0 - t
    diffs = sp.x[None, :] - t * ds.points  # (n, dim)
    dim = ds.space.total_dim
    return -0.5 * (diffs * diffs).sum(axis=1) / sigma**2 - dim * np.log(
        sigma
    ) - 0.5 * dim * np.log(2.0 * np.pi)


def posterior_oracle(ds: FiniteDataset, sp: StatePoint) -> PosteriorDistribution:
    """Exact endpoint posterior by Bayes summation, log-sum-exp stabilized."""
    if sp.t >= 1.0:
        raise ValueError(f"posterior oracle requires t < 1, got {sp.t}")
    logw = np.where(ds.weights > 0, np.log(np.maximum(ds.weights, 1e-300)), -np.inf)
    loglik = _log_path_likelihoods(ds, sp) + logw
    top = loglik.max()
    if not np.isfinite(top):
        raise ValueError(f"all endpoint likelihoods vanished; max log-likelihood {top}")
    probs = np.exp(loglik - top)
    probs /= probs.sum()
    marginals = probs @ ds.points  # aggregates indicator blocks over the support
    return PosteriorDistribution(
        support=np.arange(len(ds)), probs=probs, marginals=marginals, space=ds.space
    )


def marginal_velocity_oracle(ds: FiniteDataset, sp: StatePoint) -> np.ndarray:
    """Posterior-expected conditional velocity at the state point."""
    post = posterior_oracle(ds, sp)
    vels = (ds.points - sp.x[None, :]) / (1.0 - sp.t)
    return post.probs @ vels


def marginal_score_oracle(ds: FiniteDataset, sp: StatePoint) -> np.ndarray:
    """Posterior-expected conditional score at the state point."""
    post = posterior_oracle(ds, sp)
    scores = -(sp.x[None, :] - sp.t * ds.points) / (1.0 - sp.t) ** 2
    return post.probs @ scores


def mixture_log_density(ds: FiniteDataset, sp: StatePoint) -> float:
    """log p_t(x) of the exact path mixture (for finite-difference checks)."""
    logw = np.where(ds.weights > 0, np.log(np.maximum(ds.weights, 1e-300)), -np.inf)
    loglik = _log_path_likelihoods(ds, sp) + logw
    top = loglik.max()
    return float(top + np.log(np.exp(loglik - top).sum()))
