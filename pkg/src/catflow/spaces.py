"""Product spaces of categorical variables and their one-hot embedding."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["CategoricalSpace", "StatePoint", "PosteriorMarginals"]


@dataclass(frozen=True)
class CategoricalSpace:
    """D categorical variables with per-variable class counts, embedded in R^{sum K_d}."""

    K: tuple[int, ...]

    def __post_init__(self):
        K = tuple(int(k) for k in self.K)
        if len(K) < 1:
            raise ValueError("space needs at least one variable")
        if any(k < 2 for k in K):
            raise ValueError(f"every class count must be >= 2, got {K}")
        object.__setattr__(self, "K", K)

    @property
    def D(self) -> int:
        return len(self.K)

    @property
    def total_dim(self) -> int:
        return sum(self.K)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.K)])

    def flat_index(self, d: int, k: int) -> int:
        if not 0 <= d < self.D or not 0 <= k < self.K[d]:
            raise IndexError(f"(d={d}, k={k}) outside space with K={self.K}")
        return int(self.offsets[d]) + k

    def block(self, x: np.ndarray, d: int) -> np.ndarray:
        off = self.offsets
        return x[..., off[d]:off[d + 1]]

    def onehot(self, labels) -> np.ndarray:
        """Encode per-variable class indices into the flat embedding."""
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape[-1] != self.D:
            raise ValueError(f"expected {self.D} labels per point, got shape {labels.shape}")
        out = np.zeros(labels.shape[:-1] + (self.total_dim,), dtype=np.float64)
        off = self.offsets
        for d in range(self.D):
            kd = labels[..., d]
            if np.any(kd < 0) or np.any(kd >= self.K[d]):
                raise ValueError(f"label out of range for variable {d} (K={self.K[d]})")
            np.put_along_axis(out, (off[d] + kd)[..., None], 1.0, axis=-1)
        return out

    def argmax_labels(self, x: np.ndarray) -> np.ndarray:
        """Decode a real-valued embedding to per-variable class indices."""
        x = np.asarray(x, dtype=np.float64)
        off = self.offsets
        return np.stack(
            [x[..., off[d]:off[d + 1]].argmax(axis=-1) for d in range(self.D)], axis=-1
        )


@dataclass(frozen=True)
class StatePoint:
    """A position in the embedding space at a time t in [0, 1]."""

    t: float
    x: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {self.t}")
        x = np.asarray(self.x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise ValueError("state contains non-finite values")
        object.__setattr__(self, "x", x)


@dataclass
class PosteriorMarginals:
    """Per-variable probability vectors, concatenated over the embedding axis."""

    space: CategoricalSpace
    mu: np.ndarray = field(repr=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        if mu.shape[-1] != self.space.total_dim:
            raise ValueError(
                f"marginal vector length {mu.shape[-1]} != space dim {self.space.total_dim}"
            )
        off = self.space.offsets
        for d in range(self.space.D):
            block = mu[..., off[d]:off[d + 1]]
            if np.any(block < -1e-12):
                raise ValueError(f"negative probability in block {d}")
            if np.max(np.abs(block.sum(axis=-1) - 1.0)) > 1e-9:
                raise ValueError(f"block {d} does not sum to 1 within 1e-9")
        self.mu = mu

    def block(self, d: int) -> np.ndarray:
        return self.space.block(self.mu, d)
