"""AdamW with decoupled weight decay, cosine annealing, and EMA shadows."""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor

__all__ = ["AdamW", "cosine_lr", "EmaState"]


class AdamW:
    """Decoupled-weight-decay Adam over a list of parameter tensors.

    The decay is applied to the parameter directly (``p -= lr * wd * p``)
    before the bias-corrected moment update; moments start at zero.
    """

    def __init__(
        self,
        params: list[Tensor],
        lr: float = 2e-4,
        weight_decay: float = 1e-12,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.first_moment = [np.zeros_like(p.data) for p in self.params]
        self.second_moment = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float | None = None) -> None:
        """Apply one update from the gradients currently held by the params."""
        grads = []
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise ValueError("non-finite gradient encountered; no update applied")
            grads.append(g)
        lr = self.lr if lr is None else float(lr)
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.step_count
        bc2 = 1.0 - b2 ** self.step_count
        for p, g, m, v in zip(self.params, grads, self.first_moment, self.second_moment):
            if self.weight_decay:
                p.data -= lr * self.weight_decay * p.data
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (m, v) in enumerate(zip(self.first_moment, self.second_moment)):
            out[f"adam_m.{i}"] = m
            out[f"adam_v.{i}"] = v
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        for i in range(len(self.params)):
            self.first_moment[i] = np.array(arrays[f"adam_m.{i}"], dtype=np.float64)
            self.second_moment[i] = np.array(arrays[f"adam_v.{i}"], dtype=np.float64)
        self.step_count = int(step_count)


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """Cosine annealing from lr0 at step 0 down to 0 at total_steps."""
    if total_steps <= 0:
        raise ValueError(f"total_steps must be positive, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


class EmaState:
    """Exponential moving average of parameters with in-place swap for eval."""

    def __init__(self, params: list[Tensor], decay: float = 0.999):
        if not 0.0 <= decay <= 1.0:
            raise ValueError(f"decay must lie in [0, 1], got {decay}")
        self.decay = float(decay)
        self.params = list(params)
        self.shadow = [np.array(p.data, dtype=np.float64) for p in self.params]

    def update(self) -> None:
        d = self.decay
        for s, p in zip(self.shadow, self.params):
            if s.shape != p.data.shape:
                raise ValueError(
                    f"parameter shape drift: shadow {s.shape} vs param {p.data.shape}"
                )
            s *= d
            s += (1.0 - d) * p.data

    def swap(self) -> None:
        """Exchange live parameters and shadow copies (call again to restore)."""
        for s, p in zip(self.shadow, self.params):
            tmp = p.data.copy()
            p.data[...] = s
            s[...] = tmp

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {f"ema.{i}": s for i, s in enumerate(self.shadow)}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for i in range(len(self.shadow)):
            self.shadow[i] = np.array(arrays[f"ema.{i}"], dtype=np.float64)
