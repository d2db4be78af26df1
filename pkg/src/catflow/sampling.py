"""Deterministic ODE and stochastic SDE integration of simplex-seeking fields.

Fields are supplied as callables over batched flat states. Marginal-style
models define the velocity (mu - x)/(1 - t + eps); raw-field models are
integrated directly. Field evaluations are capped at t = 1 - 1/n_steps so no
scheme or score term ever touches the t = 1 singularity. Every trajectory
draws its source point (and SDE noise) from its own seed-split stream, so
results are independent of batch grouping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graphs import Graph, decode, OneHotGraph
from .rng import generator, trajectory_generator
from .spaces import CategoricalSpace

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "variational_velocity",
    "integrate_ode",
    "integrate_sde",
    "batch_sample_table",
    "batch_sample_graphs",
    "GraphStateCodec",
]

_SCHEMES = ("euler", "midpoint", "rk4")


@dataclass(frozen=True)
class IntegratorConfig:
    n_steps: int = 200
    scheme: str = "euler"
    eps_denom: float = 1e-5
    g_const: float = 0.0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {_SCHEMES}")
        if self.eps_denom < 0:
            raise ValueError("eps_denom must be >= 0")
        if self.g_const < 0:
            raise ValueError("g_const must be >= 0")

    def to_dict(self) -> dict:
        return {
            "n_steps": self.n_steps,
            "scheme": self.scheme,
            "eps_denom": self.eps_denom,
            "g_const": self.g_const,
        }


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray = field(repr=False)  # (n_steps + 1, *state_shape)
    final: np.ndarray = field(repr=False)   # states[-1]


def variational_velocity(t: float, x: np.ndarray, mu: np.ndarray, eps: float) -> np.ndarray:
    """(mu - x) / (1 - t + eps); the eps term removes the t = 1 singularity."""
    return (np.asarray(mu) - np.asarray(x)) / (1.0 - t + eps)


def _make_field(marginal_fn, cfg: IntegratorConfig, field_mode: str):
    if field_mode == "marginal":
        def f(t, x):
            return variational_velocity(t, x, marginal_fn(t, x), cfg.eps_denom)
    elif field_mode == "raw":
        def f(t, x):
            return np.asarray(marginal_fn(t, x), dtype=np.float64)
    else:
        raise ValueError(f"unknown field mode {field_mode!r}")
    return f


def _check_finite(x: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite state at integration step {step}")


def integrate_ode(
    x0: np.ndarray,
    marginal_fn,
    cfg: IntegratorConfig,
    field_mode: str = "marginal",
    keep_states: bool = True,
) -> Trajectory:
    """Fixed-step integration from t=0 to t=1 on a uniform grid.

    ``marginal_fn(t, x)`` maps a scalar time and batched states to the
    predicted endpoint marginals (or to the raw field when ``field_mode`` is
    "raw").
    """
    x = np.array(x0, dtype=np.float64)
    n = cfg.n_steps
    dt = 1.0 / n
    t_cap = 1.0 - dt
    f = _make_field(marginal_fn, cfg, field_mode)
    times = np.linspace(0.0, 1.0, n + 1)
    states = np.empty((n + 1,) + x.shape, dtype=np.float64) if keep_states else None
    if keep_states:
        states[0] = x
    for i in range(n):
        t = i * dt
        if cfg.scheme == "euler":
            x = x + dt * f(t, x)
        elif cfg.scheme == "midpoint":
            k1 = f(t, x)
            x = x + dt * f(min(t + 0.5 * dt, t_cap), x + 0.5 * dt * k1)
        else:  # rk4
            k1 = f(t, x)
            k2 = f(min(t + 0.5 * dt, t_cap), x + 0.5 * dt * k1)
            k3 = f(min(t + 0.5 * dt, t_cap), x + 0.5 * dt * k2)
            k4 = f(min(t + dt, t_cap), x + dt * k3)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite(x, i)
        if keep_states:
            states[i + 1] = x
    if not keep_states:
        states = np.stack([np.array(x0, dtype=np.float64), x])
        times = np.array([0.0, 1.0])
    return Trajectory(times=times, states=states, final=x)


def integrate_sde(
    x0: np.ndarray,
    marginal_fn,
    cfg: IntegratorConfig,
    rngs: list[np.random.Generator] | None = None,
    keep_states: bool = True,
) -> Trajectory:
    """Euler-Maruyama with drift v + (g^2/2) s and diffusion g.

    The score s is derived from the same marginals as the velocity. With
    g = 0 every step reduces to the ODE Euler update bit-for-bit. The final
    step is taken deterministically (velocity only), keeping the score away
    from t = 1. ``rngs`` holds one stream per batch row.
    """
    x = np.array(x0, dtype=np.float64)
    batched = x.ndim > 1
    n = cfg.n_steps
    dt = 1.0 / n
    t_cap = 1.0 - dt
    g = cfg.g_const
    if g > 0 and rngs is None:
        raise ValueError("stochastic integration requires per-trajectory rng streams")
    times = np.linspace(0.0, 1.0, n + 1)
    states = np.empty((n + 1,) + x.shape, dtype=np.float64) if keep_states else None
    if keep_states:
        states[0] = x
    for i in range(n):
        t = i * dt
        mu = np.asarray(marginal_fn(t, x), dtype=np.float64)
        v = variational_velocity(t, x, mu, cfg.eps_denom)
        if g > 0 and i < n - 1:
            ts = min(t, t_cap)
            score = -(x - ts * mu) / (1.0 - ts) ** 2
            drift = v + 0.5 * g * g * score
            if batched:
                noise = np.stack([r.standard_normal(x.shape[-1]) for r in rngs])
            else:
                noise = rngs[0].standard_normal(x.shape)
            x = x + dt * drift + g * np.sqrt(dt) * noise
        else:
            x = x + dt * v
        _check_finite(x, i)
        if keep_states:
            states[i + 1] = x
    if not keep_states:
        states = np.stack([np.array(x0, dtype=np.float64), x])
        times = np.array([0.0, 1.0])
    return Trajectory(times=times, states=states, final=x)


def _trajectory_streams(seed: int, indices) -> list[np.random.Generator]:
    return [trajectory_generator(seed, int(i)) for i in indices]


def batch_sample_table(
    marginal_fn,
    space: CategoricalSpace,
    n: int,
    cfg: IntegratorConfig,
    seed: int,
    field_mode: str = "marginal",
) -> np.ndarray:
    """Draw n label vectors by integrating from seed-split source points."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rngs = _trajectory_streams(seed, range(n))
    x0 = np.stack([r.standard_normal(space.total_dim) for r in rngs])
    if cfg.g_const > 0:
        if field_mode != "marginal":
            raise ValueError("stochastic sampling needs endpoint marginals for the score")
        traj = integrate_sde(x0, marginal_fn, cfg, rngs=rngs, keep_states=False)
    else:
        traj = integrate_ode(x0, marginal_fn, cfg, field_mode=field_mode, keep_states=False)
    return space.argmax_labels(traj.final)


class GraphStateCodec:
    """Flattens symmetric graph states to vectors and back.

    Layout: node blocks (n * k_node) then upper-triangle edge blocks
    (n*(n-1)/2 * k_edge_classes). Unflattened edge tensors are symmetric with
    an all-zero diagonal.
    """

    def __init__(self, n_nodes: int, k_node: int, k_edge_classes: int):
        self.n = int(n_nodes)
        self.kv = int(k_node)
        self.ke = int(k_edge_classes)
        self.iu = np.triu_indices(self.n, k=1)
        self.dim = self.n * self.kv + len(self.iu[0]) * self.ke

    def flatten(self, hn: np.ndarray, he: np.ndarray) -> np.ndarray:
        B = hn.shape[0]
        sym = 0.5 * (he + he.transpose(0, 2, 1, 3))
        return np.concatenate(
            [hn.reshape(B, -1), sym[:, self.iu[0], self.iu[1], :].reshape(B, -1)], axis=1
        )

    def unflatten(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        B = x.shape[0]
        hn = x[:, : self.n * self.kv].reshape(B, self.n, self.kv)
        edge = x[:, self.n * self.kv:].reshape(B, len(self.iu[0]), self.ke)
        he = np.zeros((B, self.n, self.n, self.ke), dtype=np.float64)
        he[:, self.iu[0], self.iu[1], :] = edge
        he[:, self.iu[1], self.iu[0], :] = edge
        return hn, he

    def field_fn(self, model):
        """Batched flat (t, x) -> flat model output for this graph size."""

        def fn(t, x):
            x = np.atleast_2d(np.asarray(x, dtype=np.float64))
            hn, he = self.unflatten(x)
            tt = np.full(x.shape[0], float(t))
            node_out, edge_out = model.forward(hn, he, tt)
            return self.flatten(node_out.data, edge_out.data)

        return fn


def batch_sample_graphs(
    model,
    n: int,
    size_histogram: dict[int, int],
    cfg: IntegratorConfig,
    seed: int,
) -> list[Graph]:
    """Sample n graphs; sizes come from the training-set size histogram."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sizes = sorted(size_histogram)
    counts = np.array([size_histogram[s] for s in sizes], dtype=np.float64)
    probs = counts / counts.sum()
    size_rng = generator(seed)
    drawn = size_rng.choice(sizes, size=n, p=probs)
    field_mode = "raw" if model.objective == "fm_baseline" else "marginal"
    results: list[Graph | None] = [None] * n
    for size in sorted(set(int(s) for s in drawn)):
        idx = np.flatnonzero(drawn == size)
        codec = GraphStateCodec(size, model.k_node, model.k_edge_classes)
        rngs = _trajectory_streams(seed, idx)
        x0 = np.stack([r.standard_normal(codec.dim) for r in rngs])
        if cfg.g_const > 0:
            if field_mode != "marginal":
                raise ValueError("stochastic sampling needs endpoint marginals for the score")
            traj = integrate_sde(x0, codec.field_fn(model), cfg, rngs=rngs, keep_states=False)
        else:
            traj = integrate_ode(
                x0, codec.field_fn(model), cfg, field_mode=field_mode, keep_states=False
            )
        hn, he = codec.unflatten(traj.final)
        for row, i in enumerate(idx):
            results[int(i)] = decode(
                OneHotGraph(hn[row], he[row]),
                k_node=model.k_node,
                k_edge_classes=model.k_edge_classes,
            )
    return results  # type: ignore[return-value]
