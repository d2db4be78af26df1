"""Marginal predictors: a graph transformer for node/edge categoricals and an
MLP head for flat categorical spaces.

Both predict per-variable class probabilities ("catflow" objective), a raw
endpoint mean ("gaussian_vfm"), or a raw velocity field ("fm_baseline") from
a noisy state and a time. Edge outputs are symmetrized before any softmax so
predictions are exactly symmetric, and all graph ops are equivariant under
node permutations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import LayerParams, time_embedding, transformer_layer
from .spaces import CategoricalSpace
from .tensor import Tensor

__all__ = ["ModelConfig", "GraphMarginalModel", "MlpMarginalModel", "OBJECTIVES"]

OBJECTIVES = ("catflow", "gaussian_vfm", "fm_baseline")

# final heads start near zero so initial marginals are ~uniform while every
# parameter still receives gradient
_HEAD_SCALE = 1e-3


def _check_objective(objective: str) -> str:
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")
    return objective


def _uniform_weight(rng, fan_in, fan_out, scale=1.0) -> Tensor:
    bound = scale / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 4
    hidden_node: int = 64
    hidden_edge: int = 32
    hidden_global: int = 64
    n_heads: int = 4
    time_embedding_dim: int = 32

    def __post_init__(self):
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        for name in ("hidden_node", "hidden_edge", "hidden_global", "n_heads", "time_embedding_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.hidden_node % self.n_heads:
            raise ValueError(
                f"hidden_node ({self.hidden_node}) must be divisible by n_heads ({self.n_heads})"
            )

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "hidden_node": self.hidden_node,
            "hidden_edge": self.hidden_edge,
            "hidden_global": self.hidden_global,
            "n_heads": self.n_heads,
            "time_embedding_dim": self.time_embedding_dim,
        }


class _ParamStore:
    def __init__(self):
        self.tensors: dict[str, Tensor] = {}

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(self.tensors)

    def parameters(self) -> list[Tensor]:
        return [self.tensors[k] for k in sorted(self.tensors)]

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self.tensors.items():
            if name not in arrays:
                raise KeyError(f"checkpoint is missing parameter {name!r}")
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ValueError(
                    f"parameter {name!r} shape {arr.shape} != expected {t.data.shape}"
                )
            t.data[...] = arr


class GraphMarginalModel(_ParamStore):
    """Graph transformer predicting per-node and per-edge class outputs."""

    def __init__(
        self,
        cfg: ModelConfig,
        k_node: int,
        k_edge_classes: int,
        objective: str = "catflow",
        seed: int = 0,
    ):
        super().__init__()
        self.cfg = cfg
        self.k_node = int(k_node)
        self.k_edge_classes = int(k_edge_classes)
        self.objective = _check_objective(objective)
        rng = np.random.default_rng(np.random.SeedSequence([3, int(seed)]))
        hn, he, hg = cfg.hidden_node, cfg.hidden_edge, cfg.hidden_global
        # degree channel on nodes; size + mean degree appended to the globals
        self.tensors["in_node"] = _uniform_weight(rng, self.k_node + 1, hn)
        self.tensors["in_edge"] = _uniform_weight(rng, self.k_edge_classes, he)
        self.tensors["in_global"] = _uniform_weight(rng, cfg.time_embedding_dim + 2, hg)
        self.layers = [
            LayerParams(cfg, rng, prefix=f"layer{i}") for i in range(cfg.n_layers)
        ]
        for lp in self.layers:
            self.tensors.update(lp.tensors)
        self.tensors["head_node"] = _uniform_weight(rng, hn, self.k_node, scale=_HEAD_SCALE)
        self.tensors["head_edge"] = _uniform_weight(rng, he, self.k_edge_classes, scale=_HEAD_SCALE)

    # -- feature preparation (constants, plain numpy) -----------------------

    def _prepare(self, hn0: np.ndarray, he0: np.ndarray, mask: np.ndarray, t: np.ndarray):
        B, N, _ = hn0.shape
        off_diag = (1.0 - np.eye(N))[None]
        present = (he0.argmax(axis=3) != 0) * (mask[:, :, None] * mask[:, None, :] * off_diag > 0)
        n_valid = np.maximum(mask.sum(axis=1, keepdims=True), 1.0)
        deg = present.sum(axis=2)  # (B,N)
        deg_norm = deg / np.maximum(n_valid - 1.0, 1.0)
        node_in = np.concatenate([hn0, deg_norm[:, :, None]], axis=2)
        mean_deg = deg.sum(axis=1, keepdims=True) / n_valid
        glob_in = np.concatenate(
            [time_embedding(t, self.cfg.time_embedding_dim), n_valid / 20.0, mean_deg / 10.0],
            axis=1,
        )
        return node_in, glob_in

    def forward(
        self,
        hn0: np.ndarray,
        he0: np.ndarray,
        t: np.ndarray,
        mask: np.ndarray | None = None,
    ) -> tuple[Tensor, Tensor]:
        """Batched forward pass; returns (node output, edge output) tensors.

        Outputs are per-class probabilities for the catflow objective and raw
        values otherwise; edge outputs are symmetric either way.
        """
        hn0 = np.asarray(hn0, dtype=np.float64)
        he0 = np.asarray(he0, dtype=np.float64)
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        B, N, _ = hn0.shape
        if mask is None:
            mask = np.ones((B, N), dtype=np.float64)
        node_in, glob_in = self._prepare(hn0, he0, mask, t)

        hn = T.matmul(Tensor(node_in), self.tensors["in_node"])
        he = T.matmul(Tensor(he0), self.tensors["in_edge"])
        hg = T.matmul(Tensor(glob_in), self.tensors["in_global"])
        for i, lp in enumerate(self.layers):
            hn, he, hg = transformer_layer(hn, he, hg, lp, mask=mask)
            if not (
                np.all(np.isfinite(hn.data))
                and np.all(np.isfinite(he.data))
                and np.all(np.isfinite(hg.data))
            ):
                raise ValueError(f"non-finite activations after layer {i}")
        node_out = T.matmul(hn, self.tensors["head_node"])
        edge_out = T.matmul(he, self.tensors["head_edge"])
        edge_out = T.mul(T.add(edge_out, T.transpose(edge_out, (0, 2, 1, 3))), 0.5)
        if self.objective == "catflow":
            node_out = T.softmax(node_out)
            edge_out = T.softmax(edge_out)
        return node_out, edge_out

    def predict_marginals(self, hn0: np.ndarray, he0: np.ndarray, t: float):
        """Single-graph convenience wrapper returning numpy arrays."""
        node_out, edge_out = self.forward(hn0[None], he0[None], np.array([t]))
        return node_out.data[0], edge_out.data[0]

    def meta(self) -> dict:
        return {
            "kind": "graph",
            "objective": self.objective,
            "k_node": self.k_node,
            "k_edge_classes": self.k_edge_classes,
            "model": self.cfg.to_dict(),
        }


class MlpMarginalModel(_ParamStore):
    """Two-hidden-layer MLP over a flat categorical embedding."""

    def __init__(
        self,
        space: CategoricalSpace,
        hidden_dim: int = 128,
        n_hidden: int = 2,
        time_embedding_dim: int = 32,
        objective: str = "catflow",
        seed: int = 0,
    ):
        super().__init__()
        if n_hidden < 1:
            raise ValueError("n_hidden must be >= 1")
        self.space = space
        self.hidden_dim = int(hidden_dim)
        self.n_hidden = int(n_hidden)
        self.time_embedding_dim = int(time_embedding_dim)
        self.objective = _check_objective(objective)
        rng = np.random.default_rng(np.random.SeedSequence([4, int(seed)]))
        dims = [space.total_dim + time_embedding_dim] + [hidden_dim] * n_hidden
        for i, (fi, fo) in enumerate(zip(dims[:-1], dims[1:])):
            self.tensors[f"w{i}"] = _uniform_weight(rng, fi, fo)
            self.tensors[f"b{i}"] = Tensor(np.zeros(fo), requires_grad=True)
        self.tensors["w_out"] = _uniform_weight(rng, hidden_dim, space.total_dim, scale=_HEAD_SCALE)
        self.tensors["b_out"] = Tensor(np.zeros(space.total_dim), requires_grad=True)

    def forward(self, x: np.ndarray, t: np.ndarray) -> Tensor:
        """Batched forward over flat states (B, total_dim)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        feats = np.concatenate([x, time_embedding(t, self.time_embedding_dim)], axis=1)
        h = Tensor(feats)
        for i in range(self.n_hidden):
            h = T.relu(T.add(T.matmul(h, self.tensors[f"w{i}"]), self.tensors[f"b{i}"]))
        logits = T.add(T.matmul(h, self.tensors["w_out"]), self.tensors["b_out"])
        if not np.all(np.isfinite(logits.data)):
            raise ValueError("non-finite activations in output layer")
        if self.objective != "catflow":
            return logits
        off = self.space.offsets
        blocks = [
            T.softmax(T.narrow(logits, 1, int(off[d]), self.space.K[d]))
            for d in range(self.space.D)
        ]
        return T.concat(blocks, axis=1)

    def predict_marginals(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.forward(np.atleast_2d(x), np.array([float(t)])).data[0]

    def marginal_fn(self):
        """Callable (t, x) -> flat marginals for oracles and samplers."""

        def fn(t, x):
            x = np.asarray(x, dtype=np.float64)
            if x.ndim == 1:
                return self.forward(x[None], np.array([float(t)])).data[0]
            tt = np.full(x.shape[0], float(t)) if np.ndim(t) == 0 else np.asarray(t)
            return self.forward(x, tt).data

        return fn

    def meta(self) -> dict:
        return {
            "kind": "table",
            "objective": self.objective,
            "space_K": list(self.space.K),
            "model": {
                "hidden_dim": self.hidden_dim,
                "n_hidden": self.n_hidden,
                "time_embedding_dim": self.time_embedding_dim,
            },
        }
