"""Permutation-equivariant graph transformer building blocks.

All blocks are batched: node features (B, N, Fn), edge features (B, N, N, Fe),
global features (B, Fg), with a 0/1 node mask (B, N). Masked nodes never
influence valid nodes (attention keys are suppressed, pooled statistics run
over valid entries only), which keeps mixed-size batches exact.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = ["film", "pna", "transformer_layer", "time_embedding", "LayerParams"]

_NEG_BIG = 1e30


def film(m1, m2, w1, w2) -> Tensor:
    """Feature-wise linear modulation: M1 W1 + (M1 W2) ⊙ M2 + M2.

    ``m1`` is the modulator; when it has fewer axes than ``m2`` (a global
    vector modulating node or edge features) it is expanded across the
    missing middle axes.
    """
    a = T.matmul(m1, w1)
    b = T.matmul(m1, w2)
    extra = (m2.ndim if isinstance(m2, Tensor) else np.ndim(m2)) - a.ndim
    if extra > 0:
        target = a.shape[:-1] + (1,) * extra + a.shape[-1:]
        a = T.reshape(a, target)
        b = T.reshape(b, target)
    return T.add(T.add(a, T.mul(b, m2)), m2)


def pna(x, w) -> Tensor:
    """Concatenated max/min/mean/std over the node axis, then a linear map.

    ``x`` is a single (N, F) matrix; the per-feature statistics are stacked
    as [max, min, mean, std] into a (4F,) vector before applying ``w``.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"pna expects a nonempty (N, F) matrix, got shape {x.shape}")
    stats = T.concat(
        [T.tmax(x, axis=0), T.tmin(x, axis=0), T.tmean(x, axis=0), T.tstd(x, axis=0)],
        axis=0,
    )
    return T.reshape(T.matmul(T.reshape(stats, (1, -1)), w), (w.shape[1],))


def _masked_stats(x: Tensor, mask3: np.ndarray, counts_raw: np.ndarray, axis: int) -> Tensor:
    """max/min/mean/std over one axis restricted to mask-valid entries.

    Rows with no valid entries yield all-zero statistics. The variance uses
    the moment form E[x^2] - mean^2 floored at zero (fine at feature scale).
    """
    any_valid = (counts_raw > 0).astype(np.float64)
    counts = np.maximum(counts_raw, 1.0)
    masked = T.mul(x, mask3)
    mean = T.div(T.tsum(masked, axis=axis), counts)
    hi = T.mul(T.tmax(T.add(x, (mask3 - 1.0) * _NEG_BIG), axis=axis), any_valid)
    lo = T.mul(T.tmin(T.add(x, (1.0 - mask3) * _NEG_BIG), axis=axis), any_valid)
    second = T.div(T.tsum(T.mul(masked, x), axis=axis), counts)
    var = T.maximum(T.sub(second, T.mul(mean, mean)), 0.0)
    return T.concat([hi, lo, mean, T.sqrt(var)], axis=-1)


def time_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal embedding of times in [0, 1]."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = t[:, None] * 1000.0 * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class LayerParams:
    """One transformer layer's weights, keyed for checkpointing."""

    def __init__(self, cfg, rng: np.random.Generator, prefix: str):
        hn, he, hg = cfg.hidden_node, cfg.hidden_edge, cfg.hidden_global
        self.prefix = prefix
        self.n_heads = cfg.n_heads
        self.tensors: dict[str, Tensor] = {}

        def lin(name, fan_in, fan_out, scale=1.0):
            bound = scale / math.sqrt(fan_in)
            self.tensors[f"{prefix}.{name}"] = Tensor(
                rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True
            )

        lin("node_lin", hn, hn)
        lin("edge_lin", he, he)
        lin("outer_p", hn, he)
        lin("outer_q", hn, he)
        lin("film_node_w1", hg, hn)
        lin("film_node_w2", hg, hn)
        lin("film_edge_w1", hg, he)
        lin("film_edge_w2", hg, he)
        lin("attn_q", hn, hn)
        lin("attn_k", hn, hn)
        lin("attn_v", hn, hn)
        lin("attn_out", hn, hn)
        lin("attn_edge_bias", he, cfg.n_heads)
        lin("pna_node", 4 * hn, hg)
        lin("pna_edge", 4 * he, hg)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[f"{self.prefix}.{name}"]


def transformer_layer(hn, he, hg, params: LayerParams, mask: np.ndarray | None = None):
    """One update of the (node, edge, global) triplet.

    Edges absorb scaled outer products of projected node features and are
    FiLM-modulated by the globals; nodes are FiLM-modulated then mixed by
    multi-head attention whose scores carry an edge-derived bias; the globals
    accumulate PNA-pooled node and edge statistics.
    """
    hn = hn if isinstance(hn, Tensor) else Tensor(hn)
    he = he if isinstance(he, Tensor) else Tensor(he)
    hg = hg if isinstance(hg, Tensor) else Tensor(hg)
    squeeze = hn.ndim == 2
    if squeeze:
        hn = T.reshape(hn, (1,) + hn.shape)
        he = T.reshape(he, (1,) + he.shape)
        hg = T.reshape(hg, (1,) + hg.shape)
    B, N, dn = hn.shape
    de = he.shape[-1]
    heads = params.n_heads
    dh = dn // heads
    if mask is None:
        mask = np.ones((B, N), dtype=np.float64)

    node_m = mask[:, :, None]  # (B,N,1)
    pair_m = mask[:, :, None] * mask[:, None, :] * (1.0 - np.eye(N))[None]  # (B,N,N)
    n_valid = mask.sum(axis=1, keepdims=True)  # (B,1)
    n_pairs = pair_m.reshape(B, -1).sum(axis=1, keepdims=True)

    an = T.matmul(hn, params["node_lin"])
    ae = T.matmul(he, params["edge_lin"])
    p = T.matmul(hn, params["outer_p"])
    q = T.matmul(hn, params["outer_q"])
    outer = T.mul(
        T.broadcast_to(T.reshape(p, (B, N, 1, de)), (B, N, N, de)),
        T.reshape(q, (B, 1, N, de)),
    )
    outer = T.mul(outer, 1.0 / math.sqrt(dn))
    e1 = T.add(ae, outer)
    he_new = film(hg, e1, params["film_edge_w1"], params["film_edge_w2"])
    hn1 = film(hg, an, params["film_node_w1"], params["film_node_w2"])

    def to_heads(x):
        return T.transpose(T.reshape(x, (B, N, heads, dh)), (0, 2, 1, 3))

    qh = to_heads(T.matmul(hn1, params["attn_q"]))
    kh = to_heads(T.matmul(hn1, params["attn_k"]))
    vh = to_heads(T.matmul(hn1, params["attn_v"]))
    scores = T.mul(T.matmul(qh, T.transpose(kh, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    ebias = T.transpose(T.matmul(he_new, params["attn_edge_bias"]), (0, 3, 1, 2))
    key_mask = np.broadcast_to((mask[:, None, None, :] - 1.0) * _NEG_BIG, (B, heads, N, N))
    att = T.softmax(T.add(T.add(scores, ebias), key_mask))
    ctx = T.reshape(T.transpose(T.matmul(att, vh), (0, 2, 1, 3)), (B, N, dn))
    hn_new = T.add(hn1, T.matmul(ctx, params["attn_out"]))

    node_stats = _masked_stats(hn_new, node_m, n_valid, axis=1)  # (B, 4dn)
    edge_flat = T.reshape(he_new, (B, N * N, de))
    edge_stats = _masked_stats(edge_flat, pair_m.reshape(B, N * N, 1), n_pairs, axis=1)
    hg_new = T.add(
        hg,
        T.add(
            T.matmul(node_stats, params["pna_node"]),
            T.matmul(edge_stats, params["pna_edge"]),
        ),
    )

    if squeeze:
        hn_new = T.reshape(hn_new, hn_new.shape[1:])
        he_new = T.reshape(he_new, he_new.shape[1:])
        hg_new = T.reshape(hg_new, hg_new.shape[1:])
    return hn_new, he_new, hg_new
