"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numbers

import numpy as np

from .graphs import Graph

__all__ = ["check_label_matrix", "check_graph_list", "check_seed"]


def check_label_matrix(X) -> np.ndarray:
    """Coerce to an (n_samples, n_variables) integer label array."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D label array, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"need at least one sample and one variable, got {X.shape}")
    if not np.issubdtype(X.dtype, np.integer):
        rounded = np.rint(np.asarray(X, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(X, dtype=np.float64)):
            raise ValueError("labels must be integers")
        X = rounded.astype(np.int64)
    if np.any(X < 0):
        raise ValueError("labels must be nonnegative class indices")
    return X.astype(np.int64)


def check_graph_list(graphs) -> list[Graph]:
    graphs = list(graphs)
    if not graphs:
        raise ValueError("need at least one graph")
    if not all(isinstance(g, Graph) for g in graphs):
        raise TypeError("all inputs must be Graph instances")
    kv = graphs[0].k_node
    ke = graphs[0].k_edge_classes
    if any(g.k_node != kv or g.k_edge_classes != ke for g in graphs):
        raise ValueError("all graphs must share node and edge class counts")
    return graphs


def check_seed(seed, fallback: int) -> int:
    if seed is None:
        return int(fallback)
    if not isinstance(seed, numbers.Integral):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    return int(seed)
