"""Categorical graph data model, one-hot encoding, permutations, generators,
and the line-delimited dataset file format.

Edge class 0 always means "absent"; edge label matrices are symmetric with an
absent diagonal (no self-loops). Generators are pure functions of their
parameters and the supplied generator, so fixed seeds give bit-identical
datasets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .paths import FiniteDataset
from .spaces import CategoricalSpace

__all__ = [
    "Graph",
    "OneHotGraph",
    "Permutation",
    "encode",
    "decode",
    "apply_permutation",
    "gen_community_small",
    "gen_grid",
    "gen_categorical_table",
    "save_graphs",
    "load_graphs",
    "graphs_to_finite_dataset",
    "correlated_table_3var",
]

ABSENT = 0  # edge class reserved for "no edge"


@dataclass
class Graph:
    """Node class indices plus a symmetric edge class matrix (0 = absent)."""

    n_nodes: int
    node_labels: np.ndarray  # (n,), values in [0, k_node)
    edge_labels: np.ndarray  # (n, n), values in [0, k_edge_classes), symmetric, 0 diagonal
    k_node: int
    k_edge_classes: int  # includes the absent class

    def __post_init__(self):
        nl = np.asarray(self.node_labels, dtype=np.int64)
        el = np.asarray(self.edge_labels, dtype=np.int64)
        n = int(self.n_nodes)
        if nl.shape != (n,):
            raise ValueError(f"node_labels shape {nl.shape} != ({n},)")
        if el.shape != (n, n):
            raise ValueError(f"edge_labels shape {el.shape} != ({n}, {n})")
        if np.any(nl < 0) or np.any(nl >= self.k_node):
            raise ValueError(f"node labels outside [0, {self.k_node})")
        if np.any(el < 0) or np.any(el >= self.k_edge_classes):
            raise ValueError(f"edge labels outside [0, {self.k_edge_classes})")
        if not np.array_equal(el, el.T):
            raise ValueError("edge_labels must be symmetric")
        if np.any(np.diag(el) != ABSENT):
            raise ValueError("self-loops are not allowed (diagonal must be absent)")
        self.node_labels = nl
        self.edge_labels = el

    @property
    def adjacency(self) -> np.ndarray:
        return (self.edge_labels != ABSENT).astype(np.int64)

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum() // 2)

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Graph)
            and self.n_nodes == other.n_nodes
            and self.k_node == other.k_node
            and self.k_edge_classes == other.k_edge_classes
            and np.array_equal(self.node_labels, other.node_labels)
            and np.array_equal(self.edge_labels, other.edge_labels)
        )


@dataclass
class OneHotGraph:
    """One-hot node matrix and symmetric one-hot edge tensor."""

    Hn: np.ndarray  # (n, k_node)
    He: np.ndarray  # (n, n, k_edge_classes)

    def __post_init__(self):
        self.Hn = np.asarray(self.Hn, dtype=np.float64)
        self.He = np.asarray(self.He, dtype=np.float64)


@dataclass(frozen=True)
class Permutation:
    mapping: tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(i) for i in self.mapping)
        if sorted(m) != list(range(len(m))):
            raise ValueError(f"not a bijection on 0..{len(m) - 1}: {m}")
        object.__setattr__(self, "mapping", m)

    @property
    def matrix(self) -> np.ndarray:
        n = len(self.mapping)
        p = np.zeros((n, n), dtype=np.float64)
        p[np.arange(n), list(self.mapping)] = 1.0
        return p

    def inverse(self) -> "Permutation":
        inv = np.argsort(np.asarray(self.mapping))
        return Permutation(tuple(int(i) for i in inv))


def encode(g: Graph) -> OneHotGraph:
    n = g.n_nodes
    hn = np.zeros((n, g.k_node), dtype=np.float64)
    hn[np.arange(n), g.node_labels] = 1.0
    he = np.zeros((n, n, g.k_edge_classes), dtype=np.float64)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    he[ii, jj, g.edge_labels] = 1.0
    return OneHotGraph(hn, he)


def decode(oh: OneHotGraph, k_node: int | None = None, k_edge_classes: int | None = None) -> Graph:
    """Argmax decode of a (possibly real-valued) one-hot graph state.

    Edge blocks are symmetrized by averaging the (i, j) and (j, i) entries
    before the argmax; the diagonal is forced absent.
    """
    hn = np.asarray(oh.Hn, dtype=np.float64)
    he = np.asarray(oh.He, dtype=np.float64)
    if not (np.all(np.isfinite(hn)) and np.all(np.isfinite(he))):
        raise ValueError("cannot decode a non-finite graph state")
    n = hn.shape[0]
    node_labels = hn.argmax(axis=1)
    sym = 0.5 * (he + he.transpose(1, 0, 2))
    edge_labels = sym.argmax(axis=2)
    edge_labels[np.arange(n), np.arange(n)] = ABSENT
    return Graph(
        n_nodes=n,
        node_labels=node_labels,
        edge_labels=edge_labels,
        k_node=k_node if k_node is not None else hn.shape[1],
        k_edge_classes=k_edge_classes if k_edge_classes is not None else he.shape[2],
    )


def apply_permutation(oh: OneHotGraph, p: Permutation) -> OneHotGraph:
    """Row action P Hn and conjugation P He P^T on the node axes."""
    n = oh.Hn.shape[0]
    if len(p.mapping) != n:
        raise ValueError(f"permutation on {len(p.mapping)} items vs {n} nodes")
    perm = np.asarray(p.mapping)
    return OneHotGraph(oh.Hn[perm], oh.He[np.ix_(perm, perm)])


def permute_graph(g: Graph, p: Permutation) -> Graph:
    perm = np.asarray(p.mapping)
    return Graph(
        n_nodes=g.n_nodes,
        node_labels=g.node_labels[perm],
        edge_labels=g.edge_labels[np.ix_(perm, perm)],
        k_node=g.k_node,
        k_edge_classes=g.k_edge_classes,
    )


__all__.append("permute_graph")


# ---------------------------------------------------------------------------
# synthetic generators
# ---------------------------------------------------------------------------


def gen_community_small(
    n_graphs: int,
    rng: np.random.Generator,
    community_size_range: tuple[int, int] = (6, 10),
    intra_p: float = 0.7,
    inter_frac: float = 0.05,
) -> list[Graph]:
    """Two dense communities joined by a handful of bridge edges.

    Community sizes are uniform on the given range, so graphs have 12-20
    nodes; intra-community edges appear independently, and floor(inter_frac *
    |V|) bridge pairs (at least one) are drawn without replacement.
    """
    if n_graphs < 1:
        raise ValueError("n_graphs must be >= 1")
    lo, hi = community_size_range
    graphs = []
    for _ in range(n_graphs):
        sizes = rng.integers(lo, hi + 1, size=2)
        n = int(sizes.sum())
        edge_labels = np.zeros((n, n), dtype=np.int64)
        bounds = [(0, sizes[0]), (sizes[0], n)]
        for a, b in bounds:
            for i in range(a, b):
                for j in range(i + 1, b):
                    if rng.random() < intra_p:
                        edge_labels[i, j] = edge_labels[j, i] = 1
        n_inter = max(1, int(inter_frac * n))
        pairs = [(i, j) for i in range(bounds[0][0], bounds[0][1]) for j in range(bounds[1][0], n)]
        chosen = rng.choice(len(pairs), size=n_inter, replace=False)
        for c in np.atleast_1d(chosen):
            i, j = pairs[int(c)]
            edge_labels[i, j] = edge_labels[j, i] = 1
        graphs.append(
            Graph(
                n_nodes=n,
                node_labels=np.zeros(n, dtype=np.int64),
                edge_labels=edge_labels,
                k_node=1,
                k_edge_classes=2,
            )
        )
    return graphs


def gen_grid(
    n_graphs: int,
    rng: np.random.Generator,
    side_range: tuple[int, int] = (3, 5),
) -> list[Graph]:
    """2-D grid graphs with side lengths drawn uniformly from the range."""
    if n_graphs < 1:
        raise ValueError("n_graphs must be >= 1")
    graphs = []
    for _ in range(n_graphs):
        rows = int(rng.integers(side_range[0], side_range[1] + 1))
        cols = int(rng.integers(side_range[0], side_range[1] + 1))
        n = rows * cols
        edge_labels = np.zeros((n, n), dtype=np.int64)
        for r in range(rows):
            for c in range(cols):
                idx = r * cols + c
                if c + 1 < cols:
                    edge_labels[idx, idx + 1] = edge_labels[idx + 1, idx] = 1
                if r + 1 < rows:
                    edge_labels[idx, idx + cols] = edge_labels[idx + cols, idx] = 1
        graphs.append(
            Graph(
                n_nodes=n,
                node_labels=np.zeros(n, dtype=np.int64),
                edge_labels=edge_labels,
                k_node=1,
                k_edge_classes=2,
            )
        )
    return graphs


def gen_categorical_table(
    space: CategoricalSpace,
    probs: np.ndarray,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """I.i.d. label samples (n, D) from a joint probability table.

    ``probs`` is indexed by class tuples, shape equal to ``space.K``; tables
    are capped at 4096 outcomes.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != tuple(space.K):
        raise ValueError(f"table shape {probs.shape} != space {tuple(space.K)}")
    if probs.size > 4096:
        raise ValueError("joint tables are capped at 4096 outcomes")
    if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0, atol=1e-9):
        raise ValueError("table must be a probability distribution")
    flat = probs.reshape(-1)
    draws = rng.choice(flat.size, size=n, p=flat)
    return np.stack(np.unravel_index(draws, probs.shape), axis=-1).astype(np.int64)


def correlated_table_3var() -> tuple[CategoricalSpace, np.ndarray]:
    """A fixed correlated joint table over three binary variables."""
    space = CategoricalSpace((2, 2, 2))
    raw = np.array(
        [
            [[0.24, 0.06], [0.06, 0.10]],
            [[0.04, 0.06], [0.16, 0.28]],
        ]
    )
    return space, raw / raw.sum()


# ---------------------------------------------------------------------------
# dataset files: one JSON record per line
# ---------------------------------------------------------------------------


def _graph_record(g: Graph) -> dict:
    edges = []
    for i in range(g.n_nodes):
        for j in range(i + 1, g.n_nodes):
            if g.edge_labels[i, j] != ABSENT:
                edges.append([int(i), int(j), int(g.edge_labels[i, j])])
    return {
        "n_nodes": int(g.n_nodes),
        "k_node": int(g.k_node),
        "k_edge_classes": int(g.k_edge_classes),
        "node_labels": [int(v) for v in g.node_labels],
        "edges": edges,
    }


def save_graphs(path, graphs: list[Graph]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(json.dumps(_graph_record(g), separators=(",", ":")))
            fh.write("\n")


def load_graphs(path) -> list[Graph]:
    """Parse and validate a dataset file; malformed lines name their number."""
    graphs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                required = {"n_nodes", "k_node", "k_edge_classes", "node_labels", "edges"}
                missing = required - set(rec)
                if missing:
                    raise ValueError(f"missing keys {sorted(missing)}")
                n = int(rec["n_nodes"])
                edge_labels = np.zeros((n, n), dtype=np.int64)
                for i, j, c in rec["edges"]:
                    if not (0 <= i < n and 0 <= j < n) or i == j:
                        raise ValueError(f"bad edge ({i}, {j})")
                    edge_labels[i, j] = edge_labels[j, i] = int(c)
                g = Graph(
                    n_nodes=n,
                    node_labels=np.asarray(rec["node_labels"], dtype=np.int64),
                    edge_labels=edge_labels,
                    k_node=int(rec["k_node"]),
                    k_edge_classes=int(rec["k_edge_classes"]),
                )
            except (ValueError, KeyError, TypeError, json.JSONDecodeError) as err:
                raise ValueError(f"{path}: malformed record on line {lineno}: {err}") from err
            graphs.append(g)
    return graphs


def graphs_to_finite_dataset(graphs: list[Graph]) -> FiniteDataset:
    """Flatten equal-size graphs into a weighted one-hot dataset.

    Variables are the node labels (skipped when there is a single node class)
    followed by the upper-triangle edge labels.
    """
    if not graphs:
        raise ValueError("no graphs to flatten")
    n = graphs[0].n_nodes
    kv, ke = graphs[0].k_node, graphs[0].k_edge_classes
    if any(g.n_nodes != n or g.k_node != kv or g.k_edge_classes != ke for g in graphs):
        raise ValueError("flattening requires graphs of identical size and class counts")
    ks: list[int] = []
    if kv >= 2:
        ks.extend([kv] * n)
    ks.extend([ke] * (n * (n - 1) // 2))
    space = CategoricalSpace(tuple(ks))
    iu = np.triu_indices(n, k=1)
    rows = []
    for g in graphs:
        labels = []
        if kv >= 2:
            labels.extend(int(v) for v in g.node_labels)
        labels.extend(int(v) for v in g.edge_labels[iu])
        rows.append(labels)
    labels = np.asarray(rows, dtype=np.int64)
    uniq, inverse = np.unique(labels, axis=0, return_inverse=True)
    weights = np.bincount(inverse, minlength=len(uniq)).astype(np.float64)
    weights /= weights.sum()
    return FiniteDataset.from_labels(space, uniq, weights)
