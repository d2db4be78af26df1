"""Scikit-learn style generative estimators.

``fit`` trains the variational endpoint model on data; ``sample`` integrates
the learned field from fresh noise and decodes categorical samples. Sampling
uses the EMA weights. Hyperparameters follow the usual get_params/set_params
conventions, so ``sklearn.base.clone`` and model-selection tooling work.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .graphs import Graph
from .models import GraphMarginalModel, MlpMarginalModel, ModelConfig
from .sampling import IntegratorConfig, batch_sample_graphs, batch_sample_table
from .spaces import CategoricalSpace
from .training import TrainSettings, graph_batch_loss, run_training, table_batch_loss
from .validation import check_graph_list, check_label_matrix, check_seed

__all__ = ["CatFlowTableGenerator", "CatFlowGraphGenerator"]


class _SampledMixin:
    def _integrator(self, n_steps=None, g=None):
        return IntegratorConfig(
            n_steps=self.integrator_steps if n_steps is None else n_steps,
            scheme=self.scheme,
            eps_denom=self.eps_denom,
            g_const=self.g_const if g is None else g,
        )

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")


class CatFlowTableGenerator(BaseEstimator, _SampledMixin):
    """Generative model over rows of categorical labels (MLP head).

    Parameters mirror the training defaults: AdamW at lr 2e-4 with weight
    decay 1e-12, cosine annealing over ``n_steps``, EMA 0.999.
    """

    def __init__(
        self,
        objective: str = "catflow",
        hidden_dim: int = 128,
        n_hidden: int = 2,
        time_embedding_dim: int = 32,
        lr: float = 2e-4,
        weight_decay: float = 1e-12,
        ema_decay: float = 0.999,
        batch_size: int = 128,
        n_steps: int = 20_000,
        integrator_steps: int = 200,
        scheme: str = "euler",
        eps_denom: float = 1e-5,
        g_const: float = 0.0,
        classes_per_variable: tuple[int, ...] | None = None,
        seed: int = 0,
    ):
        self.objective = objective
        self.hidden_dim = hidden_dim
        self.n_hidden = n_hidden
        self.time_embedding_dim = time_embedding_dim
        self.lr = lr
        self.weight_decay = weight_decay
        self.ema_decay = ema_decay
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.integrator_steps = integrator_steps
        self.scheme = scheme
        self.eps_denom = eps_denom
        self.g_const = g_const
        self.classes_per_variable = classes_per_variable
        self.seed = seed

    def _infer_space(self, X: np.ndarray) -> CategoricalSpace:
        if self.classes_per_variable is not None:
            return CategoricalSpace(tuple(self.classes_per_variable))
        return CategoricalSpace(tuple(max(int(X[:, d].max()) + 1, 2) for d in range(X.shape[1])))

    def fit(self, X, y=None):
        X = check_label_matrix(X)
        space = self._infer_space(X)
        probs = np.zeros(tuple(space.K), dtype=np.float64)
        np.add.at(probs, tuple(X.T), 1.0)
        probs /= probs.sum()
        return self.fit_table(space, probs, n_samples_seen=X.shape[0])

    def fit_table(self, space: CategoricalSpace, probs: np.ndarray, n_samples_seen: int = 0):
        """Train directly against a joint probability table."""
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != tuple(space.K):
            raise ValueError(f"table shape {probs.shape} != space {tuple(space.K)}")
        model = MlpMarginalModel(
            space,
            hidden_dim=self.hidden_dim,
            n_hidden=self.n_hidden,
            time_embedding_dim=self.time_embedding_dim,
            objective=self.objective,
            seed=self.seed,
        )
        flat = probs.reshape(-1)
        settings = TrainSettings(
            objective=self.objective,
            total_steps=self.n_steps,
            batch_size=self.batch_size,
            lr=self.lr,
            weight_decay=self.weight_decay,
            ema_decay=self.ema_decay,
            seed=self.seed,
        )
        out = run_training(
            model,
            lambda rng: table_batch_loss(model, flat, rng, settings.batch_size),
            settings,
        )
        self.model_ = out.model
        self.ema_ = out.ema
        self.space_ = space
        self.loss_history_ = [row["loss"] for row in out.history]
        self.n_features_in_ = space.D
        self.n_samples_seen_ = n_samples_seen
        return self

    def sample(self, n: int, seed: int | None = None, g: float | None = None) -> np.ndarray:
        """Draw n label rows by integrating the learned field from noise."""
        self._check_fitted()
        seed = check_seed(seed, self.seed)
        cfg = self._integrator(g=g)
        field_mode = "raw" if self.objective == "fm_baseline" else "marginal"
        self.ema_.swap()
        try:
            labels = batch_sample_table(
                self.model_.marginal_fn(), self.space_, n, cfg, seed, field_mode=field_mode
            )
        finally:
            self.ema_.swap()
        return labels

    def predict_marginals(self, X, t) -> np.ndarray:
        """Endpoint marginals (EMA weights) for flat states at time(s) t."""
        self._check_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (X.shape[0],))
        self.ema_.swap()
        try:
            out = self.model_.forward(X, t).data
        finally:
            self.ema_.swap()
        return out


class CatFlowGraphGenerator(BaseEstimator, _SampledMixin):
    """Generative model over labeled graphs (graph transformer)."""

    def __init__(
        self,
        objective: str = "catflow",
        n_layers: int = 4,
        hidden_node: int = 64,
        hidden_edge: int = 32,
        hidden_global: int = 64,
        n_heads: int = 4,
        time_embedding_dim: int = 32,
        lr: float = 2e-4,
        weight_decay: float = 1e-12,
        ema_decay: float = 0.999,
        batch_size: int = 8,
        n_steps: int = 100_000,
        integrator_steps: int = 200,
        scheme: str = "euler",
        eps_denom: float = 1e-5,
        g_const: float = 0.0,
        seed: int = 0,
    ):
        self.objective = objective
        self.n_layers = n_layers
        self.hidden_node = hidden_node
        self.hidden_edge = hidden_edge
        self.hidden_global = hidden_global
        self.n_heads = n_heads
        self.time_embedding_dim = time_embedding_dim
        self.lr = lr
        self.weight_decay = weight_decay
        self.ema_decay = ema_decay
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.integrator_steps = integrator_steps
        self.scheme = scheme
        self.eps_denom = eps_denom
        self.g_const = g_const
        self.seed = seed

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            n_layers=self.n_layers,
            hidden_node=self.hidden_node,
            hidden_edge=self.hidden_edge,
            hidden_global=self.hidden_global,
            n_heads=self.n_heads,
            time_embedding_dim=self.time_embedding_dim,
        )

    def fit(self, graphs: list[Graph], y=None):
        graphs = check_graph_list(graphs)
        model = GraphMarginalModel(
            self._model_config(),
            k_node=graphs[0].k_node,
            k_edge_classes=graphs[0].k_edge_classes,
            objective=self.objective,
            seed=self.seed,
        )
        settings = TrainSettings(
            objective=self.objective,
            total_steps=self.n_steps,
            batch_size=self.batch_size,
            lr=self.lr,
            weight_decay=self.weight_decay,
            ema_decay=self.ema_decay,
            seed=self.seed,
        )
        out = run_training(
            model,
            lambda rng: graph_batch_loss(model, graphs, rng, settings.batch_size),
            settings,
        )
        sizes: dict[int, int] = {}
        for g in graphs:
            sizes[g.n_nodes] = sizes.get(g.n_nodes, 0) + 1
        self.model_ = out.model
        self.ema_ = out.ema
        self.size_histogram_ = sizes
        self.loss_history_ = [row["loss"] for row in out.history]
        return self

    def sample(self, n: int, seed: int | None = None, g: float | None = None) -> list[Graph]:
        self._check_fitted()
        seed = check_seed(seed, self.seed)
        cfg = self._integrator(g=g)
        self.ema_.swap()
        try:
            graphs = batch_sample_graphs(self.model_, n, self.size_histogram_, cfg, seed)
        finally:
            self.ema_.swap()
        return graphs
