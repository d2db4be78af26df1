"""Variational flow matching for categorical data.

The package trains categorical endpoint predictors (an MLP for flat label
spaces, a permutation-equivariant graph transformer for graphs) with the
cross-entropy objective, samples by integrating the induced simplex-seeking
field as an ODE or SDE, and verifies the underlying identities against exact
brute-force oracles over finite datasets.

Main entry points: the sklearn-style estimators ``CatFlowTableGenerator`` and
``CatFlowGraphGenerator``, and the ``catflow`` CLI.
"""

from .estimators import CatFlowGraphGenerator, CatFlowTableGenerator
from .graphs import Graph, OneHotGraph, Permutation
from .paths import FiniteDataset
from .sampling import IntegratorConfig
from .spaces import CategoricalSpace, PosteriorMarginals, StatePoint
from .tensor import Tensor

__version__ = "0.1.0"

__all__ = [
    "CatFlowGraphGenerator",
    "CatFlowTableGenerator",
    "CategoricalSpace",
    "FiniteDataset",
    "Graph",
    "IntegratorConfig",
    "OneHotGraph",
    "Permutation",
    "PosteriorMarginals",
    "StatePoint",
    "Tensor",
    "__version__",
]
