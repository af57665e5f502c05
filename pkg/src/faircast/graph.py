"""Learnable variable graph: node embeddings and the derived adjacency.

The dense adjacency is the row-wise softmax of the rectified embedding
Gram matrix; sparsification keeps each row's ``top_n`` largest weights at
their original values and zeroes the rest (no renormalization).  The
top-n mask is a non-differentiable selection: gradients flow only
through retained entries.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Parameter, Tensor, as_tensor, relu, softmax

__all__ = [
    "GraphState",
    "default_top_n",
    "init_node_embedding",
    "build_adjacency",
    "sparsify_topn",
    "with_self_loop",
    "dump_adjacency",
]


def default_top_n(n_variables: int) -> int:
    """Keep every neighbor on small graphs, a conservative slice on large ones."""
    if n_variables <= 32:
        return n_variables
    return max(10, -(-n_variables // 20))


@dataclass
class GraphState:
    """Trainable node embedding plus the adjacency derived from it."""

    node_embedding: Parameter
    top_n: int
    cached_adjacency: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_variables(self) -> int:
        return self.node_embedding.shape[0]

    def adjacency(self) -> Tensor:
        """Sparsified row-stochastic adjacency, recomputed from the embedding."""
        adj = sparsify_topn(build_adjacency(self.node_embedding), self.top_n)
        self.cached_adjacency = adj.data.copy()
        return adj

    def propagation_matrix(self) -> Tensor:
        """Adjacency with an explicit self-loop, as consumed by the encoder."""
        return with_self_loop(self.adjacency())


def init_node_embedding(
    n_variables: int,
    embed_dim: int,
    seed: int | None = None,
    top_n: int | None = None,
    rng: np.random.Generator | None = None,
) -> GraphState:
    """Gaussian embedding with scale ``1/sqrt(embed_dim)``, deterministic per seed."""
    if n_variables < 1 or embed_dim < 1:
        raise ValueError("n_variables and embed_dim must be positive")
    if rng is None:
        if seed is None:
            raise ValueError("provide a seed or a generator")
        rng = np.random.default_rng(seed)
    emb = rng.normal(0.0, 1.0 / np.sqrt(embed_dim), size=(n_variables, embed_dim))
    resolved = default_top_n(n_variables) if top_n is None else top_n
    if not 1 <= resolved <= n_variables:
        raise ValueError(f"top_n={resolved} out of range for {n_variables} variables")
    return GraphState(Parameter(emb), resolved)


def build_adjacency(embedding: Tensor | np.ndarray) -> Tensor:
    """Row-wise softmax of ``max(E @ E.T, 0)``; every row sums to 1."""
    e = as_tensor(embedding)
    gram = e @ e.transpose(1, 0)
    return softmax(relu(gram), axis=-1)


def sparsify_topn(adj: Tensor | np.ndarray, n: int) -> Tensor:
    """Keep the ``n`` largest entries per row, ties broken toward lower column index."""
    adj = as_tensor(adj)
    n_cols = adj.shape[-1]
    if not 1 <= n <= n_cols:
        raise ValueError(f"top_n={n} out of range 1..{n_cols}")
    if n == n_cols:
        return adj
    # Stable argsort on negated values keeps the lower index among equals.
    order = np.argsort(-adj.data, axis=-1, kind="stable")
    mask = np.zeros_like(adj.data)
    np.put_along_axis(mask, order[..., :n], 1.0, axis=-1)
    return adj * mask


def with_self_loop(adj: Tensor | np.ndarray) -> Tensor:
    adj = as_tensor(adj)
    return adj + np.eye(adj.shape[-1])


def dump_adjacency(state: GraphState, path) -> None:
    """Write the dense sparsified adjacency to CSV for inspection."""
    if state.cached_adjacency is None:
        state.adjacency()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in state.cached_adjacency:
            writer.writerow([repr(float(v)) for v in row])
