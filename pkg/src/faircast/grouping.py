"""Soft variable grouping and the spectral K-means relaxation.

The hidden state is projected through a single affine layer before the
clustering objective; a separate three-layer head emits soft group
assignments.  The orthonormal indicator matrix is refreshed by truncated
SVD of a reference projected state, which attains the relaxed objective's
minimum for that reference.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tensor, as_tensor, softmax
from .layers import Affine, apply_leaky_stack

__all__ = [
    "GroupingHeads",
    "ClusterIndicator",
    "init_grouping_heads",
    "init_indicator",
    "project",
    "cluster_assign",
    "clustering_loss",
    "update_indicator",
    "dump_embeddings",
]

ORTHONORMALITY_TOL = 1e-6


@dataclass
class GroupingHeads:
    """Projection layer (hidden -> hidden) and three-layer assignment head."""

    proj: Affine
    cluster_layers: list[Affine]

    def parameters(self) -> list[Parameter]:
        params = self.proj.parameters()
        for layer in self.cluster_layers:
            params.extend(layer.parameters())
        return params


def init_grouping_heads(hidden_dim: int, n_clusters: int, rng: np.random.Generator) -> GroupingHeads:
    if n_clusters < 1:
        raise ValueError("n_clusters must be positive")
    layers = [
        Affine.init(hidden_dim, hidden_dim, rng),
        Affine.init(hidden_dim, hidden_dim, rng),
        Affine.init(hidden_dim, n_clusters, rng),
    ]
    return GroupingHeads(proj=Affine.init(hidden_dim, hidden_dim, rng), cluster_layers=layers)


@dataclass
class ClusterIndicator:
    """Column-orthonormal ``N x K`` indicator for the relaxed objective."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValueError("indicator must be a matrix")
        n, k = self.matrix.shape
        if not 1 <= k <= n:
            raise ValueError(f"need 1 <= K <= N, got K={k}, N={n}")
        gram_err = np.linalg.norm(self.matrix.T @ self.matrix - np.eye(k))
        if gram_err > ORTHONORMALITY_TOL:
            raise ValueError(f"indicator columns not orthonormal (deviation {gram_err:.3e})")

    @property
    def n_clusters(self) -> int:
        return self.matrix.shape[1]


def init_indicator(n_variables: int, n_clusters: int, rng: np.random.Generator) -> ClusterIndicator:
    """Random orthonormal columns via QR of a Gaussian draw."""
    if not 1 <= n_clusters <= n_variables:
        raise ValueError(f"need 1 <= K <= N, got K={n_clusters}, N={n_variables}")
    q, _ = np.linalg.qr(rng.normal(size=(n_variables, n_clusters)))
    return ClusterIndicator(q[:, :n_clusters])


def project(hidden: Tensor, heads: GroupingHeads) -> Tensor:
    """Affine projection applied per variable; shape preserved."""
    return heads.proj(as_tensor(hidden))


def cluster_assign(hidden: Tensor, heads: GroupingHeads) -> Tensor:
    """Soft assignments ``(B, N, K)``; rows lie on the probability simplex."""
    logits = apply_leaky_stack(heads.cluster_layers, as_tensor(hidden))
    return softmax(logits, axis=-1)


def clustering_loss(projected: Tensor, indicator: ClusterIndicator) -> Tensor:
    """Relaxed K-means objective, averaged over the batch.

    Per sample ``S`` (an ``N x o`` slice): ``tr(S S^T) - tr(F^T S S^T F)``,
    which is non-negative for any column-orthonormal ``F`` and minimized
    by the top-K left singular vectors of ``S``.
    """
    projected = as_tensor(projected)
    f = indicator.matrix
    gram_err = np.linalg.norm(f.T @ f - np.eye(f.shape[1]))
    if gram_err > ORTHONORMALITY_TOL:
        raise ValueError(f"indicator columns not orthonormal (deviation {gram_err:.3e})")
    total = (projected ** 2).sum(axis=(-2, -1))
    captured = ((f.T @ projected) ** 2).sum(axis=(-2, -1))
    per_sample = total - captured
    return per_sample.mean() if per_sample.ndim > 0 else per_sample


def update_indicator(projected_ref: np.ndarray, n_clusters: int) -> ClusterIndicator:
    """Top-K left singular vectors of the reference state.

    When K exceeds the numerical rank, the full SVD's trailing left
    singular vectors already provide an orthonormal completion.
    """
    ref = np.asarray(projected_ref, dtype=np.float64)
    if ref.ndim != 2:
        raise ValueError("reference state must be a single N x o matrix")
    n = ref.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValueError(f"need 1 <= K <= N, got K={n_clusters}, N={n}")
    u, _, _ = np.linalg.svd(ref, full_matrices=True)
    return ClusterIndicator(u[:, :n_clusters])


def dump_embeddings(
    directory,
    hidden: np.ndarray,
    fused: np.ndarray,
    assignments: np.ndarray,
    prefix: str = "embeddings",
) -> list[str]:
    """Write per-variable hidden states, fused states, and hard group labels.

    Tensors are flattened over the batch axis; labels come from the
    argmax of the soft assignments.  Returns the written file paths.
    """
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, tensor in (("hidden", hidden), ("fused", fused)):
        path = directory / f"{prefix}_{name}.csv"
        flat = np.asarray(tensor, dtype=np.float64).reshape(-1, tensor.shape[-1])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in flat:
                writer.writerow([repr(float(v)) for v in row])
        written.append(str(path))
    labels = np.argmax(np.asarray(assignments), axis=-1).reshape(-1)
    path = directory / f"{prefix}_groups.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "group"])
        for i, lab in enumerate(labels):
            writer.writerow([i, int(lab)])
    written.append(str(path))
    return written
