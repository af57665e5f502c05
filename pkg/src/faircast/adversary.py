"""Group-information filtering, fusion, and the adversarial machinery.

Each of the K filters is a stack of three affine layers followed by one
batch-normalization stage; their outputs are averaged into the fused
(group-free) representation.  The discriminator maps that representation
and the soft assignments into a shared space and scores their mean
squared row distance.  A cosine penalty pushes the fused representation
to be orthogonal to the raw hidden state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tensor, absolute, as_tensor, sqrt
from .layers import Affine, BatchNorm, apply_leaky_stack

__all__ = [
    "FilterFunction",
    "FilterBank",
    "Discriminator",
    "init_filter_bank",
    "init_discriminator",
    "filter_apply",
    "fuse",
    "adversarial_loss",
    "orthogonality_loss",
]

# Effective epsilon on the product of row norms in the cosine penalty;
# zero rows then contribute exactly 0 instead of 0/0.
_COSINE_EPS_SQ = 1e-24


@dataclass
class FilterFunction:
    layers: list[Affine]
    norm: BatchNorm

    def __call__(self, x: Tensor, training: bool, update_running: bool = True) -> Tensor:
        out = x
        for layer in self.layers:
            out = layer(out)
        return self.norm(out, training=training, update_running=update_running)

    def parameters(self) -> list[Parameter]:
        params = []
        for layer in self.layers:
            params.extend(layer.parameters())
        params.extend(self.norm.parameters())
        return params


@dataclass
class FilterBank:
    filters: list[FilterFunction]

    @property
    def n_filters(self) -> int:
        return len(self.filters)

    def parameters(self) -> list[Parameter]:
        return [p for f in self.filters for p in f.parameters()]


@dataclass
class Discriminator:
    """Two three-layer mappers into a shared comparison space."""

    mapper_hidden: list[Affine]
    mapper_assign: list[Affine]

    def map_hidden(self, fused: Tensor) -> Tensor:
        return apply_leaky_stack(self.mapper_hidden, fused)

    def map_assign(self, assignments: Tensor) -> Tensor:
        return apply_leaky_stack(self.mapper_assign, assignments)

    def parameters(self) -> list[Parameter]:
        params = []
        for layer in self.mapper_hidden + self.mapper_assign:
            params.extend(layer.parameters())
        return params


def init_filter_bank(hidden_dim: int, n_filters: int, rng: np.random.Generator) -> FilterBank:
    """One filter per group; filter count is tied to the cluster count."""
    if n_filters < 1:
        raise ValueError("need at least one filter")
    filters = []
    for _ in range(n_filters):
        layers = [Affine.init(hidden_dim, hidden_dim, rng) for _ in range(3)]
        filters.append(FilterFunction(layers, BatchNorm.init(hidden_dim)))
    return FilterBank(filters)


def init_discriminator(hidden_dim: int, n_clusters: int, rng: np.random.Generator) -> Discriminator:
    mapper_hidden = [Affine.init(hidden_dim, hidden_dim, rng) for _ in range(3)]
    mapper_assign = [
        Affine.init(n_clusters, hidden_dim, rng),
        Affine.init(hidden_dim, hidden_dim, rng),
        Affine.init(hidden_dim, hidden_dim, rng),
    ]
    return Discriminator(mapper_hidden, mapper_assign)


def filter_apply(
    hidden: Tensor, bank: FilterBank, training: bool = False, update_running: bool = True
) -> list[Tensor]:
    """Every filter sees the full hidden state; shapes are preserved."""
    hidden = as_tensor(hidden)
    return [f(hidden, training=training, update_running=update_running) for f in bank.filters]


def fuse(filtered: list[Tensor]) -> Tensor:
    """Element-wise mean of the filtered representations."""
    if not filtered:
        raise ValueError("nothing to fuse")
    shapes = {t.shape for t in filtered}
    if len(shapes) != 1:
        raise ValueError(f"heterogeneous shapes in fusion: {sorted(shapes)}")
    total = filtered[0]
    for t in filtered[1:]:
        total = total + t
    return total * (1.0 / len(filtered))


def adversarial_loss(fused: Tensor, assignments: Tensor, disc: Discriminator) -> Tensor:
    """Mean over samples of the per-variable squared distance in mapped space."""
    mapped_h = disc.map_hidden(as_tensor(fused))
    mapped_c = disc.map_assign(as_tensor(assignments))
    sq = ((mapped_h - mapped_c) ** 2).sum(axis=(-2, -1))
    n_vars = fused.shape[-2]
    per_sample = sq * (1.0 / n_vars)
    return per_sample.mean() if per_sample.ndim > 0 else per_sample


def orthogonality_loss(hidden: Tensor, fused: Tensor) -> Tensor:
    """Mean absolute cosine between corresponding variable rows; in [0, 1]."""
    hidden = as_tensor(hidden)
    fused = as_tensor(fused)
    dot = (hidden * fused).sum(axis=-1)
    norm_sq = (hidden ** 2).sum(axis=-1) * (fused ** 2).sum(axis=-1)
    cos = absolute(dot) / sqrt(norm_sq + _COSINE_EPS_SQ)
    per_sample = cos.mean(axis=-1)
    return per_sample.mean() if per_sample.ndim > 0 else per_sample
