"""The assembled forecaster: graph, encoder, grouping, filters, predictor.

Parameters split into two disjoint groups: the forecaster side (node
embedding, recurrent cell, grouping heads, filter bank, predictor) and
the discriminator side (the two mappers).  The alternating training
scheme relies on that separation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adversary import (
    Discriminator,
    FilterBank,
    filter_apply,
    fuse,
    init_discriminator,
    init_filter_bank,
)
from .autodiff import Parameter, Tensor
from .config import TrainConfig
from .encoder import RgcuParams, encode, init_rgcu
from .graph import GraphState, default_top_n, init_node_embedding
from .grouping import (
    ClusterIndicator,
    GroupingHeads,
    cluster_assign,
    init_grouping_heads,
    init_indicator,
    project,
)
from .predictor import PredictorParams, combine, init_predictor, predict

__all__ = ["ForwardOutputs", "ForecastModel"]


@dataclass
class ForwardOutputs:
    """All intermediate representations of one forward pass."""

    hidden: Tensor
    projected: Tensor
    assignments: Tensor
    filtered: list[Tensor]
    fused: Tensor
    combined: Tensor
    prediction: Tensor


class ForecastModel:
    def __init__(self, n_variables: int, cfg: TrainConfig):
        cfg.validate()
        if n_variables < 1:
            raise ValueError("need at least one variable")
        self.cfg = cfg
        self.n_variables = n_variables
        rng = np.random.default_rng(cfg.seed)

        top_n = cfg.top_n if cfg.top_n is not None else default_top_n(n_variables)
        self.graph: GraphState = init_node_embedding(
            n_variables, cfg.embed_dim, top_n=top_n, rng=rng
        )
        self.rgcu: RgcuParams = init_rgcu(cfg.hidden_dim, rng)
        self.grouping: GroupingHeads = init_grouping_heads(cfg.hidden_dim, cfg.n_clusters, rng)
        self.filters: FilterBank = init_filter_bank(cfg.hidden_dim, cfg.n_clusters, rng)
        self.predictor: PredictorParams = init_predictor(cfg.hidden_dim, cfg.horizon, rng)
        self.discriminator: Discriminator | None = (
            init_discriminator(cfg.hidden_dim, cfg.n_clusters, rng) if cfg.use_adversary else None
        )
        # The indicator only exists when the relaxed clustering objective
        # is well-posed (K <= N); the forward pass never needs it.
        self.indicator: ClusterIndicator | None = (
            init_indicator(n_variables, cfg.n_clusters, rng) if cfg.n_clusters <= n_variables else None
        )

    def forward(
        self, inputs: np.ndarray, training: bool = False, update_running: bool = True
    ) -> ForwardOutputs:
        """Encode a ``(B, w, N)`` window batch into forecasts ``(B, h, N)``."""
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 3 or inputs.shape[2] != self.n_variables:
            raise ValueError(
                f"expected inputs (batch, steps, {self.n_variables}), got {inputs.shape}"
            )
        prop = self.graph.propagation_matrix()
        hidden = encode(inputs, prop, self.rgcu)
        projected = project(hidden, self.grouping)
        assignments = cluster_assign(hidden, self.grouping)
        filtered = filter_apply(hidden, self.filters, training=training, update_running=update_running)
        fused = fuse(filtered)
        combined = combine(hidden, fused)
        prediction = predict(combined, self.predictor)
        return ForwardOutputs(hidden, projected, assignments, filtered, fused, combined, prediction)

    # -- parameter bookkeeping ----------------------------------------------

    def named_generator_parameters(self) -> dict[str, Parameter]:
        params: dict[str, Parameter] = {"embedding": self.graph.node_embedding}
        for name in ("w_reset", "w_update", "w_cand", "b_reset", "b_update", "b_cand"):
            params[f"rgcu.{name}"] = getattr(self.rgcu, name)
        params["grouping.proj.weight"] = self.grouping.proj.weight
        params["grouping.proj.bias"] = self.grouping.proj.bias
        for i, layer in enumerate(self.grouping.cluster_layers):
            params[f"grouping.cluster.{i}.weight"] = layer.weight
            params[f"grouping.cluster.{i}.bias"] = layer.bias
        for k, filt in enumerate(self.filters.filters):
            for i, layer in enumerate(filt.layers):
                params[f"filters.{k}.layers.{i}.weight"] = layer.weight
                params[f"filters.{k}.layers.{i}.bias"] = layer.bias
            params[f"filters.{k}.bn.gamma"] = filt.norm.gamma
            params[f"filters.{k}.bn.beta"] = filt.norm.beta
        params["predictor.kernel"] = self.predictor.kernel
        params["predictor.bias"] = self.predictor.bias
        return params

    def named_discriminator_parameters(self) -> dict[str, Parameter]:
        if self.discriminator is None:
            return {}
        params: dict[str, Parameter] = {}
        for i, layer in enumerate(self.discriminator.mapper_hidden):
            params[f"disc.hidden.{i}.weight"] = layer.weight
            params[f"disc.hidden.{i}.bias"] = layer.bias
        for i, layer in enumerate(self.discriminator.mapper_assign):
            params[f"disc.assign.{i}.weight"] = layer.weight
            params[f"disc.assign.{i}.bias"] = layer.bias
        return params

    def named_parameters(self) -> dict[str, Parameter]:
        return {**self.named_generator_parameters(), **self.named_discriminator_parameters()}

    def named_buffers(self) -> dict[str, np.ndarray]:
        buffers: dict[str, np.ndarray] = {}
        for k, filt in enumerate(self.filters.filters):
            buffers[f"filters.{k}.bn.running_mean"] = filt.norm.running_mean
            buffers[f"filters.{k}.bn.running_var"] = filt.norm.running_var
        return buffers

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        parts = name.split(".")
        filt = self.filters.filters[int(parts[1])]
        filt.norm.load_buffers(
            {
                "running_mean": value if parts[3] == "running_mean" else filt.norm.running_mean,
                "running_var": value if parts[3] == "running_var" else filt.norm.running_var,
            }
        )

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.named_parameters().values())
