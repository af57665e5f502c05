"""Recurrent graph convolutional encoder.

A GRU cell whose affine maps are replaced by graph convolutions over the
(self-looped) learned adjacency.  Weights are shared across variables;
the cell is unrolled over the window's time steps and only the final
hidden state is returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tensor, as_tensor, concat, sigmoid, tanh

__all__ = ["RgcuParams", "init_rgcu", "graph_propagate", "rgcu_step", "encode"]


@dataclass
class RgcuParams:
    """Gate parameters; each weight maps the (input ‖ hidden) features to hidden."""

    w_reset: Parameter
    w_update: Parameter
    w_cand: Parameter
    b_reset: Parameter
    b_update: Parameter
    b_cand: Parameter
    hidden_dim: int

    def parameters(self) -> list[Parameter]:
        return [self.w_reset, self.w_update, self.w_cand, self.b_reset, self.b_update, self.b_cand]


def init_rgcu(hidden_dim: int, rng: np.random.Generator, in_dim: int = 1) -> RgcuParams:
    """Uniform ``±1/sqrt(fan_in)`` weights, zero biases."""
    if hidden_dim < 1:
        raise ValueError("hidden_dim must be positive")
    fan_in = in_dim + hidden_dim
    bound = 1.0 / np.sqrt(fan_in)

    def w() -> Parameter:
        return Parameter(rng.uniform(-bound, bound, size=(fan_in, hidden_dim)))

    def b() -> Parameter:
        return Parameter(np.zeros(hidden_dim))

    return RgcuParams(w(), w(), w(), b(), b(), b(), hidden_dim)


def graph_propagate(adj: Tensor | np.ndarray, features: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """One graph convolution: ``adj @ features @ weight + bias`` per batch element."""
    adj = as_tensor(adj)
    return adj @ features @ weight + bias


def rgcu_step(x_t: Tensor, h_prev: Tensor, adj: Tensor | np.ndarray, params: RgcuParams) -> Tensor:
    """Advance the hidden state by one time step.

    ``x_t`` is ``(B, N, 1)``, ``h_prev`` is ``(B, N, o)``; gates follow the
    GRU recurrences with graph convolutions in place of dense layers.
    """
    x_t = as_tensor(x_t)
    h_prev = as_tensor(h_prev)
    xh = concat([x_t, h_prev], axis=-1)
    r = sigmoid(graph_propagate(adj, xh, params.w_reset, params.b_reset))
    u = sigmoid(graph_propagate(adj, xh, params.w_update, params.b_update))
    xrh = concat([x_t, r * h_prev], axis=-1)
    c = tanh(graph_propagate(adj, xrh, params.w_cand, params.b_cand))
    return u * h_prev + (1.0 - u) * c


def encode(
    window_inputs: np.ndarray,
    adj: Tensor | np.ndarray,
    params: RgcuParams,
    h0: Tensor | np.ndarray | None = None,
) -> Tensor:
    """Run the cell over a ``(B, w, N)`` window; return the final ``(B, N, o)`` state."""
    window_inputs = np.asarray(window_inputs, dtype=np.float64)
    if window_inputs.ndim != 3:
        raise ValueError(f"window inputs must be (batch, steps, variables), got {window_inputs.shape}")
    b, w, n = window_inputs.shape
    if w < 1:
        raise ValueError("window must contain at least one step")
    h = as_tensor(np.zeros((b, n, params.hidden_dim))) if h0 is None else as_tensor(h0)
    for t in range(w):
        x_t = Tensor(window_inputs[:, t, :].reshape(b, n, 1))
        h = rgcu_step(x_t, h, adj, params)
    return h
