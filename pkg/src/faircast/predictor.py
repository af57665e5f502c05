"""Forecast head: combine representations and emit all horizons at once.

The (1, o)-kernel convolution over per-variable features is a shared
affine map from the o hidden features to the h horizon values, applied
independently to every variable in a single forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tensor, as_tensor

__all__ = ["PredictorParams", "init_predictor", "combine", "predict", "forecasting_loss"]


@dataclass
class PredictorParams:
    kernel: Parameter  # (hidden_dim, horizon)
    bias: Parameter  # (horizon,)

    def parameters(self) -> list[Parameter]:
        return [self.kernel, self.bias]


def init_predictor(hidden_dim: int, horizon: int, rng: np.random.Generator) -> PredictorParams:
    if hidden_dim < 1 or horizon < 1:
        raise ValueError("hidden_dim and horizon must be positive")
    bound = 1.0 / np.sqrt(hidden_dim)
    kernel = rng.uniform(-bound, bound, size=(hidden_dim, horizon))
    return PredictorParams(Parameter(kernel), Parameter(np.zeros(horizon)))


def combine(hidden: Tensor, fused: Tensor) -> Tensor:
    """Element-wise sum of the group-relevant and group-free representations."""
    hidden = as_tensor(hidden)
    fused = as_tensor(fused)
    if hidden.shape != fused.shape:
        raise ValueError(f"shape mismatch: {hidden.shape} vs {fused.shape}")
    return hidden + fused


def predict(combined: Tensor, params: PredictorParams) -> Tensor:
    """Map ``(B, N, o)`` features to forecasts ``(B, h, N)``."""
    out = as_tensor(combined) @ params.kernel + params.bias  # (B, N, h)
    return out.transpose(0, 2, 1)


def forecasting_loss(targets: np.ndarray | Tensor, predictions: Tensor) -> Tensor:
    """Mean over samples of the per-variable squared error summed over horizons."""
    targets = as_tensor(targets)
    predictions = as_tensor(predictions)
    if targets.shape != predictions.shape:
        raise ValueError(f"shape mismatch: {targets.shape} vs {predictions.shape}")
    sq = ((targets - predictions) ** 2).sum(axis=(-2, -1))
    n_vars = targets.shape[-1]
    per_sample = sq * (1.0 / n_vars)
    return per_sample.mean() if per_sample.ndim > 0 else per_sample
