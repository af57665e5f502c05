"""Small trainable building blocks shared by the heads and filters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tensor, leaky_relu, sqrt

__all__ = ["Affine", "BatchNorm", "apply_leaky_stack", "LEAKY_SLOPE"]

# Negative slope used wherever a LeakyReLU is called for without one.
LEAKY_SLOPE = 0.01


@dataclass
class Affine:
    """A per-variable affine map ``x @ weight + bias``."""

    weight: Parameter
    bias: Parameter

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "Affine":
        bound = 1.0 / np.sqrt(in_dim)
        w = rng.uniform(-bound, bound, size=(in_dim, out_dim))
        return cls(Parameter(w), Parameter(np.zeros(out_dim)))

    @classmethod
    def identity(cls, dim: int) -> "Affine":
        return cls(Parameter(np.eye(dim)), Parameter(np.zeros(dim)))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]


def apply_leaky_stack(layers: list[Affine], x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    """Affine stack with LeakyReLU between layers; the last layer stays linear."""
    out = x
    for i, layer in enumerate(layers):
        out = layer(out)
        if i + 1 < len(layers):
            out = leaky_relu(out, slope)
    return out


@dataclass
class BatchNorm:
    """Per-feature normalization over all leading axes.

    Training mode normalizes with the current batch statistics (optionally
    folding them into the running estimates); evaluation mode uses the
    running estimates only.
    """

    gamma: Parameter
    beta: Parameter
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def init(cls, dim: int) -> "BatchNorm":
        return cls(
            gamma=Parameter(np.ones(dim)),
            beta=Parameter(np.zeros(dim)),
            running_mean=np.zeros(dim),
            running_var=np.ones(dim),
        )

    def __call__(self, x: Tensor, training: bool, update_running: bool = True) -> Tensor:
        axes = tuple(range(x.ndim - 1))
        if training:
            mean = x.mean(axis=axes, keepdims=True)
            var = ((x - mean) ** 2).mean(axis=axes, keepdims=True)
            if update_running:
                m = self.momentum
                self.running_mean = (1.0 - m) * self.running_mean + m * mean.data.reshape(-1)
                self.running_var = (1.0 - m) * self.running_var + m * var.data.reshape(-1)
            normed = (x - mean) / sqrt(var + self.eps)
        else:
            normed = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
        return normed * self.gamma + self.beta

    def parameters(self) -> list[Parameter]:
        return [self.gamma, self.beta]

    def buffers(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def load_buffers(self, state: dict[str, np.ndarray]) -> None:
        self.running_mean = np.asarray(state["running_mean"], dtype=np.float64).copy()
        self.running_var = np.asarray(state["running_var"], dtype=np.float64).copy()
