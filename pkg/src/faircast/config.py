"""Run configuration with published defaults."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

__all__ = ["TrainConfig", "DEFAULTS"]


@dataclass
class TrainConfig:
    """Everything a training run depends on besides the data itself.

    Defaults are the reference settings: window/horizon 12, hidden width
    64, embedding width 10, 6 clusters, adversary weight 0.1, batch 64,
    50 epochs, generator/discriminator learning rates 3e-3 and 5e-2.
    """

    window: int = 12
    horizon: int = 12
    hidden_dim: int = 64
    embed_dim: int = 10
    n_clusters: int = 6
    top_n: int | None = None  # resolved per variable count when None
    lambda_adv: float = 0.1
    lr_generator: float = 3e-3
    lr_discriminator: float = 5e-2
    batch_size: int = 64
    epochs: int = 50
    seed: int = 1
    indicator_update_every: int = 3  # generator iterations between indicator refreshes
    use_adversary: bool = True
    use_clustering_loss: bool = True
    use_orthogonality_loss: bool = True
    metric_scale: str = "original"
    grad_clip: float | None = 5.0
    # Alternate reading of the min-max objective: the forecaster also
    # minimizes the adversary's matching error while the discriminator
    # ascends.  Off by default.
    shared_adversary_objective: bool = False

    def validate(self) -> None:
        for name in ("window", "horizon", "hidden_dim", "embed_dim", "n_clusters", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.lambda_adv < 0:
            raise ValueError("lambda_adv must be non-negative")
        if self.lr_generator <= 0 or self.lr_discriminator <= 0:
            raise ValueError("learning rates must be positive")
        if self.indicator_update_every < 1:
            raise ValueError("indicator_update_every must be positive")
        if self.top_n is not None and self.top_n < 1:
            raise ValueError("top_n must be positive when given")
        if self.metric_scale not in ("original", "normalized"):
            raise ValueError(f"metric_scale must be 'original' or 'normalized', got {self.metric_scale!r}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive when given")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


DEFAULTS = TrainConfig()
