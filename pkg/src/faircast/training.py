"""Alternating adversarial training, model selection, and checkpoints.

Each iteration minimizes the composed forecaster objective over the
forecaster parameters with the discriminator frozen, periodically
refreshes the cluster indicator by truncated SVD of the latest projected
state, then (when the adversary is enabled) updates the discriminator
alone on the same batch with the forecaster outputs detached.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .adversary import adversarial_loss, orthogonality_loss
from .autodiff import Parameter, Tensor, zero_grads
from .config import TrainConfig
from .data import MinMaxNormalizer, WindowBatch
from .grouping import clustering_loss, update_indicator
from .model import ForecastModel, ForwardOutputs
from .predictor import forecasting_loss

__all__ = [
    "LossBundle",
    "Adam",
    "TrainingState",
    "TrainingDiverged",
    "CheckpointError",
    "init_training_state",
    "generator_step",
    "discriminator_step",
    "fit",
    "validation_mae",
    "save_checkpoint",
    "load_checkpoint",
    "apply_best",
]

CHECKPOINT_MAGIC = b"FCSTCKPT"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


@dataclass
class LossBundle:
    l_forecast: float
    l_cluster: float
    l_ortho: float
    l_adv: float
    total_generator: float


class Adam:
    """Adaptive moment estimation over an ordered set of named parameters."""

    def __init__(self, params: dict[str, Parameter], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.names = sorted(params)
        self.params = [params[n] for n in self.names]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            p.data = p.data - self.lr * (self.m[i] / bc1) / (np.sqrt(self.v[i] / bc2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {"t": np.array([self.t], dtype=np.int64)}
        for name, m, v in zip(self.names, self.m, self.v):
            out[f"m.{name}"] = m
            out[f"v.{name}"] = v
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.t = int(arrays["t"][0])
        for i, name in enumerate(self.names):
            self.m[i] = np.array(arrays[f"m.{name}"], dtype=np.float64)
            self.v[i] = np.array(arrays[f"v.{name}"], dtype=np.float64)


@dataclass
class TrainingState:
    model: ForecastModel
    cfg: TrainConfig
    gen_opt: Adam
    disc_opt: Adam | None
    iteration: int = 0  # completed generator steps, 1-based after the first
    epoch: int = 0  # completed epochs
    iter_in_epoch: int = 0  # completed batches within the current epoch
    last_projected_ref: np.ndarray | None = None
    best_val_mae: float = float("inf")
    best_arrays: dict[str, np.ndarray] | None = None
    history: list[dict] = field(default_factory=list)
    val_history: list[tuple[int, float]] = field(default_factory=list)
    normalizer: MinMaxNormalizer | None = None

    @property
    def n_variables(self) -> int:
        return self.model.n_variables

    def snapshot_arrays(self) -> dict[str, np.ndarray]:
        arrays = {name: p.data.copy() for name, p in self.model.named_parameters().items()}
        for name, buf in self.model.named_buffers().items():
            arrays[name] = buf.copy()
        if self.model.indicator is not None:
            arrays["indicator"] = self.model.indicator.matrix.copy()
        return arrays


def init_training_state(n_variables: int, cfg: TrainConfig) -> TrainingState:
    cfg.validate()
    model = ForecastModel(n_variables, cfg)
    gen_opt = Adam(model.named_generator_parameters(), cfg.lr_generator)
    disc_params = model.named_discriminator_parameters()
    disc_opt = Adam(disc_params, cfg.lr_discriminator) if disc_params else None
    return TrainingState(model=model, cfg=cfg, gen_opt=gen_opt, disc_opt=disc_opt)


def _require_finite(bundle: LossBundle) -> None:
    for name in ("l_forecast", "l_cluster", "l_ortho", "l_adv", "total_generator"):
        if not np.isfinite(getattr(bundle, name)):
            raise TrainingDiverged(f"non-finite loss component: {name}")


def _generator_losses(
    model: ForecastModel, out: ForwardOutputs, targets: np.ndarray, cfg: TrainConfig
) -> tuple[Tensor, LossBundle]:
    l_forecast = forecasting_loss(targets, out.prediction)
    l_cluster = (
        clustering_loss(out.projected, model.indicator)
        if model.indicator is not None
        else Tensor(0.0)
    )
    l_ortho = orthogonality_loss(out.hidden, out.fused)
    l_adv = (
        adversarial_loss(out.fused, out.assignments, model.discriminator)
        if model.discriminator is not None
        else Tensor(0.0)
    )
    total = l_forecast
    if cfg.use_clustering_loss:
        total = total + l_cluster
    if cfg.use_orthogonality_loss:
        total = total + l_ortho
    if cfg.use_adversary:
        adv_sign = 1.0 if cfg.shared_adversary_objective else -1.0
        total = total + adv_sign * cfg.lambda_adv * l_adv
    bundle = LossBundle(
        l_forecast=l_forecast.item(),
        l_cluster=l_cluster.item(),
        l_ortho=l_ortho.item(),
        l_adv=l_adv.item(),
        total_generator=total.item(),
    )
    return total, bundle


def _clip_gradients(params: list[Parameter], max_norm: float) -> None:
    total_sq = 0.0
    for p in params:
        if p.grad is not None:
            total_sq += float((p.grad * p.grad).sum())
    norm = np.sqrt(total_sq)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale


def generator_step(batch: WindowBatch, state: TrainingState, cfg: TrainConfig) -> LossBundle:
    """One forecaster update with the discriminator held fixed."""
    model = state.model
    gen_params = model.named_generator_parameters()
    zero_grads(model.named_parameters().values())
    out = model.forward(batch.inputs, training=True, update_running=True)
    total, bundle = _generator_losses(model, out, batch.targets, cfg)
    _require_finite(bundle)
    total.backward()
    params = list(gen_params.values())
    if cfg.grad_clip is not None:
        _clip_gradients(params, cfg.grad_clip)
    state.gen_opt.step()
    state.last_projected_ref = out.projected.data.mean(axis=0)
    return bundle


def discriminator_step(batch: WindowBatch, state: TrainingState, cfg: TrainConfig) -> float:
    """One discriminator update on detached forecaster outputs."""
    model = state.model
    if model.discriminator is None or state.disc_opt is None:
        raise RuntimeError("discriminator step requested without an adversary")
    zero_grads(model.named_parameters().values())
    out = model.forward(batch.inputs, training=True, update_running=False)
    l_adv = adversarial_loss(out.fused.detach(), out.assignments.detach(), model.discriminator)
    value = l_adv.item()
    if not np.isfinite(value):
        raise TrainingDiverged("non-finite loss component: l_adv")
    objective = -l_adv if cfg.shared_adversary_objective else l_adv
    objective.backward()
    if cfg.grad_clip is not None:
        _clip_gradients(list(model.named_discriminator_parameters().values()), cfg.grad_clip)
    state.disc_opt.step()
    return value


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def validation_mae(model: ForecastModel, batch: WindowBatch, batch_size: int) -> float:
    """Mean absolute error on normalized scale, evaluation statistics."""
    total = 0.0
    count = 0
    for lo in range(0, batch.n_windows, batch_size):
        part = batch.subset(np.arange(lo, min(lo + batch_size, batch.n_windows)))
        out = model.forward(part.inputs, training=False)
        total += float(np.abs(part.targets - out.prediction.data).sum())
        count += part.targets.size
    return total / count


def fit(
    train: WindowBatch,
    val: WindowBatch | None,
    cfg: TrainConfig,
    state: TrainingState | None = None,
) -> tuple[TrainingState, list[dict]]:
    """Run the alternating optimization for ``cfg.epochs`` epochs.

    Keeps a snapshot of the parameters with the best validation MAE.
    Resuming from a loaded state continues mid-epoch where it left off.
    """
    cfg.validate()
    if train is None or train.n_windows == 0:
        raise ValueError("training data is empty")
    if state is None:
        state = init_training_state(train.n_variables, cfg)
    if state.model.indicator is None:
        raise ValueError(
            f"cannot train with n_clusters={cfg.n_clusters} > {train.n_variables} variables"
        )
    n = train.n_windows
    n_batches = -(-n // cfg.batch_size)
    for epoch in range(state.epoch, cfg.epochs):
        order = _epoch_order(cfg.seed, epoch, n)
        for b_idx in range(state.iter_in_epoch, n_batches):
            idx = order[b_idx * cfg.batch_size : (b_idx + 1) * cfg.batch_size]
            batch = train.subset(idx)
            bundle = generator_step(batch, state, cfg)
            state.iteration += 1
            if state.iteration % cfg.indicator_update_every == 0:
                state.model.indicator = update_indicator(
                    state.last_projected_ref, cfg.n_clusters
                )
            if cfg.use_adversary:
                discriminator_step(batch, state, cfg)
            state.history.append(
                {
                    "iteration": state.iteration,
                    "l_forecast": bundle.l_forecast,
                    "l_cluster": bundle.l_cluster,
                    "l_ortho": bundle.l_ortho,
                    "l_adv": bundle.l_adv,
                    "total": bundle.total_generator,
                }
            )
            state.iter_in_epoch = b_idx + 1
        state.iter_in_epoch = 0
        state.epoch = epoch + 1
        if val is not None and val.n_windows > 0:
            mae = validation_mae(state.model, val, cfg.batch_size)
            state.val_history.append((state.epoch, mae))
            if mae < state.best_val_mae:
                state.best_val_mae = mae
                state.best_arrays = state.snapshot_arrays()
    return state, state.history


def apply_best(state: TrainingState) -> bool:
    """Restore the best-validation snapshot into the live model, if any."""
    if state.best_arrays is None:
        return False
    model = state.model
    params = model.named_parameters()
    for name, value in state.best_arrays.items():
        if name == "indicator":
            from .grouping import ClusterIndicator

            model.indicator = ClusterIndicator(value.copy())
        elif name in params:
            params[name].data = value.copy()
        else:
            model.set_buffer(name, value.copy())
    return True


# -- checkpoint container -----------------------------------------------------
#
# Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON
# header, then the raw little-endian array bytes in the header's listed
# order.  No timestamps anywhere, so identical states serialize to
# identical bytes.


def _state_arrays(state: TrainingState) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    for name, p in state.model.named_parameters().items():
        arrays[f"param.{name}"] = p.data
    for name, buf in state.model.named_buffers().items():
        arrays[f"buffer.{name}"] = buf
    if state.model.indicator is not None:
        arrays["indicator"] = state.model.indicator.matrix
    for key, arr in state.gen_opt.state_arrays().items():
        arrays[f"adam_gen.{key}"] = arr
    if state.disc_opt is not None:
        for key, arr in state.disc_opt.state_arrays().items():
            arrays[f"adam_disc.{key}"] = arr
    if state.best_arrays is not None:
        for name, arr in state.best_arrays.items():
            arrays[f"best.{name}"] = arr
    if state.history:
        arrays["history.iteration"] = np.array([h["iteration"] for h in state.history], dtype=np.int64)
        for key in ("l_forecast", "l_cluster", "l_ortho", "l_adv", "total"):
            arrays[f"history.{key}"] = np.array([h[key] for h in state.history], dtype=np.float64)
    if state.val_history:
        arrays["val_history.epoch"] = np.array([e for e, _ in state.val_history], dtype=np.int64)
        arrays["val_history.mae"] = np.array([m for _, m in state.val_history], dtype=np.float64)
    if state.normalizer is not None:
        norm_state = state.normalizer.state()
        arrays["normalizer.min"] = norm_state["min"]
        arrays["normalizer.max"] = norm_state["max"]
    return arrays


def save_checkpoint(state: TrainingState, path) -> None:
    arrays = _state_arrays(state)
    names = sorted(arrays)
    manifest = []
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name])
        dtype = "<i8" if arr.dtype.kind == "i" else "<f8"
        arr = arr.astype(dtype)
        manifest.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": state.cfg.to_dict(),
        "n_variables": state.n_variables,
        "counters": {
            "iteration": state.iteration,
            "epoch": state.epoch,
            "iter_in_epoch": state.iter_in_epoch,
            "best_val_mae": None if state.best_arrays is None else state.best_val_mae,
        },
        "arrays": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> TrainingState:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    offset = len(CHECKPOINT_MAGIC)
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    offset += header_len
    version = header.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint format version {version} not supported (expected {CHECKPOINT_VERSION})"
        )
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated array data for {entry['name']}")
        arr = np.frombuffer(raw[offset : offset + nbytes], dtype=entry["dtype"]).reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")

    cfg = TrainConfig.from_dict(header["config"])
    state = init_training_state(int(header["n_variables"]), cfg)
    model = state.model
    params = model.named_parameters()
    for name, p in params.items():
        p.data = np.array(arrays[f"param.{name}"], dtype=np.float64)
    for name in model.named_buffers():
        model.set_buffer(name, np.array(arrays[f"buffer.{name}"], dtype=np.float64))
    if "indicator" in arrays:
        from .grouping import ClusterIndicator

        model.indicator = ClusterIndicator(arrays["indicator"])
    state.gen_opt.load_state_arrays(
        {k[len("adam_gen.") :]: v for k, v in arrays.items() if k.startswith("adam_gen.")}
    )
    if state.disc_opt is not None:
        state.disc_opt.load_state_arrays(
            {k[len("adam_disc.") :]: v for k, v in arrays.items() if k.startswith("adam_disc.")}
        )
    counters = header["counters"]
    state.iteration = int(counters["iteration"])
    state.epoch = int(counters["epoch"])
    state.iter_in_epoch = int(counters["iter_in_epoch"])
    best = {k[len("best.") :]: v for k, v in arrays.items() if k.startswith("best.")}
    if best:
        state.best_arrays = best
        state.best_val_mae = float(counters["best_val_mae"])
    if "history.iteration" in arrays:
        iters = arrays["history.iteration"]
        state.history = [
            {
                "iteration": int(iters[i]),
                "l_forecast": float(arrays["history.l_forecast"][i]),
                "l_cluster": float(arrays["history.l_cluster"][i]),
                "l_ortho": float(arrays["history.l_ortho"][i]),
                "l_adv": float(arrays["history.l_adv"][i]),
                "total": float(arrays["history.total"][i]),
            }
            for i in range(len(iters))
        ]
    if "val_history.epoch" in arrays:
        state.val_history = [
            (int(e), float(m))
            for e, m in zip(arrays["val_history.epoch"], arrays["val_history.mae"])
        ]
    if "normalizer.min" in arrays:
        state.normalizer = MinMaxNormalizer.from_state(
            {"min": arrays["normalizer.min"], "max": arrays["normalizer.max"]}
        )
    return state
