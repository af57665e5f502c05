"""Accuracy and fairness metrics on held-out forecasts.

The fairness score is the population variance of per-variable mean
absolute errors: equal treatment of variables drives it to zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .data import MinMaxNormalizer, WindowBatch

__all__ = [
    "MetricsReport",
    "per_variable_abs_error",
    "aggregate",
    "evaluate_model",
    "collect_predictions",
    "write_report",
    "write_per_variable_csv",
]


@dataclass
class MetricsReport:
    mae: float
    rmse: float
    mape: float
    var_fairness: float
    per_variable_mae: np.ndarray
    scale: str = "original"
    n_windows: int = 0
    mape_undefined: bool = False  # set when no target entry is nonzero

    def lines(self) -> list[str]:
        out = [
            f"scale = {self.scale}",
            f"n_windows = {self.n_windows}",
            f"mae = {self.mae:.10g}",
            f"rmse = {self.rmse:.10g}",
            f"mape = {self.mape:.10g}",
            f"var = {self.var_fairness:.10g}",
        ]
        if self.mape_undefined:
            out.append("mape_undefined = true  # all target entries are zero")
        return out


def _stacked(y: np.ndarray, y_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: targets {y.shape} vs predictions {y_hat.shape}")
    if y.size == 0:
        raise ValueError("empty input")
    n = y.shape[-1]
    return y.reshape(-1, n), y_hat.reshape(-1, n)


def per_variable_abs_error(y: np.ndarray, y_hat: np.ndarray) -> np.ndarray:
    """Mean absolute error per variable, pooled over windows and horizons."""
    yf, pf = _stacked(y, y_hat)
    return np.abs(yf - pf).mean(axis=0)


def aggregate(y: np.ndarray, y_hat: np.ndarray, scale: str = "original", n_windows: int = 0) -> MetricsReport:
    yf, pf = _stacked(y, y_hat)
    per_var = np.abs(yf - pf).mean(axis=0)
    mae = float(per_var.mean())
    rmse = float(np.sqrt(((yf - pf) ** 2).mean()))
    valid = np.abs(yf) > 0
    if valid.any():
        mape = float((np.abs(yf - pf)[valid] / np.abs(yf)[valid]).mean())
        undefined = False
    else:
        mape = 0.0
        undefined = True
    var_fairness = float(((per_var - per_var.mean()) ** 2).mean())
    return MetricsReport(
        mae=mae,
        rmse=rmse,
        mape=mape,
        var_fairness=var_fairness,
        per_variable_mae=per_var,
        scale=scale,
        n_windows=n_windows,
        mape_undefined=undefined,
    )


def collect_predictions(model, batch: WindowBatch, batch_size: int) -> np.ndarray:
    """Deterministic forward pass over all windows; returns ``(B, h, N)``."""
    chunks = []
    for lo in range(0, batch.n_windows, batch_size):
        part = batch.subset(np.arange(lo, min(lo + batch_size, batch.n_windows)))
        chunks.append(model.forward(part.inputs, training=False).prediction.data)
    return np.concatenate(chunks, axis=0)


def evaluate_model(
    state, test: WindowBatch, normalizer: MinMaxNormalizer | None, cfg: TrainConfig
) -> MetricsReport:
    """Forecast every test window and aggregate on the configured scale."""
    preds = collect_predictions(state.model, test, cfg.batch_size)
    targets = test.targets
    if cfg.metric_scale == "original":
        if normalizer is None:
            raise ValueError("original-scale metrics need the fitted normalizer")
        preds = normalizer.invert(preds)
        targets = normalizer.invert(targets)
    return aggregate(targets, preds, scale=cfg.metric_scale, n_windows=test.n_windows)


def write_report(report: MetricsReport, path) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(report.lines()) + "\n")


def write_per_variable_csv(report: MetricsReport, path, names: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "name", "mae"])
        for i, value in enumerate(report.per_variable_mae):
            label = names[i] if names else f"var_{i}"
            writer.writerow([i, label, repr(float(value))])
