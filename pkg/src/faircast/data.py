"""Loading, splitting, normalizing, windowing, and synthesizing series data.

A series matrix is time-major: row ``t`` holds the observations of all
``N`` variables at step ``t``.  Everything in this module is pure given
its inputs, and deterministic given its seeds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SeriesMatrix",
    "WindowBatch",
    "MinMaxNormalizer",
    "load_series",
    "save_series",
    "chronological_split",
    "make_windows",
    "synth_two_group",
    "group_labels",
]


@dataclass
class SeriesMatrix:
    """A ``T x N`` matrix of observations plus optional labeling metadata."""

    values: np.ndarray
    variable_names: list[str] | None = None
    interval: str | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"series must be 2-D (time x variables), got shape {self.values.shape}")
        t, n = self.values.shape
        if t < 1 or n < 1:
            raise ValueError(f"series needs at least one step and one variable, got {t}x{n}")
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise ValueError(f"non-finite value at row {bad[0] + 1}, column {bad[1] + 1}")
        if self.variable_names is not None and len(self.variable_names) != n:
            raise ValueError(f"{len(self.variable_names)} names for {n} variables")

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_variables(self) -> int:
        return self.values.shape[1]


@dataclass
class WindowBatch:
    """Paired sliding windows: inputs ``(B, w, N)`` and targets ``(B, h, N)``.

    ``anchor_indices[b]`` is the last input step ``t`` of window ``b``
    within its source split, so inputs cover ``t-w+1..t`` and targets
    cover ``t+1..t+h``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    anchor_indices: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.ndim != 3 or self.targets.ndim != 3:
            raise ValueError("inputs and targets must be 3-D (batch, steps, variables)")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets disagree on batch size")
        if self.inputs.shape[0] < 1:
            raise ValueError("empty window batch")
        if self.inputs.shape[2] != self.targets.shape[2]:
            raise ValueError("inputs and targets disagree on variable count")
        if self.anchor_indices is None:
            w = self.inputs.shape[1]
            self.anchor_indices = np.arange(self.inputs.shape[0], dtype=np.int64) + (w - 1)
        self.anchor_indices = np.asarray(self.anchor_indices, dtype=np.int64)
        if self.anchor_indices.shape != (self.inputs.shape[0],):
            raise ValueError("anchor_indices must have one entry per window")

    @property
    def n_windows(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_variables(self) -> int:
        return self.inputs.shape[2]

    def subset(self, idx: np.ndarray) -> "WindowBatch":
        return WindowBatch(self.inputs[idx], self.targets[idx], self.anchor_indices[idx])


def load_series(path, has_header: bool = False) -> SeriesMatrix:
    """Parse a plain numeric CSV into a series matrix.

    Rows are time steps, columns are variables.  Malformed cells are
    reported with their 1-based row and column.
    """
    names: list[str] | None = None
    rows: list[list[float]] = []
    n_cols: int | None = None
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, record in enumerate(reader, start=1):
            if not record or (len(record) == 1 and record[0].strip() == ""):
                continue
            if has_header and names is None and not rows:
                names = [c.strip() for c in record]
                n_cols = len(names)
                continue
            if n_cols is None:
                n_cols = len(record)
            if len(record) != n_cols:
                raise ValueError(
                    f"{path}: row {lineno} has {len(record)} fields, expected {n_cols}"
                )
            parsed = []
            for col, cell in enumerate(record, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric value {cell!r} at row {lineno}, column {col}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return SeriesMatrix(np.array(rows, dtype=np.float64), variable_names=names)


def save_series(series: SeriesMatrix, path) -> None:
    """Write a series matrix as CSV, with a header when names are present."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if series.variable_names is not None:
            writer.writerow(series.variable_names)
        for row in series.values:
            writer.writerow([repr(float(v)) for v in row])


def chronological_split(
    series: SeriesMatrix, ratios: tuple[float, float, float]
) -> tuple[SeriesMatrix, SeriesMatrix, SeriesMatrix]:
    """Contiguous train/val/test partition with floor/floor/remainder sizes."""
    r = np.asarray(ratios, dtype=np.float64)
    if r.shape != (3,):
        raise ValueError("ratios must have exactly three entries")
    if np.any(r < 0):
        raise ValueError(f"negative split ratio in {tuple(r)}")
    if abs(float(r.sum()) - 1.0) > 1e-9:
        raise ValueError(f"split ratios {tuple(r)} sum to {float(r.sum())}, not 1")
    t = series.n_steps
    n_train = int(np.floor(t * r[0]))
    n_val = int(np.floor(t * r[1]))
    n_test = t - n_train - n_val
    cuts = (n_train, n_train + n_val)
    parts = []
    for lo, hi in ((0, cuts[0]), (cuts[0], cuts[1]), (cuts[1], t)):
        vals = series.values[lo:hi]
        if vals.shape[0] == 0:
            parts.append(None)
        else:
            parts.append(SeriesMatrix(vals, series.variable_names, series.interval))
    return tuple(parts)  # type: ignore[return-value]


class MinMaxNormalizer:
    """Per-variable min-max scaling fitted on the training split only.

    Degenerate variables (min == max) map to 0 under ``apply`` and back
    to their constant value under ``invert``.
    """

    def __init__(self) -> None:
        self.per_variable_min: np.ndarray | None = None
        self.per_variable_max: np.ndarray | None = None

    @property
    def fitted(self) -> bool:
        return self.per_variable_min is not None

    def fit(self, train: SeriesMatrix) -> "MinMaxNormalizer":
        self.per_variable_min = train.values.min(axis=0)
        self.per_variable_max = train.values.max(axis=0)
        return self

    def _check(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.fitted:
            raise RuntimeError("normalizer used before fit()")
        lo, hi = self.per_variable_min, self.per_variable_max
        span = hi - lo
        return lo, span, span > 0

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Map ``(..., N)`` observations into [0, 1] per variable."""
        lo, span, live = self._check()
        out = np.zeros_like(np.asarray(values, dtype=np.float64))
        np.divide(values - lo, span, out=out, where=live)
        return out

    def invert(self, values: np.ndarray) -> np.ndarray:
        lo, span, live = self._check()
        values = np.asarray(values, dtype=np.float64)
        return np.where(live, values * span + lo, lo)

    def apply_series(self, series: SeriesMatrix) -> SeriesMatrix:
        return SeriesMatrix(self.apply(series.values), series.variable_names, series.interval)

    def state(self) -> dict[str, np.ndarray]:
        if not self.fitted:
            raise RuntimeError("normalizer used before fit()")
        return {"min": self.per_variable_min.copy(), "max": self.per_variable_max.copy()}

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> "MinMaxNormalizer":
        norm = cls()
        norm.per_variable_min = np.asarray(state["min"], dtype=np.float64)
        norm.per_variable_max = np.asarray(state["max"], dtype=np.float64)
        return norm


def make_windows(split: SeriesMatrix, w: int, h: int) -> WindowBatch:
    """All sliding windows of a split, stride 1, in chronological order.

    Yields exactly ``T - w - h + 1`` windows; window ``b`` has inputs at
    rows ``b..b+w-1`` and targets at rows ``b+w..b+w+h-1``.
    """
    if w < 1 or h < 1:
        raise ValueError("window and horizon must be positive")
    t = split.n_steps
    if t < w + h:
        raise ValueError(
            f"split too short: {t} steps, but window={w} plus horizon={h} needs at least {w + h}"
        )
    count = t - w - h + 1
    blocks = np.lib.stride_tricks.sliding_window_view(split.values, (w + h, split.n_variables))
    blocks = blocks[:count, 0]  # (count, w+h, N)
    inputs = np.ascontiguousarray(blocks[:, :w])
    targets = np.ascontiguousarray(blocks[:, w:])
    anchors = np.arange(count, dtype=np.int64) + (w - 1)
    return WindowBatch(inputs, targets, anchors)


def synth_two_group(
    n_easy: int,
    n_hard: int,
    T: int,
    noise_easy: float,
    noise_hard: float,
    seed: int,
    segment_len: int = 50,
    jump_scale: float = 1.5,
) -> SeriesMatrix:
    """Two-group benchmark: smooth sinusoids vs. phase-jumping noisy ones.

    The first ``n_easy`` variables are phase-shifted sinusoids plus
    Gaussian noise of scale ``noise_easy``.  The remaining ``n_hard``
    variables are sinusoids whose phase jumps by a random amount (scale
    ``jump_scale``) at every ``segment_len``-step boundary, plus noise of
    scale ``noise_hard``.  Group membership is recorded in the variable
    names (``easy_*`` / ``hard_*``).  Deterministic given ``seed``.
    """
    if n_easy < 1 or n_hard < 1:
        raise ValueError("both group sizes must be positive")
    if T < 1:
        raise ValueError("T must be positive")
    if noise_easy < 0 or noise_hard < 0:
        raise ValueError("noise scales must be non-negative")
    if segment_len < 1:
        raise ValueError("segment_len must be positive")
    rng = np.random.default_rng(seed)
    steps = np.arange(T, dtype=np.float64)
    n = n_easy + n_hard
    values = np.empty((T, n), dtype=np.float64)

    base_period = 24.0
    for i in range(n_easy):
        phase = 2.0 * np.pi * i / max(n_easy, 1)
        period = base_period * (1.0 + 0.15 * (i % 3))
        values[:, i] = np.sin(2.0 * np.pi * steps / period + phase)
    n_segments = -(-T // segment_len)
    for j in range(n_hard):
        col = n_easy + j
        phase0 = 2.0 * np.pi * j / max(n_hard, 1)
        jumps = rng.normal(0.0, jump_scale, size=n_segments) if jump_scale > 0 else np.zeros(n_segments)
        phase_path = np.repeat(np.cumsum(jumps), segment_len)[:T]
        period = base_period * (1.0 + 0.15 * (j % 3))
        values[:, col] = np.sin(2.0 * np.pi * steps / period + phase0 + phase_path)
    if noise_easy > 0:
        values[:, :n_easy] += rng.normal(0.0, noise_easy, size=(T, n_easy))
    if noise_hard > 0:
        values[:, n_easy:] += rng.normal(0.0, noise_hard, size=(T, n_hard))

    names = [f"easy_{i:02d}" for i in range(n_easy)] + [f"hard_{j:02d}" for j in range(n_hard)]
    return SeriesMatrix(values, variable_names=names, interval="synthetic")


def group_labels(series: SeriesMatrix) -> list[str]:
    """Group label per variable, derived from the name prefix."""
    if series.variable_names is None:
        raise ValueError("series carries no variable names")
    return [name.split("_")[0] for name in series.variable_names]
