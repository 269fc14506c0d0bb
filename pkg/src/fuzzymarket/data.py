"""Series ingestion, splits, windowing, local normalization, interpolation.

Windows pair a lookback with the horizon that immediately follows it; each
window carries z-score statistics computed from its own lookback so batches
from different series (or from synthetic and real data) can be mixed.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

from .rng import DeterministicRng

log = logging.getLogger(__name__)

# Below this, a lookback is treated as flat and only centered.
DEGENERATE_STD = 1e-8


class SeriesSource(str, Enum):
    SYNTHETIC = "synthetic"
    BANKNIFTY_LIKE = "banknifty-like"
    FOREX_LIKE = "forex-like"


@dataclass(frozen=True, eq=False)
class RawSeries:
    """A univariate series of closing prices / spot rates."""

    id: str
    values: np.ndarray
    source: SeriesSource
    n_dropped: int = 0  # rows discarded while cleaning the input file

    def __post_init__(self):
        # empty is allowed: splits may produce empty val/test slices
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"series {self.id} contains non-finite values")

    def __len__(self) -> int:
        return len(self.values)

    def slice(self, start: int, stop: int, suffix: str) -> "RawSeries":
        return RawSeries(f"{self.id}-{suffix}", self.values[start:stop], self.source)


@dataclass(frozen=True)
class SplitSpec:
    """Half-open index ranges for train/val/test within one series.

    Ranges may overlap by a few steps (the Forex protocol does); they must
    start in chronological order.
    """

    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]

    def __post_init__(self):
        for name in ("train", "val", "test"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} range ({lo}, {hi}) is not a valid half-open range")
        if not (self.train[0] <= self.val[0] <= self.test[0]):
            raise ValueError("train/val/test ranges must start in chronological order")

    @classmethod
    def forex_default(cls) -> "SplitSpec":
        # 2562-step series: train 2050, val and test 262 each, 6-step overlaps.
        return cls(train=(0, 2050), val=(2044, 2306), test=(2300, 2562))

    @classmethod
    def banknifty_default(cls) -> "SplitSpec":
        # 1050 training steps, then 144 validation and 144 test.
        return cls(train=(0, 1050), val=(1050, 1194), test=(1194, 1338))

    def to_dict(self) -> dict:
        return {"train": list(self.train), "val": list(self.val), "test": list(self.test)}


@dataclass(frozen=True)
class CorpusSplitSpec:
    """Series-count split for a synthetic corpus: the first `train_series`
    series train, the next `val_series` validate, the last `test_series` test."""

    train_series: int = 36
    val_series: int = 2
    test_series: int = 2

    def __post_init__(self):
        if min(self.train_series, self.val_series, self.test_series) < 0:
            raise ValueError("series counts must be non-negative")

    @property
    def total(self) -> int:
        return self.train_series + self.val_series + self.test_series

    def to_dict(self) -> dict:
        return {
            "train_series": self.train_series,
            "val_series": self.val_series,
            "test_series": self.test_series,
        }


@dataclass(eq=False)
class Window:
    """One forecasting instance: L lookback values and the H targets that
    follow. `origin` is the index of the first forecast step in the source."""

    series_id: str
    origin: int
    lookback: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        self.lookback = np.asarray(self.lookback, dtype=float)
        self.target = np.asarray(self.target, dtype=float)


@dataclass(frozen=True)
class NormStats:
    """Per-window z-score statistics taken from the lookback."""

    mean: float
    std: float

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("std must be non-negative")


def load_csv(path: str | Path, value_column: str, *, source: SeriesSource, series_id: str | None = None) -> RawSeries:
    """Read one column of a chronological CSV into a RawSeries.

    Rows whose value does not parse as a finite float are dropped; the count
    is logged and recorded on the returned series.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    values: list[float] = []
    dropped = 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or value_column not in reader.fieldnames:
            raise ValueError(f"column {value_column!r} not found in {path} (columns: {reader.fieldnames})")
        for row in reader:
            raw = (row.get(value_column) or "").strip()
            try:
                v = float(raw)
            except ValueError:
                dropped += 1
                continue
            if not np.isfinite(v):
                dropped += 1
                continue
            values.append(v)
    if dropped:
        log.info("load_csv(%s): dropped %d unparseable row(s)", path.name, dropped)
    if not values:
        raise ValueError(f"{path}: no parseable values in column {value_column!r}")
    return RawSeries(
        id=series_id or path.stem,
        values=np.array(values),
        source=source,
        n_dropped=dropped,
    )


def split(series: RawSeries, spec: SplitSpec) -> tuple[RawSeries, RawSeries, RawSeries]:
    """Slice one series into (train, val, test) exactly as the spec indexes it."""
    n = len(series)
    for name in ("train", "val", "test"):
        lo, hi = getattr(spec, name)
        if hi > n:
            raise ValueError(f"{name} range ({lo}, {hi}) exceeds series length {n}")
    return (
        series.slice(*spec.train, "train"),
        series.slice(*spec.val, "val"),
        series.slice(*spec.test, "test"),
    )


def split_corpus(
    corpus: list[RawSeries], spec: CorpusSplitSpec
) -> tuple[list[RawSeries], list[RawSeries], list[RawSeries]]:
    """Assign whole series of a corpus to train/val/test, in corpus order."""
    if len(corpus) < spec.total:
        raise ValueError(f"corpus has {len(corpus)} series, split needs {spec.total}")
    a, b = spec.train_series, spec.train_series + spec.val_series
    c = b + spec.test_series
    return corpus[:a], corpus[a:b], corpus[b:c]


def meta_split(series: RawSeries, train_steps: int = 400) -> tuple[RawSeries, RawSeries]:
    """Head/tail split used for meta-learning on synthetic series: the first
    `train_steps` values build meta-training tasks, the rest meta-testing."""
    if not 0 < train_steps < len(series):
        raise ValueError(f"train_steps={train_steps} invalid for series of length {len(series)}")
    return (
        series.slice(0, train_steps, "metatrain"),
        series.slice(train_steps, len(series), "metatest"),
    )


def normalize_window(window: Window) -> tuple[Window, NormStats]:
    """Z-score a window by its lookback mean and population std.

    Flat lookbacks (std below DEGENERATE_STD) are centered only, with std
    recorded as 1 so denormalization stays exact.
    """
    if len(window.lookback) == 0:
        raise ValueError("cannot normalize an empty lookback")
    mean = float(np.mean(window.lookback))
    std = float(np.std(window.lookback))
    if std < DEGENERATE_STD:
        std = 1.0
    stats = NormStats(mean=mean, std=std)
    normalized = Window(
        series_id=window.series_id,
        origin=window.origin,
        lookback=(window.lookback - mean) / std,
        target=(window.target - mean) / std,
    )
    return normalized, stats


def denormalize(predictions: np.ndarray, stats: NormStats) -> np.ndarray:
    """Invert normalize_window on model outputs: v -> v * std + mean."""
    return np.asarray(predictions, dtype=float) * stats.std + stats.mean


@dataclass(eq=False)
class WindowedDataset:
    """Aligned windows and their normalization stats, uniform L and H."""

    windows: list[Window]
    stats: list[NormStats]
    lookback_len: int
    horizon: int

    def __post_init__(self):
        if len(self.windows) != len(self.stats):
            raise ValueError("windows and stats must be aligned")
        for w in self.windows:
            if len(w.lookback) != self.lookback_len or len(w.target) != self.horizon:
                raise ValueError("all windows must share the dataset's L and H")

    def __len__(self) -> int:
        return len(self.windows)

    @cached_property
    def normalized_x(self) -> np.ndarray:
        """All lookbacks z-scored, stacked into an (N, L) matrix."""
        if not self.windows:
            return np.zeros((0, self.lookback_len))
        return np.stack(
            [(w.lookback - s.mean) / s.std for w, s in zip(self.windows, self.stats)]
        )

    @cached_property
    def normalized_y(self) -> np.ndarray:
        """All targets z-scored with their window's stats, stacked (N, H)."""
        if not self.windows:
            return np.zeros((0, self.horizon))
        return np.stack(
            [(w.target - s.mean) / s.std for w, s in zip(self.windows, self.stats)]
        )

    @cached_property
    def raw_targets(self) -> np.ndarray:
        if not self.windows:
            return np.zeros((0, self.horizon))
        return np.stack([w.target for w in self.windows])


def make_windows(series: RawSeries, lookback: int, horizon: int, stride: int = 1) -> WindowedDataset:
    """Cut every stride-spaced window out of a series.

    Origins run L, L+stride, ... while origin + H fits; the count is
    floor((len - L - H) / stride) + 1.
    """
    if lookback < 1 or horizon < 1 or stride < 1:
        raise ValueError("lookback, horizon and stride must be >= 1")
    n = len(series)
    if n < lookback + horizon:
        raise ValueError(
            f"series {series.id} of length {n} is too short for L={lookback}, H={horizon}"
        )
    windows, stats = [], []
    for origin in range(lookback, n - horizon + 1, stride):
        w = Window(
            series_id=series.id,
            origin=origin,
            lookback=series.values[origin - lookback : origin],
            target=series.values[origin : origin + horizon],
        )
        _, s = normalize_window(w)
        windows.append(w)
        stats.append(s)
    return WindowedDataset(windows=windows, stats=stats, lookback_len=lookback, horizon=horizon)


def concat_datasets(datasets: list[WindowedDataset]) -> WindowedDataset:
    """Merge window sets cut from different series (same L and H)."""
    if not datasets:
        raise ValueError("need at least one dataset")
    L, H = datasets[0].lookback_len, datasets[0].horizon
    windows, stats = [], []
    for ds in datasets:
        if ds.lookback_len != L or ds.horizon != H:
            raise ValueError("datasets disagree on L or H")
        windows += ds.windows
        stats += ds.stats
    return WindowedDataset(windows=windows, stats=stats, lookback_len=L, horizon=H)


def interpolate_lookback(lookback: np.ndarray, target_len: int) -> np.ndarray:
    """Linearly resample a lookback onto target_len evenly spaced points over
    the same index span; endpoints are preserved exactly."""
    lookback = np.asarray(lookback, dtype=float)
    if len(lookback) < 2 or target_len < 2:
        raise ValueError("interpolation needs source and target lengths >= 2")
    positions = np.linspace(0.0, len(lookback) - 1.0, target_len)
    return np.interp(positions, np.arange(len(lookback)), lookback)


def interpolate_lookbacks(dataset: WindowedDataset, target_len: int) -> WindowedDataset:
    """Resample every lookback of a dataset to target_len (targets unchanged)
    and recompute the per-window stats from the resampled lookbacks."""
    windows, stats = [], []
    for w in dataset.windows:
        nw = Window(
            series_id=w.series_id,
            origin=w.origin,
            lookback=interpolate_lookback(w.lookback, target_len),
            target=w.target,
        )
        _, s = normalize_window(nw)
        windows.append(nw)
        stats.append(s)
    return WindowedDataset(
        windows=windows, stats=stats, lookback_len=target_len, horizon=dataset.horizon
    )


def subsample(dataset: WindowedDataset, count: int, seed: int) -> WindowedDataset:
    """Seeded sample of `count` windows without replacement (used to balance
    synthetic and real amounts before augmentation)."""
    if count > len(dataset):
        raise ValueError(f"cannot sample {count} of {len(dataset)} windows")
    order = DeterministicRng(seed).permutation(len(dataset))
    keep = sorted(int(i) for i in order[:count])
    return WindowedDataset(
        windows=[dataset.windows[i] for i in keep],
        stats=[dataset.stats[i] for i in keep],
        lookback_len=dataset.lookback_len,
        horizon=dataset.horizon,
    )


@dataclass(eq=False)
class Batch:
    """One training batch of normalized windows."""

    indices: np.ndarray  # window indices into the source dataset
    x: np.ndarray  # (B, L)
    y: np.ndarray  # (B, H)

    def __len__(self) -> int:
        return len(self.indices)


def batches(dataset: WindowedDataset, batch_size: int, seed: int) -> list[Batch]:
    """Seeded shuffle of the dataset, chunked into batches of <= batch_size.

    Every window appears in exactly one batch; an empty dataset yields no
    batches.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(dataset)
    if n == 0:
        return []
    order = DeterministicRng(seed).permutation(n)
    x = dataset.normalized_x
    y = dataset.normalized_y
    return [
        Batch(indices=order[i : i + batch_size], x=x[order[i : i + batch_size]], y=y[order[i : i + batch_size]])
        for i in range(0, n, batch_size)
    ]
