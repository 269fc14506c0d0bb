"""Training regimes: normal, synthetic-augmented, and first-order meta-learning.

All three mutate the passed model in place and return (model, history) where
history is one dict per epoch / meta-iteration, suitable for JSON-lines
logging. Every source of randomness is a seed derived from the config seed,
so a (seed, config, data) triple pins the final parameters bit for bit.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Batch, RawSeries, Window, WindowedDataset, batches, denormalize, normalize_window
from .forecast.mlp import Adam, Sgd
from .rng import DeterministicRng, derive_seed


class GradientExplosionError(RuntimeError):
    """Meta-training loss went non-finite; the run is aborted rather than
    silently producing garbage."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    regime: str = "normal"  # normal | augmented | meta
    patience: int = 10  # early-stopping patience on validation RMSE

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0 or self.patience < 1:
            raise ValueError("epochs/batch_size/lr/patience out of range")
        if self.regime not in ("normal", "augmented", "meta"):
            raise ValueError(f"unknown regime {self.regime!r}")


@dataclass(frozen=True)
class MetaConfig:
    """Task construction and first-order meta-training parameters.

    Each task anchors at a time-step d, adapts on k windows ending at or
    before d and evaluates on r windows starting after d, with window offsets
    j drawn uniformly from [1, a].
    """

    k: int = 5
    r: int = 5
    a: int = 50
    inner_lr: float = 0.01
    inner_steps: int = 5
    meta_lr: float = 1e-3
    meta_batch: int = 8
    meta_iterations: int = 1000

    def __post_init__(self):
        if min(self.k, self.r, self.a, self.meta_batch) < 1 or self.meta_iterations < 0:
            raise ValueError("k, r, a, meta_batch must be >= 1 and meta_iterations >= 0")
        if self.inner_steps < 0 or self.inner_lr < 0 or self.meta_lr < 0:
            raise ValueError("learning rates and inner_steps must be non-negative")


@dataclass(eq=False)
class MetaTask:
    """Support/query windows around one anchor, with normalized arrays ready
    for gradient steps and the stats to undo the normalization."""

    anchor: int
    support: list[Window]
    query: list[Window]
    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray
    support_stats: list = field(default_factory=list)
    query_stats: list = field(default_factory=list)

    @classmethod
    def from_windows(cls, anchor: int, support: list[Window], query: list[Window]) -> "MetaTask":
        sup = [normalize_window(w) for w in support]
        que = [normalize_window(w) for w in query]
        return cls(
            anchor=anchor,
            support=support,
            query=query,
            support_x=np.stack([w.lookback for w, _ in sup]),
            support_y=np.stack([w.target for w, _ in sup]),
            query_x=np.stack([w.lookback for w, _ in que]),
            query_y=np.stack([w.target for w, _ in que]),
            support_stats=[s for _, s in sup],
            query_stats=[s for _, s in que],
        )

    @classmethod
    def from_arrays(cls, support_x, support_y, query_x, query_y) -> "MetaTask":
        """Task from pre-built arrays (synthetic regression families in tests)."""
        return cls(
            anchor=0,
            support=[],
            query=[],
            support_x=np.asarray(support_x, dtype=float),
            support_y=np.asarray(support_y, dtype=float),
            query_x=np.asarray(query_x, dtype=float),
            query_y=np.asarray(query_y, dtype=float),
        )


class JsonlLogger:
    """Appends one JSON object per record; adds provenance fields."""

    def __init__(self, path: str | Path, seed: int, config_hash: str = ""):
        self.path = Path(path)
        self.seed = seed
        self.config_hash = config_hash
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a")

    def write(self, record: dict) -> None:
        full = {"timestamp": time.time(), "seed": self.seed, "config_hash": self.config_hash}
        full.update(record)
        self._fh.write(json.dumps(full, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _validation_rmse(model, val: WindowedDataset) -> float:
    """De-normalized RMSE of the model on a validation window set."""
    preds_z = model.forward(val.normalized_x)
    preds = np.stack([denormalize(row, s) for row, s in zip(preds_z, val.stats)])
    err = preds - val.raw_targets
    return float(np.sqrt(np.mean(err * err)))


def train_normal(
    model,
    dataset: WindowedDataset,
    config: TrainConfig,
    val: WindowedDataset | None = None,
    log: JsonlLogger | None = None,
):
    """Standard epoch loop with Adam, early-stopped on validation RMSE.

    Restores the best-on-validation parameters before returning.
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    opt = Adam(config.lr)
    params = model.get_params()
    best_params = params.copy()
    best_val = np.inf
    since_best = 0
    history: list[dict] = []
    for epoch in range(config.epochs):
        epoch_losses = []
        for batch in batches(dataset, config.batch_size, derive_seed(config.seed, "epoch", epoch)):
            loss, grads = model.loss_and_gradients(batch.x, batch.y)
            params = opt.step(params, grads)
            model.set_params(params)
            epoch_losses.append(loss)
        record = {"event": "epoch", "epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
        if val is not None and len(val) > 0:
            val_rmse = _validation_rmse(model, val)
            record["val_rmse"] = val_rmse
            if val_rmse < best_val:
                best_val = val_rmse
                best_params = params.copy()
                since_best = 0
            else:
                since_best += 1
        history.append(record)
        if log is not None:
            log.write(record)
        if val is not None and since_best >= config.patience:
            break
    if val is not None and len(val) > 0:
        model.set_params(best_params)
    return model, history


def interleave_batches(
    synthetic: list[Batch], real: list[Batch], rng: DeterministicRng
) -> list[tuple[str, Batch]]:
    """Consumption order of one augmented epoch.

    Repeatedly draw a ~ U(0,1); a > 0.5 takes the next synthetic batch if any
    remain, otherwise the draw does nothing (and symmetrically for real), until
    both loaders are exhausted. Every batch appears exactly once.
    """
    order: list[tuple[str, Batch]] = []
    s = r = 0
    while s < len(synthetic) or r < len(real):
        if rng.uniform() > 0.5:
            if s < len(synthetic):
                order.append(("synthetic", synthetic[s]))
                s += 1
        else:
            if r < len(real):
                order.append(("real", real[r]))
                r += 1
    return order


def train_augmented(
    model,
    real: WindowedDataset,
    synthetic: WindowedDataset,
    config: TrainConfig,
    val: WindowedDataset | None = None,
    log: JsonlLogger | None = None,
):
    """Alternate synthetic and real batches under random draws until both are
    exhausted each epoch: exactly len(S) + len(R) updates per epoch.

    Synthetic lookbacks must already be interpolated to the real lookback
    length, and the caller balances the amounts.
    """
    if len(real) > 0 and len(synthetic) > 0 and real.lookback_len != synthetic.lookback_len:
        raise ValueError(
            "synthetic lookbacks must be interpolated to the real lookback length "
            f"({synthetic.lookback_len} != {real.lookback_len})"
        )
    opt = Adam(config.lr)
    params = model.get_params()
    best_params = params.copy()
    best_val = np.inf
    since_best = 0
    history: list[dict] = []
    for epoch in range(config.epochs):
        s_batches = batches(synthetic, config.batch_size, derive_seed(config.seed, "aug-s", epoch))
        r_batches = batches(real, config.batch_size, derive_seed(config.seed, "aug-r", epoch))
        rng = DeterministicRng(derive_seed(config.seed, "aug-draw", epoch))
        epoch_losses = []
        first_source = None
        for source, batch in interleave_batches(s_batches, r_batches, rng):
            if first_source is None:
                first_source = source
            loss, grads = model.loss_and_gradients(batch.x, batch.y)
            params = opt.step(params, grads)
            model.set_params(params)
            epoch_losses.append(loss)
        record = {
            "event": "epoch",
            "epoch": epoch,
            "n_updates": len(epoch_losses),
            "first_source": first_source,
            "train_loss": float(np.mean(epoch_losses)) if epoch_losses else None,
        }
        if val is not None and len(val) > 0:
            val_rmse = _validation_rmse(model, val)
            record["val_rmse"] = val_rmse
            if val_rmse < best_val:
                best_val = val_rmse
                best_params = params.copy()
                since_best = 0
            else:
                since_best += 1
        history.append(record)
        if log is not None:
            log.write(record)
        if val is not None and since_best >= config.patience:
            break
    if val is not None and len(val) > 0:
        model.set_params(best_params)
    return model, history


def build_meta_tasks(
    series: RawSeries,
    lookback: int,
    horizon: int,
    count: int,
    meta: MetaConfig,
    seed: int,
) -> list[MetaTask]:
    """Sample `count` tasks from one series.

    Anchors are uniform over the indices where a full task fits; support
    windows occupy [d-l-j, d-j) and query windows [d+j, d+l+j) with
    j ~ U[1, a] drawn independently per window (duplicates permitted).
    """
    l = lookback + horizon
    n = len(series)
    lo, hi = l + meta.a, n - l - meta.a
    if lo > hi:
        raise ValueError(
            f"series {series.id} of length {n} is too short for meta tasks with "
            f"window {l} and offset bound {meta.a}"
        )
    rng = DeterministicRng(seed)
    values = series.values

    def cut(start: int) -> Window:
        return Window(
            series_id=series.id,
            origin=start + lookback,
            lookback=values[start : start + lookback],
            target=values[start + lookback : start + l],
        )

    tasks = []
    for _ in range(count):
        d = lo + rng.randint(hi - lo + 1)
        support = [cut(d - l - (1 + rng.randint(meta.a))) for _ in range(meta.k)]
        query = [cut(d + 1 + rng.randint(meta.a)) for _ in range(meta.r)]
        tasks.append(MetaTask.from_windows(d, support, query))
    return tasks


def build_meta_tasks_multi(
    series_list: list[RawSeries],
    lookback: int,
    horizon: int,
    count_per_series: int,
    meta: MetaConfig,
    seed: int,
) -> list[MetaTask]:
    """Tasks drawn from each series independently, then merged."""
    tasks = []
    for i, series in enumerate(series_list):
        tasks += build_meta_tasks(
            series, lookback, horizon, count_per_series, meta, derive_seed(seed, "series", i)
        )
    return tasks


def _inner_adapt(model, params: np.ndarray, task: MetaTask, meta: MetaConfig) -> np.ndarray:
    """inner_steps of SGD on the task's support loss, from `params`."""
    theta = params.copy()
    sgd = Sgd(meta.inner_lr)
    for _ in range(meta.inner_steps):
        model.set_params(theta)
        _, grads = model.loss_and_gradients(task.support_x, task.support_y)
        theta = sgd.step(theta, grads)
    return theta


def fomaml_train(
    model,
    meta_train_tasks: list[MetaTask],
    meta: MetaConfig,
    seed: int = 0,
    log: JsonlLogger | None = None,
):
    """First-order MAML: adapt a copy on each sampled task's support set, take
    the query-loss gradient at the adapted parameters, and apply the mean of
    those gradients to the initialization (Adam outer step, no second
    derivatives)."""
    if not meta_train_tasks:
        raise ValueError("no meta-training tasks")
    rng = DeterministicRng(seed)
    outer = Adam(meta.meta_lr)
    params = model.get_params()
    history: list[dict] = []
    for iteration in range(meta.meta_iterations):
        picked = rng.randints(meta.meta_batch, len(meta_train_tasks))
        query_grads = []
        query_losses = []
        for task_index in picked:
            task = meta_train_tasks[int(task_index)]
            theta = _inner_adapt(model, params, task, meta)
            model.set_params(theta)
            q_loss, q_grad = model.loss_and_gradients(task.query_x, task.query_y)
            query_grads.append(q_grad)
            query_losses.append(q_loss)
        meta_grad = np.mean(query_grads, axis=0)
        meta_loss = float(np.mean(query_losses))
        if not np.isfinite(meta_loss) or not np.all(np.isfinite(meta_grad)):
            model.set_params(params)
            raise GradientExplosionError(
                f"meta-loss became non-finite at iteration {iteration}"
            )
        params = outer.step(params, meta_grad)
        record = {"event": "meta_iteration", "iteration": iteration, "meta_loss": meta_loss}
        history.append(record)
        if log is not None:
            log.write(record)
    model.set_params(params)
    return model, history


def adapt(model, task: MetaTask, meta: MetaConfig):
    """Return a copy of the model adapted to the task's support set; the
    original model is untouched."""
    adapted = model.clone()
    theta = _inner_adapt(adapted, adapted.get_params(), task, meta)
    adapted.set_params(theta)
    return adapted


def evaluate_meta_tasks(
    model, tasks: list[MetaTask], meta: MetaConfig, with_adaptation: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Query predictions and actuals over a task set, de-normalized.

    Adapts to each task's support set first unless `with_adaptation` is False
    (the zero-shot protocol). Returns (predictions, actuals) as (N, H) arrays
    pooled over tasks.
    """
    preds, actuals = [], []
    for task in tasks:
        if not task.query_stats:
            raise ValueError("task has no query stats; build it from windows")
        m = adapt(model, task, meta) if with_adaptation else model
        z = m.forward(task.query_x)
        for row, stats, window in zip(z, task.query_stats, task.query):
            preds.append(denormalize(row, stats))
            actuals.append(window.target)
    return np.stack(preds), np.stack(actuals)
