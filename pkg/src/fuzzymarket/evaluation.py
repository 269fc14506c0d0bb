"""Metrics, horizon buckets, the rolling evaluation protocol, and reports.

All metrics are computed on the raw price scale: normalized-model outputs are
de-normalized with their window's stats before any error is taken. MAPE is
reported as a fraction (0.0027, not 0.27%).
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .data import RawSeries, Window, denormalize, normalize_window


class Bucket(str, Enum):
    """Horizon slices reported per model: first step ("OS"), fifth step, the
    back half, and all ten steps pooled ("TS")."""

    STEP1 = "step1"
    STEP5 = "step5"
    STEPS6TO10 = "steps6to10"
    ALL10 = "all10"

    @property
    def steps(self) -> list[int]:
        return {
            Bucket.STEP1: [1],
            Bucket.STEP5: [5],
            Bucket.STEPS6TO10: [6, 7, 8, 9, 10],
            Bucket.ALL10: [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
        }[self]


REQUIRED_HORIZON = 10


def rmse(predictions, actuals) -> float:
    """Root mean squared error."""
    predictions = np.asarray(predictions, dtype=float).ravel()
    actuals = np.asarray(actuals, dtype=float).ravel()
    if predictions.shape != actuals.shape:
        raise ValueError(f"length mismatch: {predictions.shape} vs {actuals.shape}")
    if predictions.size == 0:
        raise ValueError("cannot compute RMSE of empty inputs")
    err = predictions - actuals
    return float(np.sqrt(np.mean(err * err)))


def mape(predictions, actuals) -> float:
    """Mean absolute percentage error, as a fraction."""
    predictions = np.asarray(predictions, dtype=float).ravel()
    actuals = np.asarray(actuals, dtype=float).ravel()
    if predictions.shape != actuals.shape:
        raise ValueError(f"length mismatch: {predictions.shape} vs {actuals.shape}")
    if predictions.size == 0:
        raise ValueError("cannot compute MAPE of empty inputs")
    if np.any(np.abs(actuals) <= 1e-8):
        raise ValueError("MAPE undefined: an actual value is (numerically) zero")
    return float(np.mean(np.abs(predictions - actuals) / np.abs(actuals)))


def decompose_horizon(predictions: np.ndarray, actuals: np.ndarray) -> dict[Bucket, dict[str, float]]:
    """Per-bucket RMSE/MAPE from (N, 10) prediction and actual matrices."""
    predictions = np.atleast_2d(np.asarray(predictions, dtype=float))
    actuals = np.atleast_2d(np.asarray(actuals, dtype=float))
    if predictions.shape != actuals.shape:
        raise ValueError(f"shape mismatch: {predictions.shape} vs {actuals.shape}")
    if predictions.shape[1] != REQUIRED_HORIZON:
        raise ValueError(
            f"horizon decomposition expects H={REQUIRED_HORIZON}, got {predictions.shape[1]}"
        )
    out = {}
    for bucket in Bucket:
        cols = [s - 1 for s in bucket.steps]
        out[bucket] = {
            "rmse": rmse(predictions[:, cols], actuals[:, cols]),
            "mape": mape(predictions[:, cols], actuals[:, cols]),
        }
    return out


@dataclass(eq=False)
class EvalResult:
    """Raw per-origin forecasts plus derived per-bucket metrics."""

    predictions: np.ndarray  # (N, H), raw scale
    actuals: np.ndarray  # (N, H), raw scale
    n_forecasts: int
    runtime_seconds: float

    def bucket_metrics(self) -> dict[Bucket, dict[str, float]]:
        return decompose_horizon(self.predictions, self.actuals)


def evaluate_rolling(
    forecaster,
    test: RawSeries | list[RawSeries],
    lookback: int,
    horizon: int,
    contexts: list[np.ndarray] | np.ndarray | None = None,
) -> EvalResult:
    """Forecast at every origin (stride 1) of the test series.

    Normalized-scale models get the z-scored lookback and their outputs are
    de-normalized with the window stats; raw-scale models get the full
    trailing history. When a test slice was cut out of a longer series, pass
    the preceding values as its context so raw-scale models see the whole
    history up to each origin. Metrics are always on the raw scale.
    """
    series_list = [test] if isinstance(test, RawSeries) else list(test)
    if contexts is None:
        context_list = [None] * len(series_list)
    elif isinstance(contexts, np.ndarray):
        context_list = [contexts]
    else:
        context_list = list(contexts)
    if len(context_list) != len(series_list):
        raise ValueError("one context (or None) per test series")
    preds, actuals = [], []
    started = time.monotonic()
    for series, context in zip(series_list, context_list):
        n = len(series)
        if n < lookback + horizon:
            raise ValueError(
                f"test series {series.id} of length {n} has no full forecast origin"
            )
        for origin in range(lookback, n - horizon + 1):
            target = series.values[origin : origin + horizon]
            if forecaster.input_scale == "raw":
                history = series.values[:origin]
                if context is not None:
                    history = np.concatenate([context, history])
                p = forecaster.predict(history, horizon)
            else:
                window = Window(
                    series_id=series.id,
                    origin=origin,
                    lookback=series.values[origin - lookback : origin],
                    target=target,
                )
                normalized, stats = normalize_window(window)
                z = forecaster.predict(normalized.lookback, horizon, stats)
                p = denormalize(z, stats)
            p = np.asarray(p, dtype=float)
            if p.shape != (horizon,):
                raise ValueError(
                    f"{forecaster.name} returned {p.shape}, expected ({horizon},)"
                )
            preds.append(p)
            actuals.append(target)
    return EvalResult(
        predictions=np.stack(preds),
        actuals=np.stack(actuals),
        n_forecasts=len(preds),
        runtime_seconds=time.monotonic() - started,
    )


@dataclass(frozen=True)
class ReportRow:
    """One report cell: a (dataset, regime, model, bucket) with its metrics."""

    dataset: str
    regime: str
    model: str
    bucket: str
    rmse: float
    mape: float
    n_forecasts: int


@dataclass(eq=False)
class EvalReport:
    """All cells of one experiment plus the provenance that produced them.

    Runtimes are kept on EvalResult objects and in training logs, not here:
    report files must be byte-identical across reruns of the same config.
    """

    config_hash: str
    seed: int
    rows: list[ReportRow]

    # deep-model cells are averaged into the "Average DL" column
    def _cell_grid(self) -> dict[tuple[str, str, str], dict[str, ReportRow]]:
        grid: dict[tuple[str, str, str], dict[str, ReportRow]] = {}
        for row in self.rows:
            grid.setdefault((row.dataset, row.regime, row.bucket), {})[row.model] = row
        return grid

    def summary(self, deep_models: tuple[str, ...] = ("mlp",)) -> list[dict]:
        """Per (dataset, regime, bucket): each model's metrics, the average of
        the deep models, and the best model by RMSE."""
        out = []
        for (dataset, regime, bucket), cells in sorted(self._cell_grid().items()):
            entry: dict = {"dataset": dataset, "regime": regime, "bucket": bucket, "models": {}}
            for model, row in sorted(cells.items()):
                entry["models"][model] = {"rmse": row.rmse, "mape": row.mape}
            deep = [cells[m] for m in deep_models if m in cells]
            if deep:
                entry["average_dl"] = {
                    "rmse": float(np.mean([r.rmse for r in deep])),
                    "mape": float(np.mean([r.mape for r in deep])),
                }
            best = min(cells.values(), key=lambda r: r.rmse)
            entry["best_model"] = best.model
            out.append(entry)
        return out

    def to_json_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "rows": [asdict(r) for r in self.rows],
            "summary": self.summary(),
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load_json(cls, path: str | Path) -> "EvalReport":
        doc = json.loads(Path(path).read_text())
        rows = [ReportRow(**r) for r in doc["rows"]]
        return cls(config_hash=doc["config_hash"], seed=doc["seed"], rows=rows)

    def save_csv(self, path: str | Path) -> None:
        """Flat rows (dataset, regime, model, bucket, metric, value) with the
        provenance columns appended; floats serialized via repr so they parse
        back bit-identically."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["dataset", "regime", "model", "bucket", "metric", "value", "config_hash", "seed"])
        for row in self.rows:
            base = [row.dataset, row.regime, row.model, row.bucket]
            writer.writerow(base + ["rmse", repr(row.rmse), self.config_hash, self.seed])
            writer.writerow(base + ["mape", repr(row.mape), self.config_hash, self.seed])
            writer.writerow(base + ["n_forecasts", repr(row.n_forecasts), self.config_hash, self.seed])
        Path(path).write_text(buf.getvalue())

    @classmethod
    def load_csv(cls, path: str | Path) -> "EvalReport":
        cells: dict[tuple[str, str, str, str], dict] = {}
        config_hash, seed = "", 0
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                key = (rec["dataset"], rec["regime"], rec["model"], rec["bucket"])
                cells.setdefault(key, {})[rec["metric"]] = rec["value"]
                config_hash, seed = rec["config_hash"], int(rec["seed"])
        rows = [
            ReportRow(
                dataset=k[0],
                regime=k[1],
                model=k[2],
                bucket=k[3],
                rmse=float(v["rmse"]),
                mape=float(v["mape"]),
                n_forecasts=int(float(v["n_forecasts"])),
            )
            for k, v in cells.items()
        ]
        return cls(config_hash=config_hash, seed=seed, rows=rows)

    def render_text(self) -> str:
        """Aligned table: one line per (dataset, regime, bucket), one RMSE/MAPE
        column pair per model, the deep-model average, and the best model."""
        summary = self.summary()
        models = sorted({m for entry in summary for m in entry["models"]})
        header = ["dataset", "regime", "bucket"]
        for m in models:
            header += [f"{m}/rmse", f"{m}/mape"]
        header += ["avgDL/rmse", "avgDL/mape", "best"]
        lines = [header]
        for entry in summary:
            line = [entry["dataset"], entry["regime"], entry["bucket"]]
            for m in models:
                cell = entry["models"].get(m)
                line += [_fmt(cell["rmse"]), _fmt(cell["mape"])] if cell else ["-", "-"]
            avg = entry.get("average_dl")
            line += [_fmt(avg["rmse"]), _fmt(avg["mape"])] if avg else ["-", "-"]
            line.append(entry["best_model"])
            lines.append(line)
        widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
        return "\n".join(
            "  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in lines
        )


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def report_rows_from_result(
    result_metrics: dict[Bucket, dict[str, float]],
    dataset: str,
    regime: str,
    model: str,
    n_forecasts: int,
) -> list[ReportRow]:
    """Expand one evaluation's bucket metrics into report rows."""
    return [
        ReportRow(
            dataset=dataset,
            regime=regime,
            model=model,
            bucket=bucket.value,
            rmse=metrics["rmse"],
            mape=metrics["mape"],
            n_forecasts=n_forecasts,
        )
        for bucket, metrics in result_metrics.items()
    ]
