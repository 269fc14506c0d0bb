"""Batch experiment driver.

Subcommands:
  generate   write a synthetic corpus (per-series CSVs + manifest)
  benchmark  run the configured models/regimes and write report.csv/report.json
  validate   check a config without running anything

One JSON config describes an experiment; every output is stamped with the
sha256 of its canonical form (sorted keys, compact separators) plus the seed,
so equal stamps imply byte-identical outputs.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as d
from . import simgen
from .evaluation import EvalReport, decompose_horizon, evaluate_rolling, report_rows_from_result
from .forecast import (
    ArimaForecaster,
    ArimaOrder,
    MlpModel,
    PersistenceForecaster,
    mlp_init,
    save_checkpoint,
)
from .rng import derive_seed
from .train import (
    GradientExplosionError,
    JsonlLogger,
    MetaConfig,
    TrainConfig,
    build_meta_tasks_multi,
    evaluate_meta_tasks,
    fomaml_train,
    train_augmented,
    train_normal,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4

KNOWN_MODELS = ("arima", "mlp", "persistence")
KNOWN_REGIMES = ("normal", "augmented", "meta")


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config resolution
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "seed": 0,
    "out_dir": "out",
    "lookback": 5,
    "horizon": 10,
}

_TRAIN_DEFAULTS = {"epochs": 200, "batch_size": 32, "lr": 1e-3, "patience": 10}
_META_DEFAULTS = {
    "k": 5,
    "r": 5,
    "a": 50,
    "inner_lr": 0.01,
    "inner_steps": 5,
    "meta_lr": 1e-3,
    "meta_batch": 8,
    "meta_iterations": 1000,
    "train_tasks": 200,
    "test_tasks": 50,
}
_GENERATOR_DEFAULTS = {
    "m": 1,
    "n": 5,
    "influence": 0.01,
    "init_steps": 100,
    "init_price": 100.0,
    "init_vol": 0.01,
    "series_len": 500,
}


def resolve_config(raw: dict) -> dict:
    """Fill every omitted field with its default and return the effective
    config; raises ConfigError on structural problems."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    cfg = copy.deepcopy(raw)
    for key, value in _DEFAULTS.items():
        cfg.setdefault(key, value)

    dataset = cfg.get("dataset")
    if not isinstance(dataset, dict) or "kind" not in dataset:
        raise ConfigError("config needs a dataset object with a 'kind'")
    if dataset["kind"] == "synthetic":
        gen = dict(_GENERATOR_DEFAULTS)
        gen.update(dataset.get("generator", {}))
        gen.setdefault("rules", simgen.FuzzyRuleSet.default().to_dict())
        dataset["generator"] = gen
        dataset.setdefault("count", 40)
        dataset.setdefault("base_seed", 9000)
        split = dataset.setdefault("split", {})
        split.setdefault("train_series", 36)
        split.setdefault("val_series", 2)
        split.setdefault("test_series", 2)
        dataset.setdefault("meta_train_steps", 400)
    elif dataset["kind"] == "csv":
        dataset.setdefault("value_column", "close")
        dataset.setdefault("source", "forex-like")
        if "path" not in dataset:
            raise ConfigError("csv dataset needs a 'path'")
        if "split" not in dataset:
            raise ConfigError("csv dataset needs a 'split' with train/val/test ranges")
    else:
        raise ConfigError(f"unknown dataset kind {dataset['kind']!r}")
    cfg.setdefault("name", dataset["kind"] if dataset["kind"] == "synthetic" else Path(dataset["path"]).stem)

    models = cfg.setdefault("models", {"arima": {}, "mlp": {}})
    if "arima" in models:
        arima = models["arima"]
        arima.setdefault("max_p", 3)
        arima.setdefault("max_d", 2)
        arima.setdefault("max_q", 3)
    if "mlp" in models:
        mlp = models["mlp"]
        mlp.setdefault("hidden", [128, 128])
        mlp.setdefault("activation", "relu")

    regimes = cfg.setdefault("regimes", {"normal": {}})
    for name, regime in regimes.items():
        if name in ("normal", "augmented"):
            for key, value in _TRAIN_DEFAULTS.items():
                regime.setdefault(key, value)
        if name == "augmented":
            gen = dict(_GENERATOR_DEFAULTS)
            gen.update(regime.get("generator", {}))
            gen.setdefault("rules", simgen.FuzzyRuleSet.default().to_dict())
            regime["generator"] = gen
            regime.setdefault("count", 40)
            regime.setdefault("base_seed", 9100)
            regime.setdefault("synthetic_lookback", 5)
        if name == "meta":
            for key, value in _META_DEFAULTS.items():
                regime.setdefault(key, value)
    return cfg


def config_hash(effective: dict) -> str:
    """Hash of the canonical experiment config (sorted keys, compact JSON).

    out_dir names where results land, not what the experiment is, so it is
    excluded: runs of one experiment into two directories stamp identically.
    """
    hashed = {k: v for k, v in effective.items() if k != "out_dir"}
    canonical = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def validate_config(cfg: dict) -> list[str]:
    """All invariant violations in an effective config (empty means valid)."""
    problems: list[str] = []
    dataset = cfg["dataset"]

    if cfg["lookback"] < 1:
        problems.append("lookback must be >= 1")
    if cfg["horizon"] != 10:
        problems.append("horizon must be 10 (the report decomposes steps 1/5/6-10)")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        problems.append("seed must be a non-negative integer")

    gen_cfg = None
    if dataset["kind"] == "synthetic":
        try:
            gen_cfg = simgen.GeneratorConfig.from_dict(dataset["generator"])
        except (ValueError, TypeError) as exc:
            problems.append(f"generator config invalid: {exc}")
        split = dataset["split"]
        total = split["train_series"] + split["val_series"] + split["test_series"]
        if dataset["count"] < total:
            problems.append(
                f"dataset count {dataset['count']} < split total {total}"
            )
        if gen_cfg and gen_cfg.series_len < cfg["lookback"] + cfg["horizon"]:
            problems.append("series_len too short for one lookback+horizon window")
    else:
        path = Path(dataset["path"])
        if not path.exists():
            problems.append(f"csv path not found: {path}")
        else:
            try:
                series = d.load_csv(path, dataset["value_column"], source=d.SeriesSource(dataset["source"]))
                spec = _split_spec(dataset["split"])
                d.split(series, spec)
                for name in ("train", "val", "test"):
                    lo, hi = getattr(spec, name)
                    if hi - lo < cfg["lookback"] + cfg["horizon"] and name != "val":
                        problems.append(f"{name} range too short for one window")
            except ValueError as exc:
                problems.append(str(exc))

    for name in cfg["models"]:
        if name not in KNOWN_MODELS:
            problems.append(f"unknown model {name!r} (known: {', '.join(KNOWN_MODELS)})")
    if "mlp" in cfg["models"]:
        hidden = cfg["models"]["mlp"]["hidden"]
        if not hidden or any(int(h) < 1 for h in hidden):
            problems.append("mlp hidden sizes must be positive")
        if cfg["models"]["mlp"]["activation"] not in ("relu", "tanh"):
            problems.append("mlp activation must be relu or tanh")

    for name, regime in cfg["regimes"].items():
        if name not in KNOWN_REGIMES:
            problems.append(f"unknown regime {name!r} (known: {', '.join(KNOWN_REGIMES)})")
            continue
        if name in ("normal", "augmented"):
            try:
                TrainConfig(
                    epochs=regime["epochs"],
                    batch_size=regime["batch_size"],
                    lr=regime["lr"],
                    patience=regime["patience"],
                    seed=0,
                    regime=name,
                )
            except ValueError as exc:
                problems.append(f"regime {name}: {exc}")
        if name == "augmented":
            if dataset["kind"] != "csv":
                problems.append("augmented regime needs a csv dataset (synthetic data is the augmentation)")
            if "mlp" not in cfg["models"]:
                problems.append("augmented regime needs the mlp model")
            try:
                simgen.GeneratorConfig.from_dict(regime["generator"])
            except (ValueError, TypeError) as exc:
                problems.append(f"augmentation generator invalid: {exc}")
        if name == "meta":
            if "mlp" not in cfg["models"]:
                problems.append("meta regime needs the mlp model")
            try:
                meta = _meta_config(regime)
            except ValueError as exc:
                problems.append(f"regime meta: {exc}")
                continue
            window = cfg["lookback"] + cfg["horizon"]
            need = 2 * (window + meta.a)
            if dataset["kind"] == "synthetic" and gen_cfg is not None:
                steps = dataset["meta_train_steps"]
                if steps >= gen_cfg.series_len:
                    problems.append("meta_train_steps must be < series_len")
                else:
                    for label, seg in (("meta-train", steps), ("meta-test", gen_cfg.series_len - steps)):
                        if seg < need:
                            problems.append(
                                f"{label} segment of {seg} steps cannot host tasks "
                                f"(needs >= {need}; lower the offset bound a)"
                            )
    return problems


def _split_spec(split_dict: dict) -> d.SplitSpec:
    return d.SplitSpec(
        train=tuple(split_dict["train"]),
        val=tuple(split_dict["val"]),
        test=tuple(split_dict["test"]),
    )


def _meta_config(regime: dict) -> MetaConfig:
    return MetaConfig(
        k=regime["k"],
        r=regime["r"],
        a=regime["a"],
        inner_lr=regime["inner_lr"],
        inner_steps=regime["inner_steps"],
        meta_lr=regime["meta_lr"],
        meta_batch=regime["meta_batch"],
        meta_iterations=regime["meta_iterations"],
    )


# ---------------------------------------------------------------------------
# dataset assembly
# ---------------------------------------------------------------------------


def _series_from_price(series: simgen.PriceSeries) -> d.RawSeries:
    return d.RawSeries(id=series.id, values=series.prices, source=d.SeriesSource.SYNTHETIC)


def _build_dataset(cfg: dict):
    """Returns (train_series, val_series, test_series, test_contexts) where
    test_contexts carries the values preceding each test slice (None when the
    test series are whole series of their own)."""
    dataset = cfg["dataset"]
    if dataset["kind"] == "synthetic":
        gen_cfg = simgen.GeneratorConfig.from_dict(dataset["generator"])
        corpus = simgen.generate_corpus(gen_cfg, dataset["count"], dataset["base_seed"])
        raw = [_series_from_price(s) for s in corpus]
        spec = d.CorpusSplitSpec(
            train_series=dataset["split"]["train_series"],
            val_series=dataset["split"]["val_series"],
            test_series=dataset["split"]["test_series"],
        )
        train, val, test = d.split_corpus(raw, spec)
        return train, val, test, None
    series = d.load_csv(
        dataset["path"], dataset["value_column"], source=d.SeriesSource(dataset["source"])
    )
    spec = _split_spec(dataset["split"])
    train, val, test = d.split(series, spec)
    return [train], [val], [test], [series.values[: spec.test[0]]]


def _windows_for(series_list: list[d.RawSeries], lookback: int, horizon: int) -> d.WindowedDataset:
    return d.concat_datasets([d.make_windows(s, lookback, horizon) for s in series_list])


def _new_mlp(cfg: dict, seed: int) -> MlpModel:
    spec = cfg["models"]["mlp"]
    sizes = [cfg["lookback"]] + [int(h) for h in spec["hidden"]] + [cfg["horizon"]]
    return mlp_init(sizes, spec["activation"], seed)


def _save_model(out_dir: Path, regime: str, model: MlpModel, chash: str) -> None:
    checkpoints = out_dir / "checkpoints"
    checkpoints.mkdir(parents=True, exist_ok=True)
    save_checkpoint(checkpoints / f"{regime}-mlp.json", model, config_hash=chash)


def _arima_grid(spec: dict) -> list[ArimaOrder]:
    grid = []
    for p in range(spec["max_p"] + 1):
        for dd in range(spec["max_d"] + 1):
            for q in range(spec["max_q"] + 1):
                if p + q >= 1 or dd >= 1:
                    grid.append(ArimaOrder(p, dd, q))
    return grid


# ---------------------------------------------------------------------------
# benchmark cells
# ---------------------------------------------------------------------------


def _run_benchmark(cfg: dict, out_dir: Path, models: list[str], regimes: list[str]) -> EvalReport:
    chash = config_hash(cfg)
    seed = cfg["seed"]
    L, H = cfg["lookback"], cfg["horizon"]
    name = cfg["name"]
    train_series, val_series, test_series, test_contexts = _build_dataset(cfg)
    logs_dir = out_dir / "logs"
    rows = []

    for regime in regimes:
        regime_cfg = cfg["regimes"][regime]
        if regime == "normal":
            if "arima" in models:
                forecaster = ArimaForecaster(grid=_arima_grid(cfg["models"]["arima"]))
                forecaster.fit(train_series[0].values)
                log.info("arima order selected: %s", forecaster.order)
                result = evaluate_rolling(forecaster, test_series, L, H, contexts=test_contexts)
                rows += report_rows_from_result(
                    result.bucket_metrics(), name, regime, "arima", result.n_forecasts
                )
            if "persistence" in models:
                result = evaluate_rolling(PersistenceForecaster(), test_series, L, H, contexts=test_contexts)
                rows += report_rows_from_result(
                    result.bucket_metrics(), name, regime, "persistence", result.n_forecasts
                )
            if "mlp" in models:
                model = _new_mlp(cfg, derive_seed(seed, name, regime, "mlp-init"))
                tc = TrainConfig(
                    epochs=regime_cfg["epochs"],
                    batch_size=regime_cfg["batch_size"],
                    lr=regime_cfg["lr"],
                    patience=regime_cfg["patience"],
                    seed=derive_seed(seed, name, regime, "mlp-train"),
                    regime="normal",
                )
                logger = JsonlLogger(logs_dir / f"{regime}-mlp.jsonl", tc.seed, chash)
                train_normal(
                    model,
                    _windows_for(train_series, L, H),
                    tc,
                    val=_windows_for(val_series, L, H),
                    log=logger,
                )
                logger.close()
                _save_model(out_dir, regime, model, chash)
                result = evaluate_rolling(model, test_series, L, H)
                rows += report_rows_from_result(
                    result.bucket_metrics(), name, regime, "mlp", result.n_forecasts
                )
        elif regime == "augmented":
            if "mlp" not in models:
                continue
            gen_cfg = simgen.GeneratorConfig.from_dict(regime_cfg["generator"])
            corpus = [
                _series_from_price(s)
                for s in simgen.generate_corpus(gen_cfg, regime_cfg["count"], regime_cfg["base_seed"])
            ]
            synth = _windows_for(corpus, regime_cfg["synthetic_lookback"], H)
            synth = d.interpolate_lookbacks(synth, L)
            real = _windows_for(train_series, L, H)
            if len(synth) > len(real):
                synth = d.subsample(synth, len(real), derive_seed(seed, name, regime, "balance"))
            elif len(synth) < len(real):
                log.warning(
                    "synthetic windows (%d) fewer than real (%d); augmenting with all of them",
                    len(synth),
                    len(real),
                )
            model = _new_mlp(cfg, derive_seed(seed, name, regime, "mlp-init"))
            tc = TrainConfig(
                epochs=regime_cfg["epochs"],
                batch_size=regime_cfg["batch_size"],
                lr=regime_cfg["lr"],
                patience=regime_cfg["patience"],
                seed=derive_seed(seed, name, regime, "mlp-train"),
                regime="augmented",
            )
            logger = JsonlLogger(logs_dir / f"{regime}-mlp.jsonl", tc.seed, chash)
            train_augmented(model, real, synth, tc, val=_windows_for(val_series, L, H), log=logger)
            logger.close()
            _save_model(out_dir, regime, model, chash)
            result = evaluate_rolling(model, test_series, L, H)
            rows += report_rows_from_result(
                result.bucket_metrics(), name, regime, "mlp", result.n_forecasts
            )
        elif regime == "meta":
            if "mlp" not in models:
                continue
            meta = _meta_config(regime_cfg)
            if cfg["dataset"]["kind"] == "synthetic":
                heads, tails = [], []
                for s in train_series + val_series + test_series:
                    head, tail = d.meta_split(s, cfg["dataset"]["meta_train_steps"])
                    heads.append(head)
                    tails.append(tail)
                per_train = max(1, regime_cfg["train_tasks"] // len(heads))
                per_test = max(1, regime_cfg["test_tasks"] // len(tails))
                train_tasks = build_meta_tasks_multi(
                    heads, L, H, per_train, meta, derive_seed(seed, name, "meta-train-tasks")
                )
                test_tasks = build_meta_tasks_multi(
                    tails, L, H, per_test, meta, derive_seed(seed, name, "meta-test-tasks")
                )
            else:
                full = d.load_csv(
                    cfg["dataset"]["path"],
                    cfg["dataset"]["value_column"],
                    source=d.SeriesSource(cfg["dataset"]["source"]),
                )
                train_stop = cfg["dataset"]["split"]["train"][1]
                head = full.slice(0, train_stop, "metatrain")
                tail = full.slice(train_stop, len(full), "metatest")
                train_tasks = build_meta_tasks_multi(
                    [head], L, H, regime_cfg["train_tasks"], meta, derive_seed(seed, name, "meta-train-tasks")
                )
                test_tasks = build_meta_tasks_multi(
                    [tail], L, H, regime_cfg["test_tasks"], meta, derive_seed(seed, name, "meta-test-tasks")
                )
            model = _new_mlp(cfg, derive_seed(seed, name, regime, "mlp-init"))
            logger = JsonlLogger(logs_dir / f"{regime}-mlp.jsonl", seed, chash)
            fomaml_train(model, train_tasks, meta, seed=derive_seed(seed, name, regime, "fomaml"), log=logger)
            logger.close()
            _save_model(out_dir, regime, model, chash)
            for label, adapted in (("meta", True), ("meta-zeroshot", False)):
                preds, actuals = evaluate_meta_tasks(model, test_tasks, meta, with_adaptation=adapted)
                rows += report_rows_from_result(
                    decompose_horizon(preds, actuals), name, label, "mlp", len(preds)
                )
    return EvalReport(config_hash=chash, seed=seed, rows=rows)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _load_config(args: argparse.Namespace) -> tuple[dict, Path]:
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out_dir"] = args.out
    cfg = resolve_config(raw)
    return cfg, Path(cfg["out_dir"])


def cmd_generate(args: argparse.Namespace) -> int:
    cfg, out_dir = _load_config(args)
    problems = validate_config(cfg)
    if problems:
        _fail("config", problems)
        return EXIT_CONFIG
    if cfg["dataset"]["kind"] != "synthetic":
        _fail("config", ["generate needs a synthetic dataset"])
        return EXIT_CONFIG
    dataset = cfg["dataset"]
    gen_cfg = simgen.GeneratorConfig.from_dict(dataset["generator"])
    corpus = simgen.generate_corpus(gen_cfg, dataset["count"], dataset["base_seed"])
    manifest = simgen.export_corpus(
        corpus,
        gen_cfg,
        dataset["base_seed"],
        out_dir / "corpus",
        provenance={"config_hash": config_hash(cfg), "seed": cfg["seed"]},
    )
    print(f"wrote {len(corpus)} series and {manifest}")
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    cfg, out_dir = _load_config(args)
    problems = validate_config(cfg)
    if problems:
        _fail("config", problems)
        return EXIT_CONFIG
    models = _filter(list(cfg["models"]), args.models, "model")
    regimes = _filter(list(cfg["regimes"]), args.regimes, "regime")
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        report = _run_benchmark(cfg, out_dir, models, regimes)
    except GradientExplosionError as exc:
        _fail("training-divergence", [str(exc)])
        return EXIT_DIVERGENCE
    except (FileNotFoundError, DataError) as exc:
        _fail("data", [str(exc)])
        return EXIT_DATA
    report.save_csv(out_dir / "report.csv")
    report.save_json(out_dir / "report.json")
    print(report.render_text())
    print(f"\nreports written to {out_dir}/report.csv and {out_dir}/report.json")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    cfg, _ = _load_config(args)
    problems = validate_config(cfg)
    if problems:
        for p in problems:
            print(f"violation: {p}")
        return EXIT_CONFIG
    print("ok")
    print(json.dumps(cfg, indent=2, sort_keys=True))
    return EXIT_OK


def _filter(configured: list[str], requested: str | None, what: str) -> list[str]:
    if requested is None:
        return configured
    wanted = [w.strip() for w in requested.split(",") if w.strip()]
    unknown = [w for w in wanted if w not in configured]
    if unknown:
        raise ConfigError(f"{what}(s) not in config: {', '.join(unknown)}")
    return [c for c in configured if c in wanted]


def _fail(kind: str, messages: list[str]) -> None:
    print(json.dumps({"status": "error", "kind": kind, "messages": messages}), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fuzzymarket",
        description="Synthetic fuzzy-demand market generation and forecasting benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("generate", cmd_generate), ("benchmark", cmd_benchmark), ("validate", cmd_validate)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="root seed (overrides config)")
        p.add_argument("--models", help="comma-separated model filter")
        p.add_argument("--regimes", help="comma-separated regime filter")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        _fail("config", [str(exc)])
        return EXIT_CONFIG
    except (FileNotFoundError, DataError) as exc:
        _fail("data", [str(exc)])
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
