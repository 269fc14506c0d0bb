import csv
import json

import numpy as np
import pytest

from fuzzymarket.cli import (
    EXIT_CONFIG,
    EXIT_DIVERGENCE,
    EXIT_OK,
    config_hash,
    main,
    resolve_config,
    validate_config,
)


def small_synthetic_config(tmp_path, **overrides):
    cfg = {
        "name": "syn-small",
        "seed": 7,
        "out_dir": str(tmp_path / "out"),
        "lookback": 5,
        "horizon": 10,
        "dataset": {
            "kind": "synthetic",
            "generator": {"series_len": 160},
            "count": 6,
            "base_seed": 500,
            "split": {"train_series": 4, "val_series": 1, "test_series": 1},
            "meta_train_steps": 100,
        },
        "models": {
            "arima": {"max_p": 1, "max_d": 1, "max_q": 0},
            "mlp": {"hidden": [12], "activation": "relu"},
            "persistence": {},
        },
        "regimes": {
            "normal": {"epochs": 3, "batch_size": 16, "lr": 0.001},
            "meta": {
                "k": 3, "r": 3, "a": 10, "inner_lr": 0.01, "inner_steps": 2,
                "meta_lr": 0.001, "meta_batch": 2, "meta_iterations": 10,
                "train_tasks": 12, "test_tasks": 6,
            },
        },
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


class TestResolveAndHash:
    def test_defaults_filled(self):
        cfg = resolve_config({"dataset": {"kind": "synthetic"}})
        assert cfg["lookback"] == 5 and cfg["horizon"] == 10
        assert cfg["dataset"]["count"] == 40
        assert cfg["dataset"]["split"]["train_series"] == 36
        assert cfg["models"]["mlp"]["hidden"] == [128, 128]
        assert "normal" in cfg["regimes"]

    def test_hash_stable_and_sensitive(self):
        a = resolve_config({"dataset": {"kind": "synthetic"}})
        b = resolve_config({"dataset": {"kind": "synthetic"}})
        assert config_hash(a) == config_hash(b)
        c = resolve_config({"dataset": {"kind": "synthetic"}, "seed": 1})
        assert config_hash(c) != config_hash(a)

    def test_out_dir_not_hashed(self):
        a = resolve_config({"dataset": {"kind": "synthetic"}, "out_dir": "x"})
        b = resolve_config({"dataset": {"kind": "synthetic"}, "out_dir": "y"})
        assert config_hash(a) == config_hash(b)


class TestValidate:
    def test_valid_config_ok(self, tmp_path):
        path, _ = small_synthetic_config(tmp_path)
        assert main(["validate", "--config", str(path)]) == EXIT_OK

    def test_m_ge_n_named_violation(self, tmp_path, capsys):
        path, _ = small_synthetic_config(tmp_path)
        cfg = json.loads(path.read_text())
        cfg["dataset"]["generator"]["m"] = 5
        path.write_text(json.dumps(cfg))
        assert main(["validate", "--config", str(path)]) == EXIT_CONFIG
        assert "m < n" in capsys.readouterr().out

    def test_missing_csv_named(self, tmp_path, capsys):
        cfg = {
            "dataset": {
                "kind": "csv",
                "path": str(tmp_path / "absent.csv"),
                "value_column": "close",
                "split": {"train": [0, 50], "val": [50, 60], "test": [60, 70]},
            }
        }
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg))
        assert main(["validate", "--config", str(path)]) == EXIT_CONFIG
        assert "absent.csv" in capsys.readouterr().out

    def test_effective_config_printed(self, tmp_path, capsys):
        path, _ = small_synthetic_config(tmp_path)
        main(["validate", "--config", str(path)])
        out = capsys.readouterr().out
        assert out.startswith("ok")
        assert '"meta_train_steps": 100' in out

    def test_infeasible_meta_offset_flagged(self, tmp_path):
        path, _ = small_synthetic_config(tmp_path)
        cfg = json.loads(path.read_text())
        cfg["regimes"]["meta"]["a"] = 50  # 60-step meta-test segment cannot host tasks
        path.write_text(json.dumps(cfg))
        problems = validate_config(resolve_config(cfg))
        assert any("cannot host tasks" in p for p in problems)

    def test_validate_mutates_nothing(self, tmp_path):
        path, cfg = small_synthetic_config(tmp_path)
        main(["validate", "--config", str(path)])
        assert not (tmp_path / "out").exists()


class TestGenerate:
    def test_writes_corpus_and_manifest(self, tmp_path):
        path, cfg = small_synthetic_config(tmp_path)
        assert main(["generate", "--config", str(path)]) == EXIT_OK
        corpus = tmp_path / "out" / "corpus"
        files = sorted(p.name for p in corpus.glob("*.csv"))
        assert files == [f"syn-{i:03d}.csv" for i in range(6)]
        manifest = json.loads((corpus / "manifest.json").read_text())
        assert manifest["count"] == 6
        rows = (corpus / "syn-000.csv").read_text().strip().splitlines()
        assert len(rows) == 161  # header + series_len

    def test_rerun_byte_identical(self, tmp_path):
        path, _ = small_synthetic_config(tmp_path)
        main(["generate", "--config", str(path), "--out", str(tmp_path / "g1")])
        main(["generate", "--config", str(path), "--out", str(tmp_path / "g2")])
        for name in ["manifest.json"] + [f"syn-{i:03d}.csv" for i in range(6)]:
            a = (tmp_path / "g1" / "corpus" / name).read_bytes()
            b = (tmp_path / "g2" / "corpus" / name).read_bytes()
            assert a == b

    def test_count_two(self, tmp_path):
        path, _ = small_synthetic_config(tmp_path)
        cfg = json.loads(path.read_text())
        cfg["dataset"]["count"] = 2
        cfg["dataset"]["split"] = {"train_series": 1, "val_series": 0, "test_series": 1}
        path.write_text(json.dumps(cfg))
        main(["generate", "--config", str(path)])
        assert len(list((tmp_path / "out" / "corpus").glob("*.csv"))) == 2


class TestBenchmark:
    def test_report_shape_and_exit(self, tmp_path):
        path, _ = small_synthetic_config(tmp_path)
        assert main(["benchmark", "--config", str(path), "--regimes", "normal"]) == EXIT_OK
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        models = {r["model"] for r in report["rows"]}
        buckets = {r["bucket"] for r in report["rows"]}
        assert models == {"arima", "mlp", "persistence"}
        assert buckets == {"step1", "step5", "steps6to10", "all10"}
        assert len(report["rows"]) == 3 * 4

    def test_persistence_on_constant_series_all_zero(self, tmp_path):
        path, _ = small_synthetic_config(tmp_path)
        cfg = json.loads(path.read_text())
        cfg["dataset"]["generator"]["init_vol"] = 0.0  # constant series
        cfg["models"] = {"persistence": {}}
        cfg["regimes"] = {"normal": {"epochs": 1}}
        path.write_text(json.dumps(cfg))
        assert main(["benchmark", "--config", str(path)]) == EXIT_OK
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert all(r["rmse"] == 0.0 and r["mape"] == 0.0 for r in report["rows"])

    def test_meta_regime_reports_adapted_and_zeroshot(self, tmp_path):
        path, _ = small_synthetic_config(tmp_path)
        assert main(["benchmark", "--config", str(path), "--regimes", "meta"]) == EXIT_OK
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        regimes = {r["regime"] for r in report["rows"]}
        assert regimes == {"meta", "meta-zeroshot"}

    def test_deterministic_reruns_byte_identical(self, tmp_path):
        path, _ = small_synthetic_config(tmp_path)
        main(["benchmark", "--config", str(path), "--out", str(tmp_path / "r1"), "--regimes", "normal"])
        main(["benchmark", "--config", str(path), "--out", str(tmp_path / "r2"), "--regimes", "normal"])
        assert (tmp_path / "r1" / "report.csv").read_bytes() == (tmp_path / "r2" / "report.csv").read_bytes()
        assert (tmp_path / "r1" / "report.json").read_bytes() == (tmp_path / "r2" / "report.json").read_bytes()

    def test_training_logs_written(self, tmp_path):
        path, _ = small_synthetic_config(tmp_path)
        main(["benchmark", "--config", str(path), "--regimes", "normal", "--models", "mlp"])
        log_path = tmp_path / "out" / "logs" / "normal-mlp.jsonl"
        records = [json.loads(line) for line in log_path.read_text().splitlines()]
        assert records and all("train_loss" in r for r in records)

    def test_unknown_model_filter_rejected(self, tmp_path, capsys):
        path, _ = small_synthetic_config(tmp_path)
        assert main(["benchmark", "--config", str(path), "--models", "lstm"]) == EXIT_CONFIG

    def test_invalid_config_exit_code(self, tmp_path):
        path, _ = small_synthetic_config(tmp_path)
        cfg = json.loads(path.read_text())
        cfg["horizon"] = 7
        path.write_text(json.dumps(cfg))
        assert main(["benchmark", "--config", str(path)]) == EXIT_CONFIG

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_exit_code(self, tmp_path):
        path, _ = small_synthetic_config(tmp_path)
        cfg = json.loads(path.read_text())
        cfg["regimes"] = {
            "meta": {
                "k": 3, "r": 3, "a": 10, "inner_lr": 1e14, "inner_steps": 30,
                "meta_lr": 0.001, "meta_batch": 2, "meta_iterations": 5,
                "train_tasks": 8, "test_tasks": 4,
            }
        }
        path.write_text(json.dumps(cfg))
        assert main(["benchmark", "--config", str(path)]) == EXIT_DIVERGENCE

    def test_csv_dataset_benchmark(self, tmp_path):
        rng = np.random.default_rng  # noqa: F841 (values below are deterministic)
        t = np.arange(400)
        values = 50.0 + 0.02 * t + 2.0 * np.sin(t / 7.0)
        csv_path = tmp_path / "series.csv"
        csv_path.write_text("close\n" + "\n".join(repr(float(v)) for v in values) + "\n")
        cfg = {
            "seed": 3,
            "out_dir": str(tmp_path / "out"),
            "lookback": 20,
            "horizon": 10,
            "dataset": {
                "kind": "csv",
                "path": str(csv_path),
                "value_column": "close",
                "source": "banknifty-like",
                "split": {"train": [0, 300], "val": [300, 350], "test": [350, 400]},
            },
            "models": {"arima": {"max_p": 1, "max_d": 1, "max_q": 0}, "mlp": {"hidden": [8]}},
            "regimes": {
                "normal": {"epochs": 2, "batch_size": 16, "lr": 0.001},
                "augmented": {
                    "epochs": 2, "batch_size": 16, "lr": 0.001,
                    "generator": {"series_len": 60}, "count": 3, "base_seed": 11,
                    "synthetic_lookback": 5,
                },
            },
        }
        path = tmp_path / "csv-config.json"
        path.write_text(json.dumps(cfg))
        assert main(["benchmark", "--config", str(path)]) == EXIT_OK
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        regimes = {r["regime"] for r in report["rows"]}
        assert regimes == {"normal", "augmented"}


def test_missing_config_file(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert json.loads(err)["kind"] == "config"
