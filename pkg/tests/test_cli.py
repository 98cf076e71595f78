# tests/test_cli.py
import pytest
import os
import sys
import json
import yaml
import pandas as pd

# Añadir la ruta raíz del proyecto al sys.path para importaciones
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.cli.app import EXIT_CONFIG, EXIT_OK, EXIT_PAIRING, EXIT_TRACES, main
from src.cli.commands import RunManifest, parse_orders
from src.cli.experiment_config import dump_experiment, load_experiment, parse_experiment, to_train_config
from src.common.exceptions import ConfigError

GAPS_FIXTURE = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'data', 'published_gaps.csv'))
EXAMPLE_CONFIG = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'config', 'experiments',
                                              'minority_hard_softadaclip.yaml'))


def _tiny_experiment(strategy="softadaclip", **train_overrides):
    train = {"epochs": 2, "expected_batch_size": 32, "learning_rate": 0.01, "optimizer": "adam", "seed": 0,
             "patience": None}
    train.update(train_overrides)
    return {
        "data": {"source": "synthetic", "name": "tiny",
                 "synthetic": {"preset": "minority-hard", "n": 300, "dim": 4, "seed": 1}},
        "model": {"preset": "linear"},
        "privacy": {"noise_multiplier": 1.0, "delta": 1.0e-5},
        "clip": {"strategy": strategy, "clip_bound": 0.1},
        "train": train,
        "analysis": {"attributes": ["sex", "age_group"], "split": "test"},
    }


def _write_config(tmp_path, document, name="exp.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(document, sort_keys=False), encoding="utf-8")
    return str(path)


def _read(path):
    with open(path, encoding="utf-8") as f:
        return f.read()


class TestExperimentConfig:
    def test_example_config_loads(self):
        exp = load_experiment(EXAMPLE_CONFIG)
        assert exp.clip.strategy == "softadaclip"
        assert exp.privacy.epsilon == 8.0
        assert exp.data.label == "minority-hard"

    def test_dump_roundtrip(self):
        exp = parse_experiment(_tiny_experiment())
        again = parse_experiment(yaml.safe_load(dump_experiment(exp)))
        assert again == exp

    def test_unknown_key_rejected(self):
        document = _tiny_experiment()
        document["clip"]["clipping_power"] = 3
        with pytest.raises(ConfigError, match="Invalid experiment config"):
            parse_experiment(document)

    def test_train_section_required(self):
        with pytest.raises(ConfigError):
            parse_experiment({"clip": {"strategy": "hard"}})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_experiment(str(tmp_path / "nope.yaml"))

    def test_non_mapping_document(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="mapping"):
            load_experiment(str(path))

    def test_to_train_config(self):
        config = to_train_config(parse_experiment(_tiny_experiment("adaptive-hard")), seed=7, threads=3)
        assert config.seed == 7 and config.threads == 3
        assert config.strategy == "adaptive-hard" and config.noise_multiplier == 1.0
        assert config.target_epsilon is None

    def test_parse_orders(self):
        assert parse_orders("8,2,4,4") == [2, 4, 8]
        assert parse_orders(None) is None
        with pytest.raises(ConfigError):
            parse_orders("2,x")
        with pytest.raises(ConfigError):
            parse_orders("1")


class TestExitCodes:
    def test_unknown_subcommand(self):
        assert main(["explode"]) == EXIT_CONFIG

    def test_calibrate_without_privacy_section(self, tmp_path):
        document = _tiny_experiment()
        del document["privacy"]
        path = _write_config(tmp_path, document)
        assert main(["calibrate", "--config", path, "--out", str(tmp_path / "out")]) == EXIT_CONFIG

    def test_analyze_published_gaps(self, tmp_path, capsys):
        out = tmp_path / "analyze"
        assert main(["analyze", "--gaps", GAPS_FIXTURE, "--out", str(out)]) == EXIT_OK
        reductions = pd.read_csv(out / "reductions.csv")
        eicu = reductions[reductions["dataset"] == "eicu_c0.1"].iloc[0]
        assert eicu["reduction_vs_hard"] == pytest.approx(52.7, abs=0.1)
        significance = pd.read_csv(out / "significance.csv")
        assert len(significance) == 6
        assert set(significance["comparisons"]) == {6}
        assert (out / "disparity_softadaclip.csv").exists()
        manifest = json.loads(_read(out / "manifest.json"))
        assert manifest["schema"] == RunManifest.SCHEMA
        assert "eicu_c0.1" in capsys.readouterr().out

    def test_unpaired_gaps(self, tmp_path, capsys):
        frame = pd.read_csv(GAPS_FIXTURE)
        frame = frame.drop(frame.index[(frame["method"] == "hard") & (frame["dataset"] == "eicu_c0.1")
                                       & (frame["attribute"] == "age")])
        path = tmp_path / "gaps.csv"
        frame.to_csv(path, index=False)
        assert main(["analyze", "--gaps", str(path), "--out", str(tmp_path / "out")]) == EXIT_PAIRING
        assert "missing hard" in capsys.readouterr().err

    def test_gradstats_without_traces(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["gradstats", str(empty), "--out", str(tmp_path / "out")]) == EXIT_TRACES


class TestCalibrate:
    def test_writes_calibrated_config_and_curve(self, tmp_path, capsys):
        document = _tiny_experiment()
        document["privacy"] = {"epsilon": 8.0, "delta": 1.0e-5}
        out = tmp_path / "cal"
        assert main(["calibrate", "--config", _write_config(tmp_path, document), "--orders", "2,4,8,16,32",
                     "--out", str(out)]) == EXIT_OK
        calibrated = load_experiment(str(out / "calibrated.yaml"))
        assert calibrated.privacy.noise_multiplier > 0
        assert calibrated.privacy.orders == [2, 4, 8, 16, 32]
        curve = pd.read_csv(out / "epsilon_curve.csv")
        assert list(curve["order"]) == [2, 4, 8, 16, 32]
        assert curve["epsilon"].min() <= 8.0 + 1e-3
        assert "sigma =" in capsys.readouterr().out


class TestTrainAndSweep:
    def test_train_writes_run_directory(self, tmp_path):
        out = tmp_path / "run"
        assert main(["train", "--config", _write_config(tmp_path, _tiny_experiment()), "--out", str(out)]) == EXIT_OK
        for name in ("epochs.jsonl", "steps.jsonl", "subgroups.json", "result.json", "gaps.csv", "params.npy",
                     "manifest.json"):
            assert (out / name).exists(), name
        manifest = RunManifest.from_dict(json.loads(_read(out / "manifest.json")))
        assert manifest.method == "softadaclip" and manifest.dataset == "tiny"
        assert manifest.missing_outputs(str(out)) == []
        result = json.loads(_read(out / "result.json"))
        assert set(result["disparity"]["gaps"]) == {"sex", "age_group"}
        assert result["epsilon"] > 0
        gaps = pd.read_csv(out / "gaps.csv")
        assert list(gaps.columns) == ["method", "dataset", "seed", "attribute", "gap"]

    def test_single_seed_sweep_has_empty_sem(self, tmp_path):
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", _write_config(tmp_path, _tiny_experiment()), "--seeds", "1",
                     "--out", str(out)]) == EXIT_OK
        summary = pd.read_csv(out / "summary.csv", keep_default_na=False)
        assert set(summary["sem"]) == {""}
        assert set(summary["n"]) == {1}
        loss_gaps = pd.read_csv(out / "loss_gaps.csv")
        assert list(loss_gaps["attribute"]) == ["sex", "age_group", "average"]
        assert (out / "seed_0" / "manifest.json").exists()

    def test_sweep_threads_do_not_change_outputs(self, tmp_path):
        path = _write_config(tmp_path, _tiny_experiment())
        one, many = tmp_path / "one", tmp_path / "many"
        assert main(["sweep", "--config", path, "--seeds", "2", "--threads", "1", "--out", str(one)]) == EXIT_OK
        assert main(["sweep", "--config", path, "--seeds", "2", "--threads", "2", "--out", str(many)]) == EXIT_OK
        for name in ("summary.csv", "gaps.csv", "loss_gaps.csv", "overall_loss.csv",
                     os.path.join("seed_1", "epochs.jsonl"), os.path.join("seed_1", "steps.jsonl")):
            assert _read(one / name) == _read(many / name), name

    def test_analyze_and_gradstats_over_runs(self, tmp_path):
        dirs = []
        for strategy in ("hard", "softadaclip"):
            out = tmp_path / strategy
            config = _write_config(tmp_path, _tiny_experiment(strategy), name=f"{strategy}.yaml")
            assert main(["train", "--config", config, "--out", str(out)]) == EXIT_OK
            dirs.append(str(out))

        analyze = tmp_path / "analyze"
        assert main(["analyze", *dirs, "--out", str(analyze)]) == EXIT_OK
        reductions = pd.read_csv(analyze / "reductions.csv")
        assert list(reductions["dataset"]) == ["tiny"]
        assert "reduction_vs_hard" in reductions.columns

        stats = tmp_path / "gradstats"
        assert main(["gradstats", *dirs, "--out", str(stats)]) == EXIT_OK
        table = pd.read_csv(stats / "gradstats.csv")
        assert list(table.columns) == ["subgroup", "hard", "softadaclip"]
        assert set(table["subgroup"]) == {"sex=0", "sex=1", "age_group=0", "age_group=1"}
