"""コマンドライン（終了コードと出力ファイル）のテスト"""

import json

import numpy as np
import pandas as pd
import pytest
import yaml

from cli import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, main
from domains import save_domain_csv
from weights import SymWeights, save_weights


def _write_yaml(path, raw):
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(raw, f)
    return path


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = _write_yaml(root / "simulate.yaml", {
        "gamma_m": [0.01, 0.1, 1.0],
        "cv": {"scheme": "link", "prob": 0.2, "replicates": 4},
        "simulation": {
            "p": [2, 3], "n": [50, 75],
            "sampling_scheme": "link", "sampling_prob": 0.5,
        },
        "seed": 1,
        "output_dir": "sim",
    })
    assert main(["simulate", "--config", str(config)]) == EXIT_OK
    return root / "sim"


@pytest.fixture
def degenerate_config(tmp_path):
    """X = I、W = K4 の問題（固有値が縮退する）"""
    save_domain_csv(np.eye(4), tmp_path / "x.csv")
    rows, cols = np.tril_indices(4, -1)
    save_weights(SymWeights(4, rows, cols, np.ones(rows.size)), tmp_path / "w.txt")
    return _write_yaml(tmp_path / "run.yaml", {
        "domains": [{"name": "x", "file": "x.csv", "p": 4}],
        "weights": "w.txt",
        "output_dir": "out",
    })


class TestSimulate:

    def test_writes_dataset_and_run_config(self, simulated):
        for name in ("domain1.csv", "domain2.csv", "wbar.txt", "weights.txt",
                     "assignments.csv", "manifest.yaml", "run.yaml"):
            assert (simulated / name).exists()
        with open(simulated / "run.yaml", encoding="utf-8") as f:
            run = yaml.safe_load(f)
        assert run["weights"] == "weights.txt"
        assert run["truth"] == {"wbar": "wbar.txt", "epsilon": 0.5}
        assert run["seed"] == 1

    def test_run_log_reports_structure(self, simulated):
        with open(simulated / "run_simulate.json", encoding="utf-8") as f:
            summary = json.load(f)["summary"]
        assert summary["sampled"] is True
        structure = summary["structure"]
        assert structure["gamma_M"] == 0.01
        assert sum(structure["signature"]) == 5
        assert structure["ratio"] == pytest.approx(structure["within"] / structure["between"])


class TestErrors:

    def test_report(self, simulated, tmp_path):
        out = tmp_path / "errors"
        code = main(["errors", "--config", str(simulated / "run.yaml"), "--out", str(out)])
        assert code == EXIT_OK
        frame = pd.read_csv(out / "errors.csv")
        assert len(frame) == 3 * 5
        assert frame["phi_true"].notna().all()
        assert len(pd.read_csv(out / "errors_totals.csv")) == 3
        assert (out / "run_errors.json").exists()

    def test_same_seed_same_bytes(self, simulated, tmp_path):
        for name in ("a", "b"):
            main(["errors", "--config", str(simulated / "run.yaml"), "--out", str(tmp_path / name)])
        assert (tmp_path / "a" / "errors.csv").read_bytes() == \
            (tmp_path / "b" / "errors.csv").read_bytes()

    def test_overrides(self, simulated, tmp_path):
        code = main([
            "errors", "--config", str(simulated / "run.yaml"), "--out", str(tmp_path),
            "--gamma-m", "0.1", "--seed", "8",
        ])
        assert code == EXIT_OK
        assert pd.read_csv(tmp_path / "errors.csv")["gamma_M"].unique().tolist() == [0.1]

    def test_seed_required(self, degenerate_config):
        assert main(["errors", "--config", str(degenerate_config)]) == EXIT_INPUT


class TestFitAndTransform:

    @pytest.fixture
    def model_dir(self, simulated, tmp_path):
        out = tmp_path / "fit"
        assert main(["fit", "--config", str(simulated / "run.yaml"), "--out", str(out)]) == EXIT_OK
        return out

    def test_fit_outputs(self, model_dir):
        assert (model_dir / "model.npz").exists()
        lambdas = pd.read_csv(model_dir / "lambdas.csv")
        assert lambdas["k"].tolist() == [1, 2, 3, 4, 5]
        assert np.all(np.diff(lambdas["lambda"]) <= 0)

    @pytest.mark.slow
    def test_fit_full_size_positive_count(self, tmp_path, capsys):
        config = _write_yaml(tmp_path / "simulate.yaml", {
            "simulation": {"sampling_scheme": "link", "sampling_prob": 0.04},
            "seed": 0,
            "output_dir": "sim",
        })
        assert main(["simulate", "--config", str(config)]) == EXIT_OK
        out = tmp_path / "fit"
        code = main([
            "fit", "--config", str(tmp_path / "sim" / "run.yaml"),
            "--gamma-m", "0.1", "--out", str(out),
        ])
        assert code == EXIT_OK
        assert "K+ = 40（正 40 / ゼロ 60 / 負 40）" in capsys.readouterr().out
        with open(out / "run_fit.json", encoding="utf-8") as f:
            summary = json.load(f)["summary"]
        assert (summary["K"], summary["K_plus"]) == (140, 40)
        assert summary["signature"] == [40, 60, 40]

    @pytest.mark.parametrize("neighbors", [0, 2])
    def test_transform(self, simulated, model_dir, tmp_path, neighbors):
        out = tmp_path / "transform"
        code = main([
            "transform", "--config", str(simulated / "run.yaml"), "--out", str(out),
            "--model", str(model_dir / "model.npz"), "--query", str(simulated / "domain1.csv"),
            "--domain", "domain1", "--neighbors", str(neighbors),
        ])
        assert code == EXIT_OK
        embedding = pd.read_csv(out / "embedding.csv")
        assert list(embedding.columns) == ["query", "y1", "y2", "y3", "y4", "y5"]
        assert len(embedding) == 50
        if neighbors:
            table = pd.read_csv(out / "neighbors.csv")
            assert len(table) == 50 * neighbors
            assert set(table["domain"]) == {"domain2"}
        else:
            assert not (out / "neighbors.csv").exists()

    def test_transform_unknown_domain(self, simulated, model_dir, tmp_path):
        code = main([
            "transform", "--config", str(simulated / "run.yaml"), "--out", str(tmp_path),
            "--model", str(model_dir / "model.npz"), "--query", str(simulated / "domain1.csv"),
            "--domain", "audio",
        ])
        assert code == EXIT_INPUT


class TestOracle:

    def test_outputs(self, simulated, tmp_path):
        code = main(["oracle", "--config", str(simulated / "run.yaml"), "--out", str(tmp_path)])
        assert code == EXIT_OK
        for name in ("oracle_bias.csv", "oracle_perturbation.csv", "oracle_fit_expansion.csv"):
            assert (tmp_path / name).exists()
        assert pd.read_csv(tmp_path / "oracle_bias.csv")["epsilon"].eq(0.5).all()

    def test_degenerate_spectrum_exit_code(self, degenerate_config):
        assert main(["oracle", "--config", str(degenerate_config)]) == EXIT_NUMERICAL


class TestInputErrors:

    def test_missing_config(self, tmp_path):
        assert main(["fit", "--config", str(tmp_path / "none.yaml")]) == EXIT_INPUT

    def test_missing_weights_names_path(self, tmp_path, caplog):
        save_domain_csv(np.ones((3, 1)), tmp_path / "x.csv")
        config = _write_yaml(tmp_path / "run.yaml", {
            "domains": [{"name": "x", "file": "x.csv", "p": 1}],
            "weights": "missing_weights.txt",
        })
        assert main(["fit", "--config", str(config), "--out", str(tmp_path / "o")]) == EXIT_INPUT
        assert "missing_weights.txt" in caplog.text

    def test_bad_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("domains: [unclosed\n")
        assert main(["fit", "--config", str(path)]) == EXIT_INPUT

    def test_unknown_key(self, tmp_path):
        config = _write_yaml(tmp_path / "run.yaml", {"gama_m": 0.1})
        assert main(["fit", "--config", str(config)]) == EXIT_INPUT
