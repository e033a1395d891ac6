"""CLI subcommands, exit codes, and file outputs."""

import json

import numpy as np
import pytest

from dyngp import cli


def run(argv):
    return cli.main(argv)


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, capsys):
        assert run(["simulate", "--bogus"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_subcommand(self):
        assert run(["frobnicate"]) == 1

    def test_help_exits_zero(self):
        assert run(["--help"]) == 0

    def test_runtime_error_exits_two(self, tmp_path):
        missing = str(tmp_path / "no_such.json")
        assert run(["fit", "--config", missing]) == 2


class TestSimulate:
    def test_writes_dataset(self, tmp_path):
        out = tmp_path / "ds"
        assert run(["simulate", "--seed", "7", "--out", str(out),
                    "--horizon", "200", "--boundary", "150"]) == 0
        assert (out / "data.csv").exists()
        meta = json.loads((out / "meta.json").read_text())
        assert meta["boundary"] == 150

    def test_same_seed_identical_files(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run(["simulate", "--seed", "7", "--out", str(out),
                        "--horizon", "120", "--boundary", "90"]) == 0
        assert (a / "data.csv").read_bytes() == (b / "data.csv").read_bytes()


class TestFitPredictEvaluate:
    @pytest.fixture(scope="class")
    def fit_run(self, tmp_path_factory):
        tmp = tmp_path_factory.mktemp("cli_fit")
        out = tmp / "ds"
        assert run(["simulate", "--seed", "2", "--out", str(out),
                    "--horizon", "160", "--boundary", "120"]) == 0
        config = {
            "dataset": {
                "kind": "csv",
                "path": str(out / "data.csv"),
                "schema": {"time": "t", "inputs": ["u1", "u2"], "output": "y"},
                "boundary": 120,
            },
            "architecture": [{"kind": "dynamic", "num_blocks": 2, "inducing": 15}],
            "training": {"kind": "svi", "iterations": 8, "windows_per_iter": 1,
                         "window_size": 120, "mc_samples": 2, "step": 0.02, "seed": 0},
            "prediction": {"num_samples": 20, "seed": 0},
            "standardize": True,
            "seed": 0,
            "output_dir": str(tmp / "run"),
        }
        cfg_path = tmp / "cfg.json"
        cfg_path.write_text(json.dumps(config))
        assert run(["fit", "--config", str(cfg_path)]) == 0
        return tmp, out, config

    def test_fit_emits_bundle(self, fit_run):
        tmp, _, config = fit_run
        for name in ["metrics.json", "predictions.csv", "model.json", "predictions.png"]:
            assert (tmp / "run" / name).exists()

    def test_predict_from_saved_model(self, fit_run):
        tmp, out, config = fit_run
        pred_path = tmp / "pred.csv"
        code = run([
            "predict", "--model", str(tmp / "run" / "model.json"),
            "--data", str(out / "data.csv"), "--out", str(pred_path),
            "--samples", "15", "--seed", "3",
        ])
        assert code == 0
        assert pred_path.exists()
        assert pred_path.with_suffix(".png").exists()

    def test_evaluate_point_forecast_crps_equals_mae(self, fit_run, tmp_path, capsys):
        tmp, _, _ = fit_run
        pred = tmp_path / "p.csv"
        truth = tmp_path / "t.csv"
        rng = np.random.default_rng(0)
        y = rng.standard_normal(20)
        yhat = rng.standard_normal(20)
        pred.write_text("t,mean\n" + "\n".join(f"{i},{v}" for i, v in enumerate(yhat)) + "\n")
        truth.write_text("t,y\n" + "\n".join(f"{i},{v}" for i, v in enumerate(y)) + "\n")
        assert run(["evaluate", "--pred", str(pred), "--truth", str(truth)]) == 0
        scores = json.loads(capsys.readouterr().out)
        assert scores["crps"] == pytest.approx(scores["mae"], abs=1e-12)


class TestGradcheck:
    def test_passes(self, capsys):
        assert run(["gradcheck", "--seed", "1"]) == 0
        assert "all gradient checks passed" in capsys.readouterr().out
