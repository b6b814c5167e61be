import dataclasses
import json

import numpy as np
import pytest

from sphgp import cli, synthetic
from sphgp.config import ConfigError, RunConfig, config_hash, parse_config, serialize_config


class TestConfig:
    def test_round_trip_defaults(self):
        cfg = RunConfig()
        assert parse_config(serialize_config(cfg)) == cfg

    def test_round_trip_custom(self):
        cfg = RunConfig(
            kernel="ntk", depth=4, phase_limit=17, iterations=12, data_csv="d.csv",
            schema="s.schema", beta0=2.5, test_fraction=0.25,
        )
        assert parse_config(serialize_config(cfg)) == cfg

    def test_phase_limit_full_keyword(self):
        cfg = parse_config("phase_limit = full\n")
        assert cfg.phase_limit is None
        assert "phase_limit = full" in serialize_config(cfg)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            parse_config("mystery = 3\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("seed = 1\nseed = 2\n")

    def test_bad_value(self):
        with pytest.raises(ConfigError):
            parse_config("iterations = soon\n")

    def test_validation_beta(self):
        with pytest.raises(ConfigError, match="beta0"):
            parse_config("beta0 = -1.0\n")

    def test_hash_ignores_out_root(self):
        a = RunConfig(out_root="runs")
        b = RunConfig(out_root="elsewhere")
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(RunConfig(seed=9))


@pytest.fixture(scope="module")
def regression_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli_reg")
    synthetic.write_regression_csv(tmp / "reg.csv", 300, 3, seed=5)
    (tmp / "reg.schema").write_text(synthetic.regression_schema(3))
    cfg = RunConfig(
        kernel="poly_decay",
        beta0=1.5,
        max_frequency=3,
        phase_limit=4,
        iterations=40,
        batch_size=120,
        data_csv=str(tmp / "reg.csv"),
        schema=str(tmp / "reg.schema"),
        out_root=str(tmp / "runs"),
    )
    (tmp / "run.cfg").write_text(serialize_config(cfg))
    rc = cli.main(["train", "--config", str(tmp / "run.cfg")])
    assert rc == 0
    run_dir = tmp / "runs" / config_hash(cfg)
    return tmp, cfg, run_dir


class TestTrain:
    def test_exit_zero_and_artifacts(self, regression_run):
        _, _, run_dir = regression_run
        assert (run_dir / "checkpoint.npz").exists()
        assert (run_dir / "metrics.json").exists()
        assert (run_dir / "config.cfg").exists()
        trace = (run_dir / "trace.csv").read_text().splitlines()
        assert trace[0] == "iteration,elbo,wallclock_s"
        assert len(trace) > 1

    def test_effective_config_echo_parses(self, regression_run):
        _, cfg, run_dir = regression_run
        assert parse_config((run_dir / "config.cfg").read_text()) == cfg

    def test_rerun_reproduces_metrics(self, regression_run):
        tmp, cfg, run_dir = regression_run
        before = (run_dir / "metrics.json").read_bytes()
        rc = cli.main(["train", "--config", str(tmp / "run.cfg")])
        assert rc == 0
        assert (run_dir / "metrics.json").read_bytes() == before

    def test_invalid_config_fails_before_compute(self, tmp_path, capsys):
        (tmp_path / "bad.cfg").write_text("beta0 = -2.0\n")
        rc = cli.main(["train", "--config", str(tmp_path / "bad.cfg")])
        captured = capsys.readouterr()
        assert rc == 1
        record = json.loads(captured.err.strip().splitlines()[-1])
        assert record["error"] == "ConfigError"
        assert not (tmp_path / "runs").exists()

    def test_metrics_keys_regression(self, regression_run):
        _, _, run_dir = regression_run
        metrics = json.loads((run_dir / "metrics.json").read_text())
        assert {"rmse", "mean_nll"} <= set(metrics)
        assert "auc" not in metrics


class TestEval:
    def test_eval_writes_metrics_and_predictions(self, regression_run, tmp_path):
        tmp, _, run_dir = regression_run
        out = tmp_path / "evalout"
        rc = cli.main([
            "eval",
            "--checkpoint", str(run_dir / "checkpoint.npz"),
            "--data", str(tmp / "reg.csv"),
            "--out", str(out),
        ])
        assert rc == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert set(metrics) == {"rmse", "mean_nll"}
        header = (out / "predictions.csv").read_text().splitlines()[0]
        assert header == "index,target,pred_mean,pred_var"

    def test_task_mismatch_is_typed_error(self, regression_run, tmp_path, capsys):
        tmp, _, run_dir = regression_run
        (tmp_path / "bin.schema").write_text(
            "target=y\nfeatures=x1,x2,x3\ntask=binary\n"
        )
        rc = cli.main([
            "eval",
            "--checkpoint", str(run_dir / "checkpoint.npz"),
            "--data", str(tmp / "reg.csv"),
            "--schema", str(tmp_path / "bin.schema"),
            "--out", str(tmp_path / "out"),
        ])
        captured = capsys.readouterr()
        assert rc == 1
        record = json.loads(captured.err.strip().splitlines()[-1])
        assert record["error"] == "DataError"
        assert "task" in record["message"]

    def test_dimension_mismatch_reports_both(self, regression_run, tmp_path, capsys):
        tmp, _, run_dir = regression_run
        synthetic.write_regression_csv(tmp_path / "wide.csv", 30, 5, seed=1)
        (tmp_path / "wide.schema").write_text(synthetic.regression_schema(5))
        rc = cli.main([
            "eval",
            "--checkpoint", str(run_dir / "checkpoint.npz"),
            "--data", str(tmp_path / "wide.csv"),
            "--schema", str(tmp_path / "wide.schema"),
            "--out", str(tmp_path / "out"),
        ])
        captured = capsys.readouterr()
        assert rc == 1
        record = json.loads(captured.err.strip().splitlines()[-1])
        assert "6" in record["message"] and "4" in record["message"]


class TestEigvals:
    def test_poly_rows(self, tmp_path):
        rc = cli.main([
            "eigvals", "--kernel", "poly_decay:beta=1", "--dim", "3",
            "--max-frequency", "10", "--out", str(tmp_path),
        ])
        assert rc == 0
        files = list(tmp_path.glob("*.csv"))
        assert len(files) == 1
        lines = files[0].read_text().splitlines()
        assert len(lines) == 11  # header plus frequencies 1..10

    def test_depth_ordering_of_ntk(self, tmp_path):
        rc = cli.main([
            "eigvals",
            "--kernel", "ntk:depth=2",
            "--kernel", "ntk:depth=5",
            "--dim", "3", "--max-frequency", "10", "--out", str(tmp_path),
        ])
        assert rc == 0

        def last_rel(name):
            path = next(tmp_path.glob(f"*{name}*d3.csv"))
            return float(path.read_text().splitlines()[-1].split(",")[1])

        assert last_rel("depth5") > last_rel("depth2")

    def test_composed_high_dim_suppression(self, tmp_path):
        rc = cli.main([
            "eigvals", "--kernel", "composed_relu:depth=2", "--dim", "10",
            "--max-frequency", "10", "--out", str(tmp_path),
        ])
        assert rc == 0
        path = next(tmp_path.glob("*.csv"))
        assert float(path.read_text().splitlines()[-1].split(",")[1]) <= 1e-3

    def test_unknown_kernel(self, tmp_path, capsys):
        rc = cli.main([
            "eigvals", "--kernel", "matern:nu=2.5", "--dim", "3",
            "--max-frequency", "5", "--out", str(tmp_path),
        ])
        assert rc == 1


class TestGradcheckCommand:
    def test_passes_and_is_deterministic(self, capsys):
        assert cli.main(["gradcheck", "--seed", "3"]) == 0
        first = capsys.readouterr().out
        assert cli.main(["gradcheck", "--seed", "3"]) == 0
        second = capsys.readouterr().out
        assert first == second
        assert "ok" in first

    def test_corruption_exits_nonzero(self, capsys):
        assert cli.main(["gradcheck", "--seed", "3", "--corrupt", "cov_params"]) == 1
        out = capsys.readouterr()
        assert "FAIL" in out.out


class TestShippedConfig:
    def test_shipped_synthetic_config_trains(self, tmp_path, monkeypatch):
        from pathlib import Path

        repo = Path(__file__).resolve().parents[1]
        cfg_path = repo / "configs" / "synthetic_regression.cfg"
        monkeypatch.setenv("SPHGP_DATA_DIR", str(repo))
        rc = cli.main(["train", "--config", str(cfg_path), "--out", str(tmp_path)])
        assert rc == 0
        runs = list(tmp_path.iterdir())
        assert len(runs) == 1
        trace = (runs[0] / "trace.csv").read_text().splitlines()
        assert len(trace) > 1
