"""Command-line interface: exit codes, files, config handling."""

import json

from derivnet import cli, network


def run_cli(argv, monkeypatch=None, env=None):
    if env and monkeypatch:
        for k, v in env.items():
            monkeypatch.setenv(k, v)
    return cli.main(argv)


class TestGradcheckCommand:
    def test_default_small_net_passes(self, capsys):
        assert run_cli(["gradcheck", "--net", "2,8,8,1", "--order", "2", "--probes", "15"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_corrupted_fixture_fails(self, capsys):
        code = run_cli(["gradcheck", "--net", "2,6,1", "--order", "1", "--probes", "8", "--corrupt"])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out

    def test_invalid_flag_usage_error(self, capsys):
        assert run_cli(["gradcheck", "--order", "9"]) == 2


class TestTrainCommand:
    def test_smoke_run_produces_files(self, tmp_path, capsys):
        outdir = tmp_path / "out"
        code = run_cli([
            "train", "--task", "approx2d", "--net", "2,6,1", "--order", "1",
            "--lambda", "0.8", "--test-lambda", "0.45", "--epochs", "10",
            "--outdir", str(outdir),
        ])
        assert code == 0
        summary = json.loads((outdir / "summary.json").read_text())
        assert summary["epochs"] == 10
        trace = (outdir / "trace.csv").read_text().splitlines()
        assert trace[0].startswith("# config")
        assert len(trace) == 2 + 10  # header comment + csv header + rows
        params = network.load_checkpoint(outdir / "weights.dnwt")
        assert params.sizes == (2, 6, 1)

    def test_same_config_and_seed_identical_summaries(self, tmp_path):
        args = [
            "train", "--task", "approx2d", "--net", "2,6,1", "--order", "0",
            "--lambda", "0.9", "--test-lambda", "0.45", "--epochs", "8", "--seed", "3",
        ]
        run_cli(args + ["--outdir", str(tmp_path / "a")])
        run_cli(args + ["--outdir", str(tmp_path / "b")])
        assert (tmp_path / "a/summary.json").read_bytes() == (tmp_path / "b/summary.json").read_bytes()
        assert (tmp_path / "a/weights.dnwt").read_bytes() == (tmp_path / "b/weights.dnwt").read_bytes()

    def test_unreadable_config_exits_2(self, tmp_path):
        assert run_cli(["train", "--config", str(tmp_path / "missing.json")]) == 2

    def test_unknown_config_keys_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"task": "approx2d", "net": [2, 6, 1], "lambda": 0.9, "typo": 1}))
        assert run_cli(["train", "--config", str(path)]) == 2

    def test_config_file_drives_run(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "task": "approx2d", "net": [2, 6, 1], "order": 1, "lambda": 0.8,
            "test_lambda": 0.45, "max_epochs": 6,
        }))
        outdir = tmp_path / "out"
        assert run_cli(["train", "--config", str(path), "--outdir", str(outdir)]) == 0
        summary = json.loads((outdir / "summary.json").read_text())
        assert summary["epochs"] == 6

    def test_flag_overrides_config(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "task": "approx2d", "net": [2, 6, 1], "order": 1, "lambda": 0.8,
            "test_lambda": 0.45, "max_epochs": 6,
        }))
        outdir = tmp_path / "out"
        assert run_cli(["train", "--config", str(path), "--epochs", "4", "--outdir", str(outdir)]) == 0
        summary = json.loads((outdir / "summary.json").read_text())
        assert summary["epochs"] == 4

    def test_numeric_failure_exits_3(self, tmp_path, capsys):
        # an absurd initial step blows the cost up to inf on the first epochs
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "task": "approx2d", "net": [2, 6, 1], "order": 0, "lambda": 0.9,
            "test_lambda": 0.45, "max_epochs": 5, "delta0": 1e30,
        }))
        code = run_cli(["train", "--config", str(path), "--outdir", str(tmp_path / "out")])
        assert code == 3

    def test_env_seed_overrides_config(self, tmp_path, monkeypatch):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "task": "approx2d", "net": [2, 6, 1], "order": 0, "lambda": 0.9,
            "test_lambda": 0.45, "max_epochs": 5, "seed": 1,
        }))
        monkeypatch.setenv("DERIVNET_SEED", "777")
        outdir = tmp_path / "out"
        assert run_cli(["train", "--config", str(path), "--outdir", str(outdir)]) == 0
        summary = json.loads((outdir / "summary.json").read_text())
        assert summary["config"]["seed"] == 777


class TestExperimentCommand:
    def test_tiny_sweep_writes_all_artifacts(self, tmp_path):
        outdir = tmp_path / "exp"
        code = run_cli([
            "experiment", "poisson2d", "--repeats", "1", "--grids", "2",
            "--epochs", "8", "--test-lambda", "0.3", "--outdir", str(outdir),
        ])
        assert code == 0
        assert (outdir / "runs.csv").exists()
        assert (outdir / "aggregates.csv").exists()
        # deq4-style plot data present for the boundary value problem
        assert (outdir / "plotdata" / "deq4.txt").exists()
        header = (outdir / "runs.csv").read_text().splitlines()[1]
        assert header.split(",") == [
            "task", "mode", "s", "net", "lambda", "M", "N", "repeat", "epochs",
            "best_epoch", "train_rms_e0", "test_rms_e0", "log10_ratio", "max_dev",
            "delta_median", "wall_seconds", "seed", "status",
        ]

    def test_var_order_writes_five_curves(self, tmp_path):
        outdir = tmp_path / "vo"
        code = run_cli([
            "experiment", "var-order", "--repeats", "1", "--grids", "1",
            "--epochs", "6", "--test-lambda", "0.55", "--outdir", str(outdir),
        ])
        assert code == 0
        body = (outdir / "plotdata" / "varORD.txt").read_text()
        assert body.count("# curve:") == 5


class TestGenGridCommand:
    def test_disk_small_grid(self, tmp_path, capsys):
        out = tmp_path / "g.txt"
        assert run_cli(["gen-grid", "--domain", "disk2d", "--lambda", "1.62",
                        "--seed", "4", "--out", str(out)]) == 0
        rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert 2 <= len(rows) <= 4  # ~3 points at this spacing

    def test_fixed_seed_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        for path in (a, b):
            run_cli(["gen-grid", "--domain", "box2d", "--lambda", "0.4",
                     "--seed", "9", "--out", str(path)])
        assert a.read_bytes() == b.read_bytes()

    def test_box_dense_count(self, tmp_path):
        out = tmp_path / "g.txt"
        assert run_cli(["gen-grid", "--domain", "box2d", "--lambda", "0.073",
                        "--seed", "1", "--out", str(out)]) == 0
        rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert abs(len(rows) - 804) / 804 < 0.15

    def test_bad_lambda_usage_error(self, tmp_path):
        assert run_cli(["gen-grid", "--domain", "box2d", "--lambda", "-1",
                        "--out", str(tmp_path / "g.txt")]) == 2


class TestReportCommand:
    def test_round_trip_aggregation(self, tmp_path):
        outdir = tmp_path / "exp"
        run_cli(["experiment", "approx2d", "--repeats", "2", "--grids", "1",
                 "--epochs", "6", "--test-lambda", "0.45", "--outdir", str(outdir)])
        agg_out = tmp_path / "re-agg.csv"
        assert run_cli(["report", str(outdir / "runs.csv"), "--out", str(agg_out)]) == 0
        # aggregate content matches the sweep's own aggregate file
        def payload(path):
            return [l for l in path.read_text().splitlines() if not l.startswith("#")]
        assert payload(agg_out) == payload(outdir / "aggregates.csv")

    def test_bad_file_usage_error(self, tmp_path):
        assert run_cli(["report", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o.csv")]) == 2
