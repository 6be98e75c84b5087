"""Command-line contract tests: flags, files written, exit codes,
determinism, and stdout/stderr discipline."""

import json
import subprocess
import sys

import numpy as np
import pytest

from iarn.cli import main
from iarn.data import parse_csv


def run_cli(argv):
    """Invoke the CLI in-process; argparse usage errors become exit codes."""
    try:
        return main(argv)
    except SystemExit as exc:
        return int(exc.code or 0)


@pytest.fixture()
def sine_csv(tmp_path):
    path = tmp_path / "flow.csv"
    assert run_cli(["synth", "--kind", "sine", "--n", "200", "--noise", "0.1",
                    "--seed", "1", "--out", str(path)]) == 0
    return path


def train_args(data, out, **over):
    args = {
        "--window": "8", "--hidden": "3", "--blocks": "2",
        "--epochs": "3", "--batch-size": "64", "--seed": "7",
    }
    args.update(over)
    argv = ["train", "--data", str(data), "--out", str(out)]
    for k, v in args.items():
        argv += [k, v]
    return argv


class TestSynth:
    def test_writes_deterministic_csv(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        code1 = run_cli(["synth", "--kind", "sine", "--n", "100", "--noise", "0",
                         "--seed", "1", "--out", str(a)])
        code2 = run_cli(["synth", "--kind", "sine", "--n", "100", "--noise", "0",
                         "--seed", "1", "--out", str(b)])
        assert code1 == code2 == 0
        assert a.read_bytes() == b.read_bytes()
        assert len(parse_csv(a)) == 100

    def test_round_trips_through_parser(self, sine_csv):
        records = parse_csv(sine_csv)
        assert len(records) == 200

    def test_unknown_kind_exits_2_with_usage(self, tmp_path, capsys):
        code = run_cli(["synth", "--kind", "bogus", "--out", str(tmp_path / "x.csv")])
        assert code == 2
        assert "usage" in capsys.readouterr().err

    def test_stdout_mode(self, capsys):
        assert run_cli(["synth", "--kind", "sine", "--n", "3", "--noise", "0"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("timestamp,value\n")
        assert len(out.strip().splitlines()) == 4

    def test_writes_manifest(self, sine_csv):
        manifest = sine_csv.parent / "flow.manifest.json"
        doc = json.loads(manifest.read_text())
        assert doc["command"] == "synth"
        assert doc["seeds"] == {"noise": 1}
        assert doc["config"]["kind"] == "sine"


class TestTrain:
    def test_writes_model_history_manifest(self, tmp_path, sine_csv, capsys):
        out = tmp_path / "model.json"
        assert run_cli(train_args(sine_csv, out)) == 0
        assert out.exists()
        history = (tmp_path / "model.history.csv").read_text().splitlines()
        assert history[0] == "epoch,train_loss,val_loss,seconds"
        assert len(history) == 1 + 3  # header + one row per epoch
        manifest = json.loads((tmp_path / "model.manifest.json").read_text())
        assert manifest["seeds"] == {"init": 7, "shuffle": 7}
        # final train loss is the stdout payload
        final = float(capsys.readouterr().out.strip())
        assert np.isfinite(final)

    def test_zero_epochs_exits_2(self, tmp_path, sine_csv):
        out = tmp_path / "model.json"
        assert run_cli(train_args(sine_csv, out, **{"--epochs": "0"})) == 2
        assert not out.exists()

    def test_same_seed_byte_identical_models(self, tmp_path, sine_csv):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run_cli(train_args(sine_csv, a)) == 0
        assert run_cli(train_args(sine_csv, b)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_split_seeds_change_result(self, tmp_path, sine_csv):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run_cli(train_args(sine_csv, a)) == 0
        assert run_cli(train_args(sine_csv, b, **{"--init-seed": "99"})) == 0
        assert a.read_bytes() != b.read_bytes()

    def test_does_not_mutate_input(self, tmp_path, sine_csv):
        before = sine_csv.read_bytes()
        assert run_cli(train_args(sine_csv, tmp_path / "m.json")) == 0
        assert sine_csv.read_bytes() == before

    def test_failure_leaves_no_partial_model(self, tmp_path, sine_csv):
        out = tmp_path / "model.json"
        # window larger than the training split
        code = run_cli(train_args(sine_csv, out, **{"--window": "500"}))
        assert code == 2
        assert not out.exists()

    def test_malformed_csv_is_runtime_failure(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("timestamp,value\n2017-01-01T00:00:00Z,abc\n")
        code = run_cli(train_args(bad, tmp_path / "m.json"))
        assert code == 1


class TestEvaluate:
    def test_writes_metrics_and_predictions(self, tmp_path, sine_csv):
        model = tmp_path / "model.json"
        assert run_cli(train_args(sine_csv, model)) == 0
        prefix = tmp_path / "eval"
        assert run_cli(["evaluate", "--model", str(model), "--data", str(sine_csv),
                        "--out-prefix", str(prefix)]) == 0
        metrics = json.loads((tmp_path / "eval.metrics.json").read_text())
        assert set(metrics) >= {"rmse", "mae", "mape_percent", "evs",
                                "rmse_normalized", "mae_normalized", "n"}
        pred_lines = (tmp_path / "eval.predictions.csv").read_text().splitlines()
        # 200 records, 0.8 split -> 40 test rows
        assert pred_lines[0] == "timestamp,actual,predicted"
        assert len(pred_lines) == 1 + 40
        table = (tmp_path / "eval.metrics.csv").read_text().splitlines()
        assert table[0] == "rmse,mae,mape_percent,evs"
        assert float(table[1].split(",")[0]) == metrics["rmse_normalized"]

    def test_window_too_long_for_data_exits_2(self, tmp_path, sine_csv):
        model = tmp_path / "model.json"
        assert run_cli(train_args(sine_csv, model)) == 0
        short = tmp_path / "short.csv"
        # split 0.8 of 8 records leaves a 7-record train split < window 8
        assert run_cli(["synth", "--kind", "sine", "--n", "8", "--noise", "0",
                        "--out", str(short)]) == 0
        code = run_cli(["evaluate", "--model", str(model), "--data", str(short),
                        "--out-prefix", str(tmp_path / "e")])
        assert code == 2


class TestPredict:
    def test_steps_emit_that_many_values(self, tmp_path, sine_csv, capsys):
        model = tmp_path / "model.json"
        assert run_cli(train_args(sine_csv, model)) == 0
        capsys.readouterr()
        assert run_cli(["predict", "--model", str(model), "--data", str(sine_csv),
                        "--steps", "3"]) == 0
        values = [float(v) for v in capsys.readouterr().out.split()]
        assert len(values) == 3

    def test_out_file_and_manifest(self, tmp_path, sine_csv):
        model = tmp_path / "model.json"
        assert run_cli(train_args(sine_csv, model)) == 0
        out = tmp_path / "preds.txt"
        assert run_cli(["predict", "--model", str(model), "--data", str(sine_csv),
                        "--steps", "2", "--out", str(out)]) == 0
        assert len(out.read_text().split()) == 2
        assert (tmp_path / "preds.manifest.json").exists()

    def test_too_few_records_exits_2(self, tmp_path, sine_csv):
        model = tmp_path / "model.json"
        assert run_cli(train_args(sine_csv, model)) == 0
        tiny = tmp_path / "tiny.csv"
        assert run_cli(["synth", "--kind", "sine", "--n", "4", "--noise", "0",
                        "--out", str(tiny)]) == 0
        assert run_cli(["predict", "--model", str(model), "--data", str(tiny)]) == 2

    def test_missing_model_file_is_runtime_failure(self, tmp_path, sine_csv):
        assert run_cli(["predict", "--model", str(tmp_path / "none.json"),
                        "--data", str(sine_csv)]) == 1


class TestGradcheck:
    def test_passes_by_default(self, capsys):
        assert run_cli(["gradcheck", "--seed", "0"]) == 0
        assert float(capsys.readouterr().out.strip()) < 1e-4

    def test_zero_threshold_always_fails(self):
        assert run_cli(["gradcheck", "--threshold", "0"]) == 1

    def test_seed_varies_case_not_contract(self):
        for seed in range(4):
            assert run_cli(["gradcheck", "--seed", str(seed)]) == 0


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        # One subprocess check that the installed entry point works.
        out = tmp_path / "s.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "iarn.cli", "synth", "--kind", "sine",
             "--n", "5", "--noise", "0", "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert out.exists()
