"""Tests for the command-line entry point and run artifacts."""

import json

import pandas as pd
import pytest

from privquery.cli import main as cli_main
from privquery.cli.main import build_parser, main
from privquery.models.dataset import LabeledDataset
from privquery.models.experiment import ExperimentConfig
from privquery.services.harness import execute_trial
from privquery.services.verification import CheckResult, VerificationReport
from privquery.utils.exceptions import EXIT_ERROR, EXIT_OK, EXIT_VERIFICATION_FAILED

pytestmark = pytest.mark.unit


def _write_config(path, **overrides):
    values = {
        "schema_version": 1,
        "name": "cli",
        "mode": '"agnostic"',
        "truth": "[0.5]",
        "noise_rate": 0.2,
        "n": 56000,
        "m": 20,
        "epsilon": 1.0,
        "delta": 0.05,
        "alpha": 0.1,
        "beta": 0.1,
        "scale_factor": 0.001,
        "trials": 2,
        "seed": 7,
    }
    values.update(overrides)
    lines = [f"{k} = {v}" if k != "name" else f'name = "{v}"' for k, v in values.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_parser_rejects_unknown_mutation():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["verify", "--mutate", "nothing"])


def test_log_level_is_case_insensitive():
    args = build_parser().parse_args(["--log-level", "debug", "verify"])
    assert args.log_level == "DEBUG"


class TestRun:
    def test_writes_artifacts(self, tmp_path, capsys):
        config = _write_config(tmp_path / "exp.toml")
        out = tmp_path / "out"
        assert main(["run", str(config), "--trace", "--output-dir", str(out), "--workers", "1"]) == EXIT_OK

        results = [json.loads(line) for line in (out / "results.jsonl").read_text().splitlines()]
        assert [r["trial"] for r in results] == [0, 1]
        trace = [json.loads(line) for line in (out / "trace.jsonl").read_text().splitlines()]
        assert len(trace) == 2 * (20 + 1)
        assert "summary" in trace[20] and trace[21]["trial"] == 1

        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 7
        assert manifest["schema_version"] == 1
        assert manifest["scaled_constants"]["scale_factor"] == 0.001
        assert manifest["canonical_constants"]["n_prime"] == 1000
        assert pd.read_csv(out / "summary.csv")["trials"].tolist() == [2]
        assert json.loads(capsys.readouterr().out)["trials"] == 2

    def test_save_data_writes_readable_csv(self, tmp_path):
        config = _write_config(tmp_path / "exp.toml")
        out = tmp_path / "out"
        assert main(["run", str(config), "--save-data", "--output-dir", str(out), "--workers", "1"]) == EXIT_OK
        assert sorted(p.name for p in (out / "data").iterdir()) == [
            "trial-0-queries.csv",
            "trial-0-sample.csv",
            "trial-1-queries.csv",
            "trial-1-sample.csv",
        ]
        sample = LabeledDataset.from_csv(out / "data" / "trial-1-sample.csv")
        expected = execute_trial(ExperimentConfig.from_toml(config), 1, keep_data=True)
        assert len(sample) == 56000
        assert sample.equals(expected.sample)
        queries = LabeledDataset.from_csv(out / "data" / "trial-1-queries.csv")
        assert queries.equals(expected.queries)
        assert len(queries) == 20

    def test_no_data_without_flag(self, tmp_path):
        config = _write_config(tmp_path / "exp.toml", trials=1)
        out = tmp_path / "out"
        assert main(["run", str(config), "--output-dir", str(out), "--workers", "1"]) == EXIT_OK
        assert not (out / "data").exists()

    def test_rerun_is_identical(self, tmp_path):
        config = _write_config(tmp_path / "exp.toml")
        for name in ("a", "b"):
            assert main(["run", str(config), "--trace", "--output-dir", str(tmp_path / name)]) == EXIT_OK
        assert (tmp_path / "a" / "trace.jsonl").read_bytes() == (tmp_path / "b" / "trace.jsonl").read_bytes()

    def test_infeasible_exits_with_error(self, tmp_path, capsys):
        config = _write_config(tmp_path / "exp.toml", n=100)
        out = tmp_path / "out"
        assert main(["run", str(config), "--output-dir", str(out)]) == EXIT_ERROR
        assert "error:" in capsys.readouterr().err
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["extra"]["error"]["code"] == "INFEASIBLE_PARAMETERS"

    def test_bad_config_exits_with_error(self, tmp_path):
        config = _write_config(tmp_path / "exp.toml", schema_version=9)
        assert main(["run", str(config), "--output-dir", str(tmp_path / "out")]) == EXIT_ERROR

    def test_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.toml")]) == EXIT_ERROR


def test_sweep_writes_table(tmp_path, capsys):
    config = _write_config(tmp_path / "grid.toml", trials=1, sweep_n="[100, 56000]")
    out = tmp_path / "out"
    assert main(["sweep", str(config), "--output-dir", str(out)]) == EXIT_OK
    table = pd.read_csv(out / "sweep.csv")
    assert table["n"].tolist() == [100, 56000]
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["extra"]["failed_cells"]) == 1
    assert json.loads(capsys.readouterr().out)["cells"] == 2


def test_sweep_with_invalid_axis_exits_with_error(tmp_path, capsys):
    config = _write_config(tmp_path / "grid.toml", trials=1, sweep_noise_rate="[0.1, 0.7]")
    out = tmp_path / "out"
    assert main(["sweep", str(config), "--output-dir", str(out)]) == EXIT_ERROR
    assert "sweep_noise_rate" in capsys.readouterr().err
    assert not (out / "sweep.csv").exists()


class TestVerify:
    def test_passing_suite(self, mocker):
        suite = mocker.patch(
            "privquery.cli.commands.verify_suite",
            return_value=VerificationReport([CheckResult("stub", True)]),
        )
        assert main(["verify", "--seed", "3", "--check", "dichotomy_counts"]) == EXIT_OK
        suite.assert_called_once_with(3, [], ["dichotomy_counts"])

    def test_mutated_check_fails(self, capsys):
        code = main(["verify", "--mutate", "overlapping_blocks", "--check", "single_record_influence"])
        assert code == EXIT_VERIFICATION_FAILED
        assert json.loads(capsys.readouterr().out)["passed"] is False


def test_library_errors_are_logged(tmp_path, mocker):
    log = mocker.patch.object(cli_main, "log_exception")
    main(["run", str(tmp_path / "nope.toml")])
    log.assert_called_once()
