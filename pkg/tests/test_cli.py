"""Command-line surface: subcommands end to end and exit codes"""
import pandas as pd
import pytest
import yaml
from click.testing import CliRunner

from cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, cli, run
from tests.conftest import synthetic_cohort_spec


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("AVNODE_OUTPUT_DIR", raising=False)


@pytest.fixture
def cohort_spec_file(tmp_path):
    path = tmp_path / "cohort.yaml"
    path.write_text(yaml.safe_dump(synthetic_cohort_spec()))
    return path


def test_help_lists_subcommands():
    result = CliRunner().invoke(cli, ["--help"])
    assert result.exit_code == 0
    for name in ("synth", "ingest", "estimate", "reduce", "trends", "report"):
        assert name in result.output


def test_unknown_subcommand_is_usage_error(config_file):
    assert run(["--config", str(config_file), "frobnicate"]) == EXIT_USAGE


def test_missing_config_is_usage_error(tmp_path):
    assert run(["--config", str(tmp_path / "absent.yaml"), "ingest"]) == EXIT_USAGE


def test_invalid_config_is_usage_error(tmp_path, raw_config):
    raw_config["abc"]["threshold_ranks"] = [10, 8]
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(raw_config))
    assert run(["--config", str(path), "ingest"]) == EXIT_USAGE


def test_missing_rr_directory_is_data_error(config_file):
    assert run(["--config", str(config_file), "ingest"]) == EXIT_DATA


def test_report_without_patients_is_data_error(config_file):
    assert run(["--config", str(config_file), "report"]) == EXIT_DATA


def test_full_run(tmp_path, config_file, cohort_spec_file):
    config = ["--config", str(config_file)]
    data = tmp_path / "data"
    assert run(config + ["synth", "--spec", str(cohort_spec_file), "--output", str(data), "--seed", "11"]) == EXIT_OK
    assert (data / "rr" / "p01.csv").exists()
    assert (data / "truth" / "p01.json").exists()

    assert run(config + ["ingest"]) == EXIT_OK
    assert run(config + ["estimate"]) == EXIT_OK
    assert run(config + ["reduce"]) == EXIT_OK
    assert run(config + ["trends"]) == EXIT_OK

    reports = tmp_path / "output" / "reports"
    assert (reports / "metrics.csv").exists()
    assert (reports / "cohort.csv").exists()
    assert not (reports / "correlation.csv").exists()

    assert run(config + ["report", "--truth", str(data / "truth")]) == EXIT_OK
    recovery = pd.read_csv(reports / "recovery.csv")
    assert set(recovery["patient_id"]) == {"p01"}
    assert len(recovery) > 0
    assert recovery["truth"].dropna().gt(0).all()


def test_default_config_is_picked_up_from_working_directory(tmp_path, config_file, cohort_spec_file):
    assert config_file == tmp_path / "config.yaml"
    data = tmp_path / "data"
    assert run(["synth", "-s", str(cohort_spec_file), "-o", str(data)]) == EXIT_OK
    assert run(["ingest"]) == EXIT_OK
    assert (tmp_path / "output" / "p01" / "patient.json").exists()
