"""End-to-end tests of the pipeline stages on a tiny synthetic cohort"""
import shutil

import pandas as pd
import pytest

from src.errors import DataError, EstimationError
from src.exporters.record_exporter import RecordExporter
from src.pipeline import stages
from src.pipeline.stages import (
    PatientLayout,
    patient_status,
    recovery_report,
    run_estimate,
    run_ingest,
    run_reduce,
    run_trends,
)
from src.utils.settings import replace_section


class Crash(Exception):
    pass


@pytest.fixture
def layout(small_config):
    return PatientLayout(small_config.output_dir, "p01")


def test_ingest(synthetic_cohort, small_config, layout):
    results = run_ingest(small_config)
    assert [r.patient_id for r in results] == ["p01"]
    result = results[0]
    assert result.accepted
    assert len(result.segments) == 8
    assert all(seg.lambda_hat == pytest.approx(6.0) for seg in result.segments)
    meta = RecordExporter.read_json(layout.meta)
    assert meta["config_hash"] == small_config.hash()
    assert len(RecordExporter.read_jsonl(layout.segments)) == 8


def test_ingest_rejects_short_patient(synthetic_cohort, small_config):
    config = replace_section(small_config, "ingest", min_recording_hours=12.0)
    assert not run_ingest(config)[0].accepted
    assert run_estimate(config) == {}


def test_missing_afr_fails_before_any_output(synthetic_cohort, small_config):
    (synthetic_cohort / "afr" / "p01.csv").unlink()
    with pytest.raises(DataError, match="AFR file not found"):
        run_estimate(small_config)
    assert not small_config.output_dir.exists()


def test_missing_afr_fails_for_an_already_ingested_patient(synthetic_cohort, small_config, layout):
    run_ingest(small_config)
    (synthetic_cohort / "afr" / "p01.csv").unlink()
    with pytest.raises(DataError, match="AFR file not found"):
        run_estimate(small_config)
    assert not layout.posterior.exists()
    assert not layout.ga.exists()


def test_estimate_writes_every_record(synthetic_cohort, small_config, layout):
    counts = run_estimate(small_config)
    assert counts["p01"] == {"estimated": 8, "unestimated": 0, "skipped": 0}
    posteriors = RecordExporter.read_jsonl(layout.posterior)
    assert [r["s"] for r in posteriors] == list(range(8))
    assert all(len(r["particles"]) == 10 for r in posteriors)
    assert all(r["config_hash"] == small_config.hash() for r in posteriors)
    assert len(RecordExporter.read_jsonl(layout.ga)) == 8
    properties = RecordExporter.read_jsonl(layout.properties)
    assert len(properties) == 8
    assert layout.samples(0).exists()
    assert RecordExporter.read_json(small_config.output_dir / "run.json")["seed"] == small_config.seed


def test_estimate_is_deterministic(synthetic_cohort, small_config, tmp_path):
    run_estimate(small_config)
    other = replace_section(small_config, "paths", output_dir=str(tmp_path / "again"))
    run_estimate(other)
    for name in ("posterior.jsonl", "properties.jsonl", "ga.jsonl"):
        first = (small_config.output_dir / "p01" / name).read_bytes()
        second = (tmp_path / "again" / "p01" / name).read_bytes()
        assert first == second


def test_resume_after_crash_matches_uninterrupted_run(synthetic_cohort, small_config, tmp_path):
    def crash_after_three(patient_id, done, total):
        if done == 3:
            raise Crash()

    with pytest.raises(Crash):
        run_estimate(small_config, crash_after_three)
    layout = PatientLayout(small_config.output_dir, "p01")
    assert len(RecordExporter.read_jsonl(layout.posterior)) == 3

    counts = run_estimate(small_config)
    assert counts["p01"]["skipped"] == 3

    reference = replace_section(small_config, "paths", output_dir=str(tmp_path / "reference"))
    run_estimate(reference)
    for name in ("posterior.jsonl", "properties.jsonl"):
        assert (layout.root / name).read_bytes() == (tmp_path / "reference" / "p01" / name).read_bytes()


def test_failed_segment_is_isolated(synthetic_cohort, small_config, layout, monkeypatch):
    real_run_abc = stages.run_abc
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 2:
            raise EstimationError("covariance collapsed")
        return real_run_abc(*args, **kwargs)

    monkeypatch.setattr(stages, "run_abc", flaky)
    counts = run_estimate(small_config)
    assert counts["p01"]["estimated"] == 7
    assert counts["p01"]["unestimated"] == 1
    failed = [r for r in RecordExporter.read_jsonl(layout.posterior) if not r["estimated"]]
    assert failed[0]["s"] == 1
    assert "covariance" in failed[0]["reason"]


def test_config_change_discards_estimates(synthetic_cohort, small_config, layout):
    run_estimate(small_config)
    changed = replace_section(small_config, "reduction", kde_grid_points=64)
    counts = run_estimate(changed)
    assert counts["p01"]["skipped"] == 0
    assert all(r["config_hash"] == changed.hash() for r in RecordExporter.read_jsonl(layout.properties))


def test_reduce_after_config_change_drops_stale_properties(synthetic_cohort, small_config, layout):
    run_estimate(small_config)
    changed = replace_section(small_config, "reduction", kde_grid_points=64)
    assert run_reduce(changed) == {"p01": 0}
    assert RecordExporter.read_jsonl(layout.properties) == []
    assert not layout.samples(0).exists()
    assert len(RecordExporter.read_jsonl(layout.posterior)) == 8


def test_reduce_replaces_a_property_record_of_another_configuration(synthetic_cohort, small_config, layout):
    run_estimate(small_config)
    original = layout.properties.read_bytes()
    records = RecordExporter.read_jsonl(layout.properties)
    records[-1]["config_hash"] = "0" * 64
    RecordExporter.write_jsonl(records, layout.properties)

    assert run_reduce(small_config) == {"p01": 1}
    assert layout.properties.read_bytes() == original


def test_reduce_fills_missing_properties(synthetic_cohort, small_config, layout):
    run_estimate(small_config)
    shutil.copy(layout.properties, layout.root / "full.jsonl")
    RecordExporter.truncate_jsonl(layout.properties, lambda r: r["s"] < 5)
    assert run_reduce(small_config) == {"p01": 3}
    assert sorted(r["s"] for r in RecordExporter.read_jsonl(layout.properties)) == list(range(8))
    assert layout.properties.read_bytes() == (layout.root / "full.jsonl").read_bytes()


def test_trends_reports(synthetic_cohort, small_config, tmp_path):
    run_estimate(small_config)
    reports = run_trends(small_config)
    assert reports.correlation is None
    assert reports.metrics["patient_id"].tolist() == ["p01"]
    out = small_config.output_dir / "reports"
    assert (out / "metrics.csv").exists() and (out / "cohort.csv").exists()
    assert not (out / "correlation.csv").exists()
    for name in ("metrics.csv", "cohort.csv"):
        assert set(pd.read_csv(out / name)["config_hash"]) == {small_config.hash()}

    outcomes = tmp_path / "outcomes.csv"
    outcomes.write_text("patient_id,diltiazem\np01,0.2\n")
    with_outcomes = replace_section(small_config, "paths", outcomes=str(outcomes))
    reports = run_trends(with_outcomes)
    assert (out / "correlation.csv").exists()
    assert not reports.correlation["defined"].any()
    assert set(pd.read_csv(out / "correlation.csv")["config_hash"]) == {with_outcomes.hash()}


def test_trends_without_patients(small_config):
    with pytest.raises(DataError, match="No accepted patients"):
        run_trends(small_config)


def test_status_and_recovery(synthetic_cohort, small_config):
    run_estimate(small_config)
    status = patient_status(small_config)
    assert status.iloc[0]["estimated"] == 8
    assert status.iloc[0]["reduced"] == 8

    recovery = recovery_report(small_config, synthetic_cohort / "truth")
    assert len(recovery) == 8 * 4
    assert set(recovery["property"]) == {"r_fp", "r_sp", "d_fp", "d_sp"}
    assert set(recovery["config_hash"]) == {small_config.hash()}
    with pytest.raises(DataError):
        recovery_report(small_config, synthetic_cohort / "nowhere")


def test_two_patient_cohort_end_to_end(tmp_path, small_config):
    from src.synth.generator import build_synthetic_spec, cmd_synth
    from tests.conftest import synthetic_cohort_spec

    cmd_synth(build_synthetic_spec(synthetic_cohort_spec(("p01", "p02"))), 11, tmp_path / "data")
    counts = run_estimate(small_config)
    assert sorted(counts) == ["p01", "p02"]

    outcomes = tmp_path / "outcomes.csv"
    outcomes.write_text("patient_id,diltiazem\np01,0.2\np02,\n")
    reports = run_trends(replace_section(small_config, "paths", outcomes=str(outcomes)))
    assert reports.metrics["patient_id"].tolist() == ["p01", "p02"]
    assert set(reports.cohort["window"]) >= {"24h", "day", "night"}
    assert reports.correlation is not None
