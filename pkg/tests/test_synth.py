"""Tests for the synthetic cohort generator"""
import numpy as np
import pytest

from src.errors import ConfigError
from src.parsers.afr_parser import parse_afr
from src.parsers.rr_parser import parse_beats
from src.synth.generator import (
    LINEAR,
    Trajectory,
    build_synthetic_spec,
    cmd_synth,
    generate_patient,
    load_synthetic_spec,
    truth_at,
)
from src.exporters.record_exporter import RecordExporter
from tests.conftest import MID_THETA, synthetic_cohort_spec


def test_trajectory_modes():
    values = np.array([[1.0], [3.0]])
    piecewise = Trajectory((0.0, 2.0), values)
    linear = Trajectory((0.0, 2.0), values, LINEAR)
    assert piecewise.at(1.0)[0] == 1.0
    assert piecewise.at(2.5)[0] == 3.0
    assert linear.at(1.0)[0] == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        Trajectory((2.0, 0.0), values)


class TestCohortDescription:
    def test_defaults(self):
        spec = build_synthetic_spec(synthetic_cohort_spec(("a", "b")))
        assert [p.patient_id for p in spec.patients] == ["a", "b"]
        assert spec.patients[0].coupling.rp_ms == 250.0
        assert spec.chunk_minutes == 5.0

    def test_theta_out_of_bounds(self):
        raw = synthetic_cohort_spec()
        raw["patients"][0]["theta"] = dict(MID_THETA, r_min_fp=5000.0)
        with pytest.raises(ConfigError, match="bounds"):
            build_synthetic_spec(raw)

    def test_zero_duration(self):
        with pytest.raises(ConfigError):
            build_synthetic_spec(synthetic_cohort_spec(hours=0))

    def test_missing_parameter(self):
        raw = synthetic_cohort_spec()
        raw["patients"][0]["theta"] = {"r_min_fp": 300.0}
        with pytest.raises(ConfigError):
            build_synthetic_spec(raw)

    def test_step_change_trajectory(self):
        raw = synthetic_cohort_spec()
        raw["patients"][0]["theta"] = {
            "points": [{"hour": 0, "values": MID_THETA}, {"hour": 12, "values": dict(MID_THETA, r_min_fp=600.0)}]
        }
        patient = build_synthetic_spec(raw).patients[0]
        assert patient.theta.at(11.9)[0] == 400.0
        assert patient.theta.at(12.0)[0] == 600.0

    def test_load_from_yaml(self, tmp_path):
        path = tmp_path / "cohort.yaml"
        path.write_text("chunk_minutes: 10\npatients:\n  - id: x\n    hours: 1\n    lambda_hz: 7\n    theta:\n" + "".join(
            f"      {k}: {v}\n" for k, v in MID_THETA.items()
        ))
        spec = load_synthetic_spec(path)
        assert spec.chunk_minutes == 10.0
        assert spec.patients[0].rate.at(0.0)[0] == 7.0
        with pytest.raises(ConfigError):
            load_synthetic_spec(tmp_path / "missing.yaml")


def test_generated_recording(tmp_path):
    spec = build_synthetic_spec(synthetic_cohort_spec(hours=0.25))
    recording = generate_patient(spec.patients[0], np.random.SeedSequence(0))
    assert np.all(np.diff(recording.beat_times) >= 250.0)
    assert len(recording.truth) == 3
    assert recording.afr_hz.size == 15


def test_cmd_synth_writes_parsable_files(tmp_path):
    spec = build_synthetic_spec(synthetic_cohort_spec(hours=0.25))
    written = cmd_synth(spec, 3, tmp_path)
    paths = written[0]
    beats = parse_beats(paths["rr"])
    assert beats.recording_start.hour == 8
    trend = parse_afr(paths["afr"])
    np.testing.assert_allclose(trend.afr_hz, 6.0)
    manifest = RecordExporter.read_json(paths["truth"])
    assert manifest["root_seed"] == 3
    assert truth_at(manifest, 0.0, 600_000.0)["r_min_fp"] == 400.0
    assert truth_at(manifest, 10 * 3.6e6, 600_000.0) is None


def test_cmd_synth_is_deterministic(tmp_path):
    spec = build_synthetic_spec(synthetic_cohort_spec(hours=0.1))
    first = cmd_synth(spec, 3, tmp_path / "a")[0]["rr"].read_text()
    second = cmd_synth(spec, 3, tmp_path / "b")[0]["rr"].read_text()
    assert first == second


def test_noise_options(tmp_path):
    raw = synthetic_cohort_spec(hours=0.5)
    raw["patients"][0]["noise"] = {"invalid_beat_fraction": 0.2, "afr_dropout": 0.5}
    recording = generate_patient(build_synthetic_spec(raw).patients[0], np.random.SeedSequence(1))
    assert 0.1 < 1 - recording.valid.mean() < 0.3
    assert np.isfinite(recording.afr_hz[0])
    assert np.isnan(recording.afr_hz).any()
