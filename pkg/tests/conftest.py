"""
Shared fixtures: beat-series builders, small pipeline configs and a tiny
synthetic cohort
"""
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pytest
import yaml

from src.exporters.record_exporter import RecordExporter
from src.model.parameters import ModelParameters
from src.synth.generator import build_synthetic_spec, cmd_synth
from src.utils.settings import PipelineConfig, build_config

MID_THETA = {
    "r_min_fp": 400.0, "delta_r_fp": 300.0, "tau_r_fp": 150.0,
    "d_min_fp": 5.0, "delta_d_fp": 20.0, "tau_d_fp": 100.0,
    "r_min_sp": 250.0, "delta_r_sp": 200.0, "tau_r_sp": 150.0,
    "d_min_sp": 15.0, "delta_d_sp": 30.0, "tau_d_sp": 100.0,
}


def small_raw_config(root: Path) -> Dict[str, Any]:
    """Raw config dict with desk-scale estimator settings"""
    return {
        "seed": 7,
        "paths": {
            "rr_dir": str(root / "data" / "rr"),
            "afr_dir": str(root / "data" / "afr"),
            "outcomes": None,
            "output_dir": str(root / "output"),
        },
        "ingest": {"min_recording_hours": 0.5},
        "simulation": {"duration_ms": 60000, "warmup_intervals": 2},
        "ga": {
            "population_size": 12,
            "n_ranked": 10,
            "generations_min": 1,
            "generations_max": 2,
            "initial_generations": 2,
            "immigration_count": 2,
        },
        "abc": {
            "n_particles": 10,
            "n_iterations": 4,
            "threshold_ranks": [10, 8, 5, 3],
            "n_centers": 5,
            "max_proposals_per_slot": 200,
            "threshold_override": 1.0e9,
        },
        "reduction": {"kde_grid_points": 128, "ks_sample_cap": 500},
        "processing": {"max_workers": 1},
        "logging": {"file": None},
    }


def regular_beats(minutes: float, rr_ms: float = 600.0, jitter_ms: float = 0.0, seed: int = 0) -> np.ndarray:
    """Beat times (ms) with a constant RR interval plus optional uniform jitter"""
    n = int(minutes * 60_000.0 / rr_ms)
    rr = np.full(n, rr_ms)
    if jitter_ms:
        rr = rr + np.random.default_rng(seed).uniform(-jitter_ms, jitter_ms, size=n)
    return np.cumsum(rr) - rr[0] + 1.0


def write_beats(path: Path, times: np.ndarray, valid: Optional[np.ndarray] = None, start: str = "08:00:00") -> Path:
    valid = np.ones(times.size, dtype=bool) if valid is None else valid
    RecordExporter.write_beats_csv(times, valid, start, path)
    return path


def write_afr(path: Path, minutes: int, afr_hz: float = 6.0) -> Path:
    RecordExporter.write_afr_csv(np.arange(minutes), np.full(minutes, afr_hz), path)
    return path


@pytest.fixture
def mid_theta() -> ModelParameters:
    return ModelParameters.from_dict(MID_THETA)


@pytest.fixture
def raw_config(tmp_path) -> Dict[str, Any]:
    return small_raw_config(tmp_path)


@pytest.fixture
def small_config(raw_config) -> PipelineConfig:
    return build_config(raw_config)


@pytest.fixture
def config_file(tmp_path, raw_config) -> Path:
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(raw_config))
    return path


def synthetic_cohort_spec(patient_ids=("p01",), hours: float = 0.75) -> Dict[str, Any]:
    return {
        "patients": [
            {"id": pid, "hours": hours, "start": "08:00:00", "theta": MID_THETA, "lambda_hz": 6.0}
            for pid in patient_ids
        ]
    }


@pytest.fixture
def synthetic_cohort(tmp_path) -> Path:
    """One 45-minute synthetic patient under <tmp>/data/{rr,afr,truth}"""
    data = tmp_path / "data"
    cmd_synth(build_synthetic_spec(synthetic_cohort_spec()), 11, data)
    return data
