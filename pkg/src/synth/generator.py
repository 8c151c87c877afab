"""
Synthetic cohort generator

Builds beat and AFR files from known parameter and AFR trajectories with the
network model, plus a ground-truth manifest for recovery scoring.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from src.errors import ConfigError
from src.exporters.record_exporter import RecordExporter
from src.model.av_node import simulate
from src.model.parameters import ABC_BOUNDS, PARAMETER_NAMES, CouplingConfig, ModelParameters
from src.parsers.rr_parser import parse_clock
from src.utils.seeding import Purpose, SeedSchedule

logger = logging.getLogger(__name__)

PIECEWISE = "piecewise"
LINEAR = "linear"
MINUTE_MS = 60_000.0


@dataclass(frozen=True)
class Trajectory:
    """Values at knot hours, held constant (piecewise) or interpolated (linear)"""

    hours: Tuple[float, ...]
    values: np.ndarray
    mode: str = PIECEWISE

    def __post_init__(self):
        if self.mode not in (PIECEWISE, LINEAR):
            raise ConfigError(f"Trajectory mode must be '{PIECEWISE}' or '{LINEAR}', got '{self.mode}'")
        if not self.hours or list(self.hours) != sorted(self.hours):
            raise ConfigError("Trajectory hours must be non-empty and increasing")

    def at(self, hour: float) -> np.ndarray:
        hours = np.asarray(self.hours)
        if self.mode == LINEAR and len(hours) > 1:
            values = np.atleast_2d(self.values)
            return np.array([np.interp(hour, hours, values[:, k]) for k in range(values.shape[1])])
        idx = max(int(np.searchsorted(hours, hour, side="right")) - 1, 0)
        return np.atleast_2d(self.values)[idx]


@dataclass(frozen=True)
class SyntheticPatient:
    patient_id: str
    hours: float
    theta: Trajectory
    rate: Trajectory
    coupling: CouplingConfig
    recording_start: str = "08:00:00"
    hourly_jitter: float = 0.0
    invalid_beat_fraction: float = 0.0
    afr_dropout: float = 0.0


@dataclass(frozen=True)
class SyntheticSpec:
    patients: List[SyntheticPatient] = field(default_factory=list)
    chunk_minutes: float = 5.0


def _theta_knots(raw: Any, where: str) -> Tuple[Tuple[float, ...], np.ndarray]:
    if isinstance(raw, dict) and "points" not in raw:
        raw = {"points": [{"hour": 0, "values": raw}]}
    points = raw.get("points") if isinstance(raw, dict) else None
    if not points:
        raise ConfigError(f"{where}: theta needs parameter values or a 'points' list")
    hours, rows = [], []
    for point in points:
        try:
            rows.append(ModelParameters.from_dict(point["values"]).to_array())
            hours.append(float(point.get("hour", 0.0)))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"{where}: invalid theta point {point}: {e}") from e
    values = np.vstack(rows)
    bad = ~ABC_BOUNDS.contains_rows(values)
    if np.any(bad):
        raise ConfigError(f"{where}: theta outside the ABC bounds at hour {hours[int(np.argmax(bad))]:g}")
    return tuple(hours), values


def _rate_knots(raw: Any, where: str) -> Tuple[Tuple[float, ...], np.ndarray]:
    if isinstance(raw, (int, float)):
        raw = {"points": [{"hour": 0, "value": raw}]}
    points = raw.get("points") if isinstance(raw, dict) else None
    if not points:
        raise ConfigError(f"{where}: lambda_hz needs a number or a 'points' list")
    hours = tuple(float(p.get("hour", 0.0)) for p in points)
    values = np.array([[float(p["value"])] for p in points])
    if np.any(values <= 0):
        raise ConfigError(f"{where}: lambda_hz must be > 0")
    return hours, values


def load_synthetic_spec(path) -> SyntheticSpec:
    """
    Load a synthetic cohort description from YAML

    Args:
        path: YAML file with a 'patients' list

    Returns:
        SyntheticSpec
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f) or {}
    except FileNotFoundError as e:
        raise ConfigError(f"Synthetic cohort file not found: {path}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in synthetic cohort file {path}: {e}") from e
    return build_synthetic_spec(raw)


def build_synthetic_spec(raw: Dict[str, Any]) -> SyntheticSpec:
    entries = raw.get("patients") or []
    if not entries:
        raise ConfigError("Synthetic cohort has no patients")
    patients = []
    for n, entry in enumerate(entries):
        pid = str(entry.get("id", f"synth{n + 1:02d}"))
        where = f"patient '{pid}'"
        hours = float(entry.get("hours", 24.0))
        if not hours > 0:
            raise ConfigError(f"{where}: duration must be > 0 hours, got {hours:g}")
        mode = entry.get("interpolation", PIECEWISE)
        theta_hours, theta_values = _theta_knots(entry.get("theta"), where)
        rate_hours, rate_values = _rate_knots(entry.get("lambda_hz", 6.0), where)
        coupling_raw = entry.get("coupling") or {}
        noise = entry.get("noise") or {}
        try:
            coupling = CouplingConfig(
                rp_ms=float(coupling_raw.get("rp_ms", 250.0)),
                cd_ms=float(coupling_raw.get("cd_ms", 60.0)),
            )
        except ValueError as e:
            raise ConfigError(f"{where}: {e}") from e
        patient = SyntheticPatient(
            patient_id=pid,
            hours=hours,
            theta=Trajectory(theta_hours, theta_values, mode),
            rate=Trajectory(rate_hours, rate_values, mode),
            coupling=coupling,
            recording_start=str(entry.get("start", "08:00:00")),
            hourly_jitter=float(entry.get("hourly_jitter", 0.0)),
            invalid_beat_fraction=float(noise.get("invalid_beat_fraction", 0.0)),
            afr_dropout=float(noise.get("afr_dropout", 0.0)),
        )
        for name in ("hourly_jitter", "invalid_beat_fraction", "afr_dropout"):
            value = getattr(patient, name)
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"{where}: {name} must be in [0, 1), got {value:g}")
        patients.append(patient)
    return SyntheticSpec(patients=patients, chunk_minutes=float(raw.get("chunk_minutes", 5.0)))


@dataclass
class SyntheticRecording:
    patient: SyntheticPatient
    beat_times: np.ndarray
    valid: np.ndarray
    afr_minutes: np.ndarray
    afr_hz: np.ndarray
    truth: List[Dict[str, Any]]


def _hourly_offsets(patient: SyntheticPatient, rng: np.random.Generator) -> np.ndarray:
    n_hours = int(math.ceil(patient.hours))
    if patient.hourly_jitter <= 0:
        return np.zeros((n_hours, len(PARAMETER_NAMES)))
    return rng.normal(0.0, patient.hourly_jitter * ABC_BOUNDS.width, size=(n_hours, len(PARAMETER_NAMES)))


def generate_patient(patient: SyntheticPatient, seed, chunk_minutes: float = 5.0) -> SyntheticRecording:
    """
    Simulate one synthetic recording chunk by chunk

    Each chunk uses theta and lambda at its start (plus the hourly jitter of
    its hour) and is appended to the running beat series.

    Args:
        patient: Patient description
        seed: Root sequence for this patient
        chunk_minutes: Chunk length

    Returns:
        SyntheticRecording
    """
    rng = np.random.default_rng(seed)
    offsets = _hourly_offsets(patient, rng)
    total_ms = patient.hours * 3.6e6
    chunk_ms = chunk_minutes * MINUTE_MS

    beats: List[np.ndarray] = []
    truth = []
    start = 0.0
    last_time = -math.inf
    while start < total_ms:
        length = min(chunk_ms, total_ms - start)
        hour = start / 3.6e6
        theta = ABC_BOUNDS.clip(patient.theta.at(hour) + offsets[int(hour)])
        rate = float(patient.rate.at(hour)[0])
        result = simulate(
            ModelParameters.from_array(theta),
            patient.coupling,
            rate,
            length,
            rng.integers(2**32),
            warmup_intervals=0,
        )
        times = result.ventricular_times + start
        # Keep the series strictly increasing and above the coupling RP across the seam.
        times = times[times >= last_time + patient.coupling.rp_ms]
        if times.size:
            last_time = float(times[-1])
        beats.append(times)
        truth.append({"start_ms": start, "duration_ms": length, "lambda_hz": rate, "theta": dict(zip(PARAMETER_NAMES, theta))})
        start += length

    beat_times = np.concatenate(beats) if beats else np.empty(0)
    valid = rng.random(beat_times.size) >= patient.invalid_beat_fraction

    n_minutes = int(math.ceil(total_ms / MINUTE_MS))
    minutes = np.arange(n_minutes)
    afr = np.array([float(patient.rate.at((m + 0.5) / 60.0)[0]) for m in minutes])
    if patient.afr_dropout > 0:
        dropped = rng.random(n_minutes) < patient.afr_dropout
        dropped[0] = False
        afr[dropped] = np.nan

    logger.info(f"Synthesized {patient.patient_id}: {beat_times.size} beats over {patient.hours:g} h")
    return SyntheticRecording(patient, beat_times, valid, minutes, afr, truth)


def write_recording(recording: SyntheticRecording, output_dir, seed_info: Dict[str, Any]) -> Dict[str, Path]:
    """Write RR, AFR and ground-truth files under output_dir/{rr,afr,truth}"""
    output_dir = Path(output_dir)
    pid = recording.patient.patient_id
    paths = {
        "rr": output_dir / "rr" / f"{pid}.csv",
        "afr": output_dir / "afr" / f"{pid}.csv",
        "truth": output_dir / "truth" / f"{pid}.json",
    }
    start = parse_clock(recording.patient.recording_start)
    RecordExporter.write_beats_csv(recording.beat_times, recording.valid, start.strftime("%H:%M:%S"), paths["rr"])
    RecordExporter.write_afr_csv(recording.afr_minutes, recording.afr_hz, paths["afr"])
    RecordExporter.write_json(
        {
            "patient": pid,
            "recording_start": start.isoformat(),
            "coupling": {"rp_ms": recording.patient.coupling.rp_ms, "cd_ms": recording.patient.coupling.cd_ms},
            "hourly_jitter": recording.patient.hourly_jitter,
            "chunks": recording.truth,
            **seed_info,
        },
        paths["truth"],
    )
    return paths


def truth_at(manifest: Dict[str, Any], start_ms: float, duration_ms: float = 600_000.0) -> Optional[Dict[str, float]]:
    """Ground-truth theta of the chunk covering the middle of a segment"""
    middle = start_ms + duration_ms / 2.0
    for chunk in manifest.get("chunks", []):
        if chunk["start_ms"] <= middle < chunk["start_ms"] + chunk["duration_ms"]:
            return chunk["theta"]
    return None


def cmd_synth(spec: SyntheticSpec, root_seed: int, output_dir) -> List[Dict[str, Path]]:
    """
    Generate every patient of a synthetic cohort

    Args:
        spec: Cohort description
        root_seed: Root seed; patient streams derive from it
        output_dir: Target directory

    Returns:
        Written paths per patient
    """
    schedule = SeedSchedule(root_seed)
    written = []
    for patient in spec.patients:
        seq = schedule.sequence(patient.patient_id, 0, Purpose.SYNTH)
        recording = generate_patient(patient, seq, spec.chunk_minutes)
        written.append(write_recording(recording, output_dir, {"root_seed": root_seed}))
    return written

