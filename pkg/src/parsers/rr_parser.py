"""
RR Parser
Parses beat-time CSV files (t_ms,valid) into beat series
"""
import io
import logging
from dataclasses import dataclass
from datetime import datetime, time
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from src.errors import DataError

logger = logging.getLogger(__name__)

START_KEY = "recording_start"
_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}
_DEFAULT_DATE = datetime(2000, 1, 1)


@dataclass(frozen=True)
class BeatSeries:
    """Detected beats of one recording with per-interval validity"""

    patient_id: str
    beat_times: np.ndarray
    valid_flags: np.ndarray
    recording_start: datetime

    def __post_init__(self):
        if self.beat_times.size and np.any(np.diff(self.beat_times) <= 0):
            raise ValueError("Beat times must be strictly increasing")
        if self.valid_flags.size != max(self.beat_times.size - 1, 0):
            raise ValueError("valid_flags must have one entry per RR interval")

    @property
    def n_beats(self) -> int:
        return int(self.beat_times.size)

    @property
    def rr_intervals(self) -> np.ndarray:
        return np.diff(self.beat_times)

    @property
    def valid_rr_intervals(self) -> np.ndarray:
        return self.rr_intervals[self.valid_flags]


def parse_clock(text: str) -> datetime:
    """Parse 'HH:MM[:SS]' or an ISO datetime into a datetime"""
    text = text.strip()
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        pass
    try:
        clock = time.fromisoformat(text)
    except ValueError as e:
        raise DataError(f"Cannot parse recording start '{text}'") from e
    return datetime.combine(_DEFAULT_DATE.date(), clock)


def _split_comments(text: str) -> Tuple[Dict[str, str], int, str]:
    """Leading '# key: value' lines -> (metadata, number of comment lines, rest)"""
    lines = text.splitlines(keepends=True)
    meta: Dict[str, str] = {}
    n = 0
    for line in lines:
        stripped = line.strip()
        if not stripped.startswith("#"):
            break
        body = stripped.lstrip("#").strip()
        if ":" in body:
            key, value = body.split(":", 1)
            meta[key.strip()] = value.strip()
        n += 1
    return meta, n, "".join(lines[n:])


def _parse_flag(value: Any, path: str, line: int) -> bool:
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise DataError(f"Invalid 'valid' flag {value!r}", path=path, line=line)


def parse_beats(
    csv_path: str,
    patient_id: Optional[str] = None,
    default_start: str = "08:00:00",
) -> BeatSeries:
    """
    Parse a beat CSV file

    Format: header 't_ms,valid', one detected beat per row. 'valid' = 0 marks
    a beat with deviating morphology; both RR intervals adjacent to it are
    flagged invalid. An optional leading comment '# recording_start: 08:30:00'
    (or an ISO datetime) sets the wall-clock start.

    Args:
        csv_path: Path to CSV file
        patient_id: Patient identifier (default: file stem)
        default_start: Wall-clock start used when the file has none

    Returns:
        BeatSeries
    """
    path = str(csv_path)
    patient_id = patient_id or Path(csv_path).stem
    try:
        text = Path(csv_path).read_text()
    except OSError as e:
        raise DataError(f"Cannot read beat file: {e}", path=path) from e

    meta, n_comments, body = _split_comments(text)
    if not body.strip():
        raise DataError("Beat file has no header", path=path)

    df = pd.read_csv(io.StringIO(body), dtype=str)
    df.columns = [c.strip() for c in df.columns]
    if "t_ms" not in df.columns:
        raise DataError(f"Missing 't_ms' column, found {list(df.columns)}", path=path, line=n_comments + 1)
    if df.empty:
        raise DataError("Empty beat series", path=path)

    first_data_line = n_comments + 2
    times = pd.to_numeric(df["t_ms"].str.strip(), errors="coerce").to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(times))
    if bad.size:
        row = int(bad[0])
        raise DataError(f"Malformed t_ms value {df['t_ms'].iloc[row]!r}", path=path, line=first_data_line + row)

    steps = np.diff(times)
    bad = np.flatnonzero(steps <= 0)
    if bad.size:
        row = int(bad[0]) + 1
        raise DataError(
            f"Non-increasing beat time {times[row]:g} after {times[row - 1]:g}",
            path=path,
            line=first_data_line + row,
        )

    if "valid" in df.columns:
        beat_ok = np.array(
            [_parse_flag(v, path, first_data_line + i) for i, v in enumerate(df["valid"].fillna("1"))],
            dtype=bool,
        )
    else:
        beat_ok = np.ones(times.size, dtype=bool)

    start = parse_clock(meta.get(START_KEY, default_start))
    series = BeatSeries(
        patient_id=patient_id,
        beat_times=times,
        valid_flags=beat_ok[:-1] & beat_ok[1:],
        recording_start=start,
    )
    logger.info(f"Parsed {series.n_beats} beats for {patient_id} from {path}")
    return series


def get_statistics(series: BeatSeries) -> Dict[str, Any]:
    """Get statistics about a parsed beat series"""
    rr = series.rr_intervals
    valid = series.valid_rr_intervals
    return {
        "patient_id": series.patient_id,
        "n_beats": series.n_beats,
        "n_intervals": int(rr.size),
        "n_invalid_intervals": int(rr.size - valid.size),
        "duration_h": float(series.beat_times[-1] - series.beat_times[0]) / 3.6e6 if series.n_beats else 0.0,
        "mean_rr_ms": float(valid.mean()) if valid.size else float("nan"),
    }
