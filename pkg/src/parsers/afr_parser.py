"""
AFR Parser
Parses per-minute atrial fibrillatory rate trends (minute,afr_hz | minute,afr_per_min)
"""
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from src.errors import DataError

logger = logging.getLogger(__name__)

HZ_COLUMN = "afr_hz"
PER_MIN_COLUMN = "afr_per_min"


@dataclass(frozen=True)
class AfrTrend:
    """Per-minute AFR in impulses per second; NaN marks a missing minute"""

    patient_id: str
    minute_index: np.ndarray
    afr_hz: np.ndarray

    @property
    def observed(self) -> np.ndarray:
        return np.isfinite(self.afr_hz)

    @property
    def is_empty(self) -> bool:
        return not bool(np.any(self.observed))


def _data_lines(text: str) -> Tuple[List[int], str]:
    """Drop blank and full-line comments; keep the file line number of each remaining line"""
    lines = text.splitlines()
    kept = [n for n, line in enumerate(lines, start=1) if line.strip() and not line.lstrip().startswith("#")]
    return kept, "\n".join(lines[n - 1] for n in kept)


def parse_afr(csv_path: str, patient_id: Optional[str] = None) -> AfrTrend:
    """
    Parse an AFR trend file

    The unit is declared by the header: 'afr_hz' (impulses/s) or
    'afr_per_min' (converted to Hz here). Empty cells are missing minutes.

    Args:
        csv_path: Path to CSV file
        patient_id: Patient identifier (default: file stem)

    Returns:
        AfrTrend sorted by minute
    """
    path = str(csv_path)
    patient_id = patient_id or Path(csv_path).stem
    if not Path(csv_path).exists():
        raise DataError("AFR file not found", path=path)
    try:
        text = Path(csv_path).read_text()
    except OSError as e:
        raise DataError(f"Cannot read AFR file: {e}", path=path) from e
    source_lines, body = _data_lines(text)
    if not source_lines:
        raise DataError("AFR file has no header", path=path)
    try:
        df = pd.read_csv(io.StringIO(body), dtype=str, comment="#")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DataError(f"Unreadable AFR table: {e}", path=path) from e
    header_line = source_lines[0]
    df.columns = [c.strip() for c in df.columns]

    if "minute" not in df.columns:
        raise DataError(f"Missing 'minute' column, found {list(df.columns)}", path=path, line=header_line)
    if HZ_COLUMN in df.columns:
        column, factor = HZ_COLUMN, 1.0
    elif PER_MIN_COLUMN in df.columns:
        column, factor = PER_MIN_COLUMN, 1.0 / 60.0
    else:
        raise DataError(f"AFR unit column must be '{HZ_COLUMN}' or '{PER_MIN_COLUMN}'", path=path, line=header_line)

    minutes = pd.to_numeric(df["minute"].str.strip(), errors="coerce").to_numpy(dtype=float)
    raw = df[column].fillna("").str.strip()
    values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)

    for row in range(len(df)):
        line = source_lines[row + 1]
        if not np.isfinite(minutes[row]) or minutes[row] != int(minutes[row]) or minutes[row] < 0:
            raise DataError(f"Invalid minute index {df['minute'].iloc[row]!r}", path=path, line=line)
        if raw.iloc[row] and not np.isfinite(values[row]):
            raise DataError(f"Malformed AFR value {raw.iloc[row]!r}", path=path, line=line)
        if np.isfinite(values[row]) and values[row] <= 0:
            raise DataError(f"AFR must be > 0, got {values[row]:g}", path=path, line=line)

    order = np.argsort(minutes, kind="stable")
    minutes = minutes[order].astype(np.int64)
    if np.any(np.diff(minutes) == 0):
        raise DataError("Duplicate minute index in AFR trend", path=path)

    trend = AfrTrend(patient_id=patient_id, minute_index=minutes, afr_hz=values[order] * factor)
    logger.info(
        f"Parsed AFR trend for {patient_id}: {minutes.size} minutes, "
        f"{int(trend.observed.sum())} observed ({column})"
    )
    return trend
