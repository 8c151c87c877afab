"""
Overlapping ten-minute segmentation with the noise exclusion rules, and
per-segment mean AFR
"""
import logging
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from typing import List, Optional, Sequence

import numpy as np

from src.errors import DataError
from src.parsers.afr_parser import AfrTrend
from src.parsers.rr_parser import BeatSeries
from src.utils.settings import IngestConfig

logger = logging.getLogger(__name__)

MINUTE_MS = 60_000.0


@dataclass(frozen=True)
class RRSegment:
    """One ten-minute window of valid RR intervals"""

    patient_id: str
    index: int
    start_ms: float
    duration_ms: float
    rr_intervals: np.ndarray
    n_beats: int
    wall_clock_start: datetime
    lambda_hat: Optional[float] = None
    # pair_mask[i]: rr_intervals[i] and rr_intervals[i + 1] are consecutive in the recording
    pair_mask: Optional[np.ndarray] = None

    @property
    def end_ms(self) -> float:
        return self.start_ms + self.duration_ms

    @property
    def adjacent_pairs(self) -> np.ndarray:
        if self.pair_mask is None:
            return np.ones(max(self.rr_intervals.size - 1, 0), dtype=bool)
        return self.pair_mask

    @property
    def hour_of_day(self) -> float:
        t = self.wall_clock_start
        return t.hour + t.minute / 60.0 + (t.second + t.microsecond / 1e6) / 3600.0

    def to_record(self) -> dict:
        return {
            "patient": self.patient_id,
            "s": self.index,
            "start": self.start_ms,
            "n_beats": self.n_beats,
            "lambda_hat": self.lambda_hat,
            "wall_clock_start": self.wall_clock_start.isoformat(),
            "rr": [float(v) for v in self.rr_intervals],
            "breaks": [int(i) for i in np.flatnonzero(~self.adjacent_pairs)],
        }

    @classmethod
    def from_record(cls, record: dict, duration_ms: float) -> "RRSegment":
        return cls(
            patient_id=record["patient"],
            index=int(record["s"]),
            start_ms=float(record["start"]),
            duration_ms=float(duration_ms),
            rr_intervals=np.asarray(record["rr"], dtype=float),
            n_beats=int(record["n_beats"]),
            wall_clock_start=datetime.fromisoformat(record["wall_clock_start"]),
            lambda_hat=record.get("lambda_hat"),
            pair_mask=_mask_from_breaks(len(record["rr"]), record.get("breaks", [])),
        )


def _mask_from_breaks(n_intervals: int, breaks: Sequence[int]) -> np.ndarray:
    mask = np.ones(max(n_intervals - 1, 0), dtype=bool)
    mask[np.asarray(breaks, dtype=np.int64)] = False
    return mask


def recording_minutes(beats: BeatSeries) -> int:
    """Number of started minutes up to and including the minute of the last beat"""
    if beats.n_beats == 0:
        return 0
    return int(np.floor(beats.beat_times[-1] / MINUTE_MS)) + 1


def segment(beats: BeatSeries, config: IngestConfig = IngestConfig()) -> List[RRSegment]:
    """
    Split a beat series into overlapping windows and drop noisy ones

    A window is dropped iff one of its one-minute sub-intervals holds fewer
    than min_beats_per_minute detected beats. Invalid RR intervals are left
    out of the interval list but their beats still count.

    Args:
        beats: Parsed beat series
        config: Ingest settings

    Returns:
        Included segments without lambda_hat, ordered by start
    """
    n_minutes = recording_minutes(beats)
    window = config.segment_minutes
    step = config.step_minutes
    if n_minutes < window:
        return []

    times = beats.beat_times
    minute_of_beat = np.floor(times / MINUTE_MS).astype(np.int64)
    beats_per_minute = np.bincount(minute_of_beat[minute_of_beat >= 0], minlength=n_minutes)
    rr = beats.rr_intervals

    segments = []
    n_windows = (n_minutes - window) // step + 1
    for k in range(n_windows):
        first_minute = k * step
        if np.any(beats_per_minute[first_minute:first_minute + window] < config.min_beats_per_minute):
            logger.debug(f"{beats.patient_id}: window {k} excluded (sparse minute)")
            continue
        start = first_minute * MINUTE_MS
        end = start + window * MINUTE_MS
        lo = int(np.searchsorted(times, start, side="left"))
        hi = int(np.searchsorted(times, end, side="left"))
        # Interval j spans beats j and j + 1; both must lie inside the window.
        interval_idx = np.arange(lo, max(hi - 1, lo))
        keep = interval_idx[beats.valid_flags[interval_idx]]
        segments.append(
            RRSegment(
                patient_id=beats.patient_id,
                index=k,
                start_ms=start,
                duration_ms=window * MINUTE_MS,
                rr_intervals=rr[keep],
                pair_mask=np.diff(keep) == 1,
                n_beats=hi - lo,
                wall_clock_start=beats.recording_start + timedelta(milliseconds=start),
            )
        )

    logger.info(f"{beats.patient_id}: {len(segments)}/{n_windows} segments kept")
    return segments


def covered_ms(segments: Sequence[RRSegment]) -> float:
    """Length of the union of the segments' windows"""
    spans = sorted((s.start_ms, s.end_ms) for s in segments)
    total = 0.0
    cur_start = cur_end = None
    for start, end in spans:
        if cur_end is None or start > cur_end:
            if cur_end is not None:
                total += cur_end - cur_start
            cur_start, cur_end = start, end
        else:
            cur_end = max(cur_end, end)
    if cur_end is not None:
        total += cur_end - cur_start
    return total


def check_patient_duration(segments: Sequence[RRSegment], config: IngestConfig = IngestConfig()) -> bool:
    """
    Accept a patient iff the included segments cover at least the minimum
    recording length (inclusive)
    """
    covered_h = covered_ms(segments) / 3.6e6
    accepted = covered_h >= config.min_recording_hours
    if not accepted and segments:
        logger.warning(
            f"{segments[0].patient_id}: {covered_h:.2f} h covered, "
            f"below {config.min_recording_hours:g} h; patient rejected"
        )
    return accepted


def _nearest_observed(trend: AfrTrend, minutes: np.ndarray) -> np.ndarray:
    observed = trend.observed
    obs_minutes = trend.minute_index[observed]
    obs_values = trend.afr_hz[observed]
    pos = np.searchsorted(obs_minutes, minutes, side="left")
    right = np.clip(pos, 0, obs_minutes.size - 1)
    left = np.clip(pos - 1, 0, obs_minutes.size - 1)
    dist_left = np.abs(minutes - obs_minutes[left])
    dist_right = np.abs(obs_minutes[right] - minutes)
    # Equidistant neighbours resolve to the earlier minute.
    chosen = np.where(dist_left <= dist_right, left, right)
    return obs_values[chosen]


def attach_afr(
    segments: Sequence[RRSegment],
    trend: AfrTrend,
    config: IngestConfig = IngestConfig(),
) -> List[RRSegment]:
    """
    Set lambda_hat of each segment to the mean AFR over its minutes

    Missing minutes take the nearest observed value before averaging.

    Args:
        segments: Segments of one patient
        trend: AFR trend of the same patient (Hz)
        config: Ingest settings

    Returns:
        Segments with lambda_hat (s^-1)
    """
    if trend.is_empty:
        raise DataError(f"AFR trend of {trend.patient_id} has no observed values")

    result = []
    for seg in segments:
        first_minute = int(round(seg.start_ms / MINUTE_MS))
        minutes = np.arange(first_minute, first_minute + config.segment_minutes)
        values = _nearest_observed(trend, minutes)
        result.append(replace(seg, lambda_hat=float(values.mean())))
    return result


def relative_hr_change(baseline_rr: Sequence[float], treatment_rr: Sequence[float]) -> float:
    """
    Relative reduction of mean heart rate under treatment

    Args:
        baseline_rr: RR intervals without treatment (ms)
        treatment_rr: RR intervals under treatment (ms)

    Returns:
        (HR_baseline - HR_treatment) / HR_baseline
    """
    baseline_rr = np.asarray(baseline_rr, dtype=float)
    treatment_rr = np.asarray(treatment_rr, dtype=float)
    if baseline_rr.size == 0 or treatment_rr.size == 0:
        raise DataError("Heart-rate change needs non-empty RR series")
    hr_base = 60_000.0 / baseline_rr.mean()
    hr_treat = 60_000.0 / treatment_rr.mean()
    return float((hr_base - hr_treat) / hr_base)
