"""
Trend statistics over a patient's estimated segments

Diurnal variability (daytime over nighttime mean of the KDE maxima),
short-term variability (mean Kolmogorov-Smirnov distance between consecutive
segments), per-patient trend features, the cohort summary table and rank
correlation against treatment outcomes.
"""
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import ks_2samp, spearmanr

from src.analysis.reduction import DELAY_PROPERTIES, PROPERTIES, PropertySummary
from src.model.av_node import NODES_PER_PATHWAY
from src.parsers.outcome_parser import OutcomeTable
from src.utils.settings import TrendConfig

logger = logging.getLogger(__name__)

DAY = "day"
NIGHT = "night"
FULL_DAY = "24h"
WINDOWS = (FULL_DAY, DAY, NIGHT)


@dataclass
class TrendSegment:
    """One estimated segment in a trend"""

    index: int
    wall_clock_start: datetime
    summary: PropertySummary
    pools: Optional[Dict[str, np.ndarray]] = None

    @property
    def hour_of_day(self) -> float:
        t = self.wall_clock_start
        return t.hour + t.minute / 60.0 + t.second / 3600.0


@dataclass
class TrendSeries:
    """Estimated segments of one patient, ordered by start"""

    patient_id: str
    recording_start: datetime
    segments: List[TrendSegment] = field(default_factory=list)

    def __post_init__(self):
        self.segments = sorted(self.segments, key=lambda s: s.index)

    def window_start(self, config: TrendConfig = TrendConfig()) -> datetime:
        """Start of the 24-h window: the anchor clock time on or before the recording start"""
        anchor_hour = int(config.ks_window_start_hour)
        anchor_minute = int(round((config.ks_window_start_hour - anchor_hour) * 60))
        anchor = self.recording_start.replace(hour=anchor_hour, minute=anchor_minute, second=0, microsecond=0)
        if anchor > self.recording_start:
            anchor -= timedelta(days=1)
        return anchor

    def in_window(self, segment: TrendSegment, window: str, config: TrendConfig = TrendConfig()) -> bool:
        if window == DAY:
            lo, hi = config.day_hours
            return lo <= segment.hour_of_day < hi
        if window == NIGHT:
            lo, hi = config.night_hours
            return lo <= segment.hour_of_day < hi
        if window == FULL_DAY:
            start = self.window_start(config)
            return start <= segment.wall_clock_start < start + timedelta(days=1)
        raise ValueError(f"Unknown window: {window}")

    def window(self, window: str, config: TrendConfig = TrendConfig()) -> List[TrendSegment]:
        return [s for s in self.segments if self.in_window(s, window, config)]


@dataclass
class VariabilityMetrics:
    """Per-patient variability; NaN marks an undefined value"""

    delta_dv: Dict[str, float]
    mean_delta_ks: Dict[str, float]

    @property
    def delta_dv_defined(self) -> bool:
        return not any(math.isnan(v) for v in self.delta_dv.values())


def _nanmean(values: Iterable[float]) -> float:
    arr = np.array([v for v in values if not math.isnan(v)], dtype=float)
    return float(arr.mean()) if arr.size else math.nan


def _nanstd(values: Iterable[float]) -> float:
    arr = np.array([v for v in values if not math.isnan(v)], dtype=float)
    return float(arr.std()) if arr.size else math.nan


def diurnal_variability(series: TrendSeries, config: TrendConfig = TrendConfig()) -> Dict[str, float]:
    """
    Daytime mean over nighttime mean of phi_max, per property

    Args:
        series: Patient trend
        config: Window definitions

    Returns:
        Ratio per property; NaN if either window is empty
    """
    day = series.window(DAY, config)
    night = series.window(NIGHT, config)
    result = {}
    for name in PROPERTIES:
        day_mean = _nanmean(s.summary.phi_max[name] for s in day)
        night_mean = _nanmean(s.summary.phi_max[name] for s in night)
        if math.isnan(day_mean) or math.isnan(night_mean) or night_mean == 0:
            result[name] = math.nan
        else:
            result[name] = day_mean / night_mean
    if any(math.isnan(v) for v in result.values()):
        logger.warning(f"{series.patient_id}: diurnal variability undefined ({len(day)} day, {len(night)} night segments)")
    return result


def ks_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Largest distance between the empirical CDFs of a and b"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("ks_distance needs two non-empty samples")
    return float(ks_2samp(a, b).statistic)


def consecutive_ks(series: TrendSeries, name: str, window: str = FULL_DAY, config: TrendConfig = TrendConfig()) -> List[float]:
    """KS distances between segments s and s + 1 when both are estimated and in the window"""
    members = {s.index: s for s in series.window(window, config)}
    distances = []
    for index, seg in members.items():
        following = members.get(index + 1)
        if following is None or seg.pools is None or following.pools is None:
            continue
        a, b = seg.pools.get(name), following.pools.get(name)
        if a is None or b is None or a.size == 0 or b.size == 0:
            continue
        distances.append(ks_distance(a, b))
    return distances


def short_term_variability(
    series: TrendSeries,
    window: str = FULL_DAY,
    config: TrendConfig = TrendConfig(),
) -> Dict[str, float]:
    """
    Mean KS distance between consecutive segments, per property

    Args:
        series: Patient trend with sample pools attached
        window: '24h', 'day' or 'night'
        config: Window definitions

    Returns:
        Mean distance per property; NaN without any consecutive pair
    """
    result = {}
    for name in PROPERTIES:
        distances = consecutive_ks(series, name, window, config)
        result[name] = float(np.mean(distances)) if distances else math.nan
    return result


def variability(series: TrendSeries, config: TrendConfig = TrendConfig()) -> VariabilityMetrics:
    return VariabilityMetrics(
        delta_dv=diurnal_variability(series, config),
        mean_delta_ks=short_term_variability(series, FULL_DAY, config),
    )


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    p_value: float
    n: int

    @property
    def defined(self) -> bool:
        return not math.isnan(self.rho)


def spearman(x: Sequence[float], y: Sequence[float]) -> SpearmanResult:
    """
    Spearman rank correlation with pairwise removal of missing values

    Ties get average ranks; the two-sided p-value uses the t-approximation.
    Fewer than three pairs or a constant input give an undefined result.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("spearman needs paired inputs")
    keep = ~(np.isnan(x) | np.isnan(y))
    x, y = x[keep], y[keep]
    n = int(x.size)
    if n < 3 or np.all(x == x[0]) or np.all(y == y[0]):
        return SpearmanResult(math.nan, math.nan, n)
    rho, p_value = spearmanr(x, y)
    return SpearmanResult(float(rho), float(p_value), n)


def trend_features(series: TrendSeries, config: TrendConfig = TrendConfig()) -> Dict[str, float]:
    """
    Per-patient statistical properties of the trends

    Keys: 'phi_max.<prop>.<window>.mean|std', 'width.<prop>.<window>.mean|std',
    'sp_ratio.<window>.mean|std', 'delta_dv.<prop>' and
    'delta_ks.<prop>.<window>'. Values in ms per node; NaN when undefined.
    """
    features: Dict[str, float] = {}
    for window in WINDOWS:
        members = series.window(window, config)
        for name in PROPERTIES:
            peaks = [s.summary.phi_max[name] for s in members]
            widths = [s.summary.width(name) for s in members]
            features[f"phi_max.{name}.{window}.mean"] = _nanmean(peaks)
            features[f"phi_max.{name}.{window}.std"] = _nanstd(peaks)
            features[f"width.{name}.{window}.mean"] = _nanmean(widths)
            features[f"width.{name}.{window}.std"] = _nanstd(widths)
        ratios = [s.summary.sp_ratio for s in members]
        features[f"sp_ratio.{window}.mean"] = _nanmean(ratios)
        features[f"sp_ratio.{window}.std"] = _nanstd(ratios)
        for name, value in short_term_variability(series, window, config).items():
            features[f"delta_ks.{name}.{window}"] = value
    for name, value in diurnal_variability(series, config).items():
        features[f"delta_dv.{name}"] = value
    return features


def _scale(name: str) -> float:
    return float(NODES_PER_PATHWAY) if name in DELAY_PROPERTIES else 1.0


def _cohort_rows() -> List[tuple]:
    """(quantity, window, property, feature key, scale) in table order"""
    rows = []
    for quantity in ("phi_max", "width"):
        for window in WINDOWS:
            for name in PROPERTIES:
                rows.append((quantity, window, name, f"{quantity}.{name}.{window}.mean", _scale(name)))
    for window in WINDOWS:
        for name in PROPERTIES:
            rows.append(("delta_ks", window, name, f"delta_ks.{name}.{window}", 1.0))
    for name in PROPERTIES:
        rows.append(("delta_dv", "day/night", name, f"delta_dv.{name}", 1.0))
    for window in WINDOWS:
        rows.append(("sp_ratio", window, "sp_ratio", f"sp_ratio.{window}.mean", 1.0))
    return rows


def cohort_table(features: Mapping[str, Mapping[str, float]]) -> pd.DataFrame:
    """
    Cohort summary: mean and std over patients of the per-patient window
    averages, credibility widths, short-term and diurnal variability and SP
    ratio. Conduction delays are reported for the whole pathway (ten nodes).

    Args:
        features: patient id -> trend_features output

    Returns:
        DataFrame with columns quantity, window, property, mean, std, n_patients
    """
    if not features:
        raise ValueError("cohort_table needs at least one patient")
    records = []
    for quantity, window, name, key, scale in _cohort_rows():
        values = np.array([f.get(key, math.nan) for f in features.values()], dtype=float)
        values = values[~np.isnan(values)] * scale
        records.append(
            {
                "quantity": quantity,
                "window": window,
                "property": name,
                "mean": float(values.mean()) if values.size else math.nan,
                "std": float(values.std()) if values.size else math.nan,
                "n_patients": int(values.size),
            }
        )
    return pd.DataFrame.from_records(records)


def correlation_metrics() -> List[str]:
    """Variability metrics correlated against outcomes"""
    keys = [f"delta_dv.{name}" for name in PROPERTIES]
    keys += [f"delta_ks.{name}.{FULL_DAY}" for name in PROPERTIES]
    return keys


def correlation_report(
    features: Mapping[str, Mapping[str, float]],
    outcomes: OutcomeTable,
    metrics: Optional[Sequence[str]] = None,
) -> pd.DataFrame:
    """
    Spearman correlation of each variability metric against each drug outcome

    Args:
        features: patient id -> trend_features output
        outcomes: Parsed outcome table
        metrics: Feature keys to correlate (default: correlation_metrics())

    Returns:
        DataFrame with columns metric, drug, rho, p, n, defined
    """
    patients = sorted(features)
    metrics = list(metrics or correlation_metrics())
    records = []
    for drug in outcomes.drugs:
        y = outcomes.outcome(drug, patients)
        for metric in metrics:
            x = np.array([features[p].get(metric, math.nan) for p in patients], dtype=float)
            result = spearman(x, y)
            records.append(
                {
                    "metric": metric,
                    "drug": drug,
                    "rho": result.rho,
                    "p": result.p_value,
                    "n": result.n,
                    "defined": result.defined,
                }
            )
    return pd.DataFrame.from_records(records, columns=["metric", "drug", "rho", "p", "n", "defined"])
