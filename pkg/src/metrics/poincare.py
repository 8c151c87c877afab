"""
Poincare histograms of successive RR pairs and the fitting error between an
observed and a simulated RR series
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

RR_LOW_MS = 250.0
RR_HIGH_MS = 1800.0
BIN_WIDTH_MS = 50.0
N_BINS_PER_AXIS = int((RR_HIGH_MS - RR_LOW_MS) / BIN_WIDTH_MS)
K_BINS = N_BINS_PER_AXIS * N_BINS_PER_AXIS


@dataclass(frozen=True)
class PoincareHistogram:
    """31 x 31 histogram of (RR_n, RR_n+1) pairs over [250, 1800) ms"""

    counts: np.ndarray
    total_pairs: int
    discarded_pairs: int
    duration_ms: float

    def __post_init__(self):
        if self.counts.shape != (N_BINS_PER_AXIS, N_BINS_PER_AXIS):
            raise ValueError(f"Histogram must be {N_BINS_PER_AXIS}x{N_BINS_PER_AXIS}, got {self.counts.shape}")

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    @property
    def binned_pairs(self) -> int:
        return int(self.counts.sum())


def bin_edges() -> np.ndarray:
    return RR_LOW_MS + BIN_WIDTH_MS * np.arange(N_BINS_PER_AXIS + 1)


def histogram(rr: Sequence[float], pair_mask: Optional[Sequence[bool]] = None) -> PoincareHistogram:
    """
    Build the Poincare histogram of an RR series

    Bins are half-open [a, a + 50); pairs with a coordinate outside
    [250, 1800) are discarded and counted.

    Args:
        rr: RR intervals (ms)
        pair_mask: Per neighbouring pair, whether the two intervals are
            consecutive in the recording (default: all are)

    Returns:
        PoincareHistogram
    """
    rr = np.asarray(rr, dtype=float)
    counts = np.zeros((N_BINS_PER_AXIS, N_BINS_PER_AXIS), dtype=np.int64)
    duration = float(rr.sum()) if rr.size else 0.0
    if rr.size < 2:
        return PoincareHistogram(counts=counts, total_pairs=0, discarded_pairs=0, duration_ms=duration)

    adjacent = np.ones(rr.size - 1, dtype=bool) if pair_mask is None else np.asarray(pair_mask, dtype=bool)
    if adjacent.shape != (rr.size - 1,):
        raise ValueError(f"pair_mask needs {rr.size - 1} entries, got {adjacent.size}")
    idx = np.floor((rr - RR_LOW_MS) / BIN_WIDTH_MS).astype(np.int64)
    in_range = (rr >= RR_LOW_MS) & (rr < RR_HIGH_MS)
    x, y = idx[:-1], idx[1:]
    keep = adjacent & in_range[:-1] & in_range[1:]
    np.add.at(counts, (x[keep], y[keep]), 1)

    total = int(adjacent.sum())
    return PoincareHistogram(
        counts=counts,
        total_pairs=total,
        discarded_pairs=total - int(keep.sum()),
        duration_ms=duration,
    )


def weighted_error(x: np.ndarray, x_tilde: np.ndarray, t_norm: float) -> float:
    """
    (1/K) sum_k (x_k - x~_k / t_norm)^2 / sqrt(max(x_k, 1))

    Args:
        x: Reference bin counts
        x_tilde: Compared bin counts
        t_norm: Duration ratio compared / reference

    Returns:
        Error (dimensionless, >= 0)
    """
    x = np.asarray(x, dtype=float).ravel()
    x_tilde = np.asarray(x_tilde, dtype=float).ravel()
    if x.shape != x_tilde.shape:
        raise ValueError("Histograms must use identical binning")
    if not t_norm > 0:
        raise ValueError(f"t_norm must be > 0, got {t_norm}")
    diff = x - x_tilde / t_norm
    return float(np.sum(diff * diff / np.sqrt(np.maximum(x, 1.0))) / x.size)


def _duration_ratio(reference: PoincareHistogram, compared: PoincareHistogram) -> float:
    # Empty series carry no duration; fall back to unit ratio.
    if reference.duration_ms > 0 and compared.duration_ms > 0:
        return compared.duration_ms / reference.duration_ms
    return 1.0


def error(obs: PoincareHistogram, sim: PoincareHistogram) -> float:
    """
    Fitting error between an observed and a simulated histogram

    Args:
        obs: Histogram of the observed segment
        sim: Histogram of the simulated series

    Returns:
        eps, with t_norm = duration(sim) / duration(obs)
    """
    return weighted_error(obs.counts, sim.counts, _duration_ratio(obs, sim))


def delta_p(current: PoincareHistogram, following: PoincareHistogram) -> float:
    """
    Histogram difference between two consecutive observed segments

    Args:
        current: Histogram of segment s
        following: Histogram of segment s + 1

    Returns:
        Delta P (the fitting error with the following segment as comparison)
    """
    return weighted_error(current.counts, following.counts, _duration_ratio(current, following))
