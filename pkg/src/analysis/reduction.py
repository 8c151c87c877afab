"""
Parameter reduction

Simulates every posterior particle once with activation tracking and turns
the pooled refractory-period and conduction-delay samples into per-segment
properties: KDE maxima, 5th/95th percentiles and the slow-pathway ratio.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import gaussian_kde, median_abs_deviation

from src.model.av_node import NODES_PER_PATHWAY, simulate
from src.model.parameters import CouplingConfig, ModelParameters
from src.utils.parallel import SERIAL, WorkerPool
from src.utils.seeding import child_sequences
from src.utils.settings import ReductionConfig

logger = logging.getLogger(__name__)

PROPERTIES = ("r_fp", "r_sp", "d_fp", "d_sp")
DELAY_PROPERTIES = ("d_fp", "d_sp")


@dataclass
class PropertySamples:
    """Pooled per-activation samples (ms) and coupling-node pathway counts"""

    r_fp: np.ndarray = field(default_factory=lambda: np.empty(0))
    r_sp: np.ndarray = field(default_factory=lambda: np.empty(0))
    d_fp: np.ndarray = field(default_factory=lambda: np.empty(0))
    d_sp: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_fp: int = 0
    n_sp: int = 0

    def get(self, name: str) -> np.ndarray:
        if name not in PROPERTIES:
            raise ValueError(f"Unknown property: {name}")
        return getattr(self, name)

    def counts(self) -> Dict[str, int]:
        return {name: int(self.get(name).size) for name in PROPERTIES}

    @classmethod
    def pool(cls, parts: Sequence["PropertySamples"]) -> "PropertySamples":
        """Concatenate samples and add counts"""
        if not parts:
            return cls()
        return cls(
            **{name: np.concatenate([p.get(name) for p in parts]) for name in PROPERTIES},
            n_fp=sum(p.n_fp for p in parts),
            n_sp=sum(p.n_sp for p in parts),
        )

    def subsample(self, cap: int, seed) -> Dict[str, np.ndarray]:
        """At most cap samples per property, drawn without replacement"""
        rng = np.random.default_rng(seed)
        pools = {}
        for name in PROPERTIES:
            values = self.get(name)
            if values.size > cap:
                values = np.sort(rng.choice(values, size=cap, replace=False))
            pools[name] = values
        return pools


def _simulate_particle(task: Tuple[np.ndarray, CouplingConfig, float, float, object]) -> PropertySamples:
    theta, coupling, rate_hz, duration_ms, seed = task
    result = simulate(ModelParameters.from_array(theta), coupling, rate_hz, duration_ms, seed, track=True)
    tracked = result.tracked
    return PropertySamples(
        r_fp=tracked.r_fp,
        r_sp=tracked.r_sp,
        d_fp=tracked.d_fp,
        d_sp=tracked.d_sp,
        n_fp=result.n_fp,
        n_sp=result.n_sp,
    )


def reduce(
    thetas: np.ndarray,
    rate_hz: float,
    coupling: CouplingConfig,
    seed: np.random.SeedSequence,
    duration_ms: float = 600_000.0,
    pool: WorkerPool = SERIAL,
) -> PropertySamples:
    """
    One tracked simulation per posterior particle, samples pooled per pathway

    Args:
        thetas: Posterior parameter vectors (n, 12)
        rate_hz: Segment AFR estimate
        coupling: Coupling-node settings
        seed: Segment reduction seed; particle i uses sub-stream i
        duration_ms: Simulated time per particle
        pool: Worker pool

    Returns:
        PropertySamples
    """
    tasks = [
        (np.asarray(theta, dtype=float), coupling, rate_hz, duration_ms, child_sequences(seed, i))
        for i, theta in enumerate(np.atleast_2d(thetas))
    ]
    pooled = PropertySamples.pool(pool.map(_simulate_particle, tasks))
    logger.debug(f"Reduced {len(tasks)} particles to {pooled.counts()} samples")
    return pooled


def silverman_bandwidth(samples: np.ndarray) -> float:
    """
    Normal-reference bandwidth with a robust spread estimate:
    sigma * (4 / (3n))^(1/5), sigma = MAD / 0.6745, falling back to the
    standard deviation when the MAD is zero
    """
    x = np.asarray(samples, dtype=float)
    sigma = median_abs_deviation(x, scale="normal")
    if not sigma > 0:
        sigma = np.std(x, ddof=1) if x.size > 1 else 0.0
    return float(sigma * (4.0 / (3.0 * x.size)) ** 0.2)


def kde_mode(
    samples: Sequence[float],
    grid_points: int = 512,
    padding: float = 3.0,
    max_samples: Optional[int] = None,
    seed=None,
) -> float:
    """
    Location of the maximum of a Gaussian kernel density estimate

    Args:
        samples: Sample values
        grid_points: Evaluation grid size over [min - padding*h, max + padding*h]
        padding: Grid padding in bandwidths
        max_samples: Fit on a seeded subsample of at most this many values
        seed: Seed for the subsample

    Returns:
        Grid argmax (lowest value on ties), within [min, max] of the samples
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("kde_mode needs at least one sample")
    lo, hi = float(x.min()), float(x.max())
    if x.size == 1 or lo == hi:
        return lo
    if max_samples is not None and x.size > max_samples:
        x = np.random.default_rng(seed).choice(x, size=max_samples, replace=False)

    h = silverman_bandwidth(x)
    std = np.std(x, ddof=1)
    if not h > 0 or not std > 0:
        return float(np.median(x))
    kde = gaussian_kde(x, bw_method=h / std)
    grid = np.linspace(x.min() - padding * h, x.max() + padding * h, grid_points)
    density = kde(grid)
    return float(np.clip(grid[int(np.argmax(density))], lo, hi))


def percentiles(samples: Sequence[float]) -> Tuple[float, float]:
    """5th and 95th percentile, linear interpolation between order statistics"""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("percentiles need at least one sample")
    p5, p95 = np.percentile(x, [5.0, 95.0])
    return float(p5), float(p95)


def sp_ratio(n_fp: int, n_sp: int) -> float:
    """N_SP / (N_FP + N_SP); NaN when no impulse reached the coupling node"""
    total = n_fp + n_sp
    if total <= 0:
        return math.nan
    return n_sp / total


@dataclass
class PropertySummary:
    """Per-segment reduction of the property samples"""

    phi_max: Dict[str, float]
    phi_5: Dict[str, float]
    phi_95: Dict[str, float]
    sp_ratio: float
    n_samples: Dict[str, int]
    n_fp: int
    n_sp: int

    @property
    def sp_ratio_defined(self) -> bool:
        return not math.isnan(self.sp_ratio)

    def width(self, name: str) -> float:
        return self.phi_95[name] - self.phi_5[name]

    def total_delay(self) -> Dict[str, Dict[str, float]]:
        """Whole-pathway conduction delay: ten nodes times the per-node value"""
        return {
            name: {
                "max": NODES_PER_PATHWAY * self.phi_max[name],
                "p5": NODES_PER_PATHWAY * self.phi_5[name],
                "p95": NODES_PER_PATHWAY * self.phi_95[name],
            }
            for name in DELAY_PROPERTIES
        }

    def to_record(self) -> dict:
        return {
            "phi_max": self.phi_max,
            "phi_5": self.phi_5,
            "phi_95": self.phi_95,
            "total_cd": self.total_delay(),
            "sp_ratio": self.sp_ratio,
            "sp_ratio_defined": self.sp_ratio_defined,
            "n_samples": self.n_samples,
            "n_fp": self.n_fp,
            "n_sp": self.n_sp,
        }

    @classmethod
    def from_record(cls, record: dict) -> "PropertySummary":
        ratio = record.get("sp_ratio")
        return cls(
            phi_max={k: _as_float(v) for k, v in record["phi_max"].items()},
            phi_5={k: _as_float(v) for k, v in record["phi_5"].items()},
            phi_95={k: _as_float(v) for k, v in record["phi_95"].items()},
            sp_ratio=_as_float(ratio),
            n_samples={k: int(v) for k, v in record["n_samples"].items()},
            n_fp=int(record["n_fp"]),
            n_sp=int(record["n_sp"]),
        )


def _as_float(value) -> float:
    return math.nan if value is None else float(value)


def summarize(samples: PropertySamples, config: ReductionConfig = ReductionConfig(), seed=None) -> PropertySummary:
    """
    Reduce pooled samples to KDE maxima, percentiles and SP ratio

    Properties without samples are reported as NaN.

    Args:
        samples: Pooled property samples
        config: Reduction settings
        seed: Seed for KDE subsampling

    Returns:
        PropertySummary
    """
    phi_max, phi_5, phi_95 = {}, {}, {}
    for i, name in enumerate(PROPERTIES):
        values = samples.get(name)
        if values.size == 0:
            phi_max[name] = phi_5[name] = phi_95[name] = math.nan
            continue
        sub_seed = child_sequences(seed, i) if isinstance(seed, np.random.SeedSequence) else seed
        phi_max[name] = kde_mode(
            values,
            grid_points=config.kde_grid_points,
            padding=config.kde_padding_bandwidths,
            max_samples=config.kde_max_samples,
            seed=sub_seed,
        )
        phi_5[name], phi_95[name] = percentiles(values)

    ratio = sp_ratio(samples.n_fp, samples.n_sp)
    return PropertySummary(
        phi_max=phi_max,
        phi_5=phi_5,
        phi_95=phi_95,
        sp_ratio=ratio,
        n_samples=samples.counts(),
        n_fp=samples.n_fp,
        n_sp=samples.n_sp,
    )
