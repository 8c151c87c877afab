"""
Fitting objective shared by the estimators: simulate a parameter vector on a
segment and score it against the observed Poincare histogram
"""
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from src.metrics.poincare import PoincareHistogram, error, histogram
from src.model.av_node import DEFAULT_WARMUP_INTERVALS, simulate
from src.model.parameters import CouplingConfig, ModelParameters
from src.parsers.segmentation import RRSegment
from src.utils.settings import SimulationConfig


@dataclass(frozen=True)
class SegmentProblem:
    """Everything a worker needs to score theta on one segment"""

    observed: PoincareHistogram
    rate_hz: float
    coupling: CouplingConfig
    duration_ms: float = 600_000.0
    warmup_intervals: int = DEFAULT_WARMUP_INTERVALS

    @classmethod
    def from_segment(
        cls,
        segment: RRSegment,
        coupling: CouplingConfig,
        simulation: SimulationConfig = SimulationConfig(),
    ) -> "SegmentProblem":
        if segment.lambda_hat is None or not segment.lambda_hat > 0:
            raise ValueError(f"Segment {segment.index} of {segment.patient_id} has no AFR estimate")
        return cls(
            observed=histogram(segment.rr_intervals, segment.adjacent_pairs),
            rate_hz=float(segment.lambda_hat),
            coupling=coupling,
            duration_ms=simulation.duration_ms,
            warmup_intervals=simulation.warmup_intervals,
        )


def simulated_error(problem: SegmentProblem, theta: np.ndarray, seed) -> float:
    """
    Fitting error of one parameter vector

    Args:
        problem: Segment to fit
        theta: Parameter vector (12,)
        seed: Simulation seed

    Returns:
        eps, or +inf when the simulation yields fewer than 2 RR intervals
    """
    result = simulate(
        ModelParameters.from_array(theta),
        problem.coupling,
        problem.rate_hz,
        problem.duration_ms,
        seed,
        warmup_intervals=problem.warmup_intervals,
    )
    if result.rr_intervals.size < 2:
        return math.inf
    return error(problem.observed, histogram(result.rr_intervals))


def evaluate_task(task: Tuple[SegmentProblem, Sequence[float], object]) -> float:
    """Worker entry point: (problem, theta, seed) -> eps"""
    problem, theta, seed = task
    return simulated_error(problem, np.asarray(theta, dtype=float), seed)
