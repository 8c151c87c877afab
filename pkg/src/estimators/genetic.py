"""
Dynamic genetic algorithm

A population of 300 parameter vectors is carried from segment to segment of
one patient. The number of generations spent on a segment grows with the
histogram change Delta P since the previous segment, between two and seven.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from src.estimators.objective import SegmentProblem, evaluate_task
from src.metrics.poincare import PoincareHistogram, delta_p
from src.model.parameters import N_PARAMETERS, ModelParameters, ParameterBounds
from src.utils.parallel import SERIAL, WorkerPool
from src.utils.seeding import child_sequences
from src.utils.settings import GaConfig

logger = logging.getLogger(__name__)

# Sub-stream keys below a segment's GA seed
_BREED = 0
_EVALUATE = 1
_IMMIGRATE = 2


@dataclass(frozen=True)
class Individual:
    """One ranked GA estimate"""

    theta: ModelParameters
    eps: float

    def to_record(self) -> dict:
        return {"theta": self.theta.to_dict(), "eps": self.eps}


@dataclass
class Population:
    """GA population as arrays: thetas (n, 12), eps (n,)"""

    thetas: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        if self.thetas.ndim != 2 or self.thetas.shape[1] != N_PARAMETERS:
            raise ValueError(f"Population thetas must be (n, {N_PARAMETERS}), got {self.thetas.shape}")
        if self.eps.shape != (self.thetas.shape[0],):
            raise ValueError("One eps value per individual required")

    @property
    def size(self) -> int:
        return int(self.thetas.shape[0])

    @property
    def best_eps(self) -> float:
        return float(np.min(self.eps))

    def order(self) -> np.ndarray:
        """Indices sorted by eps ascending (stable)"""
        return np.argsort(self.eps, kind="stable")

    def ranked(self, n: int) -> List[Individual]:
        idx = self.order()[:n]
        return [Individual(ModelParameters.from_array(self.thetas[i]), float(self.eps[i])) for i in idx]

    def copy(self) -> "Population":
        return Population(self.thetas.copy(), self.eps.copy())


def latin_hypercube(bounds: ParameterBounds, n: int, seed) -> np.ndarray:
    """n Latin-hypercube samples scaled onto the bounds box"""
    rng = np.random.default_rng(seed)
    sampler = qmc.LatinHypercube(d=N_PARAMETERS, seed=rng)
    return bounds.scale(sampler.random(n))


def init_population(config: GaConfig, seed) -> Population:
    """
    Initial population by Latin hypercube sampling within the GA ranges

    Args:
        config: GA settings
        seed: Seed for the sampler

    Returns:
        Population with eps = +inf (not yet evaluated)
    """
    thetas = latin_hypercube(config.bounds, config.population_size, seed)
    return Population(thetas, np.full(config.population_size, math.inf))


def evaluate(
    pop: Population,
    problem: SegmentProblem,
    seed,
    pool: WorkerPool = SERIAL,
) -> Population:
    """
    Score every individual on a segment

    All individuals share one simulation seed (common random numbers), so
    identical vectors get identical eps.

    Args:
        pop: Population to score
        problem: Segment to fit
        seed: Simulation seed for this evaluation round
        pool: Worker pool

    Returns:
        New population with eps filled in
    """
    eps = evaluate_rows(pop.thetas, problem, seed, pool)
    return Population(pop.thetas.copy(), eps)


def evaluate_rows(thetas: np.ndarray, problem: SegmentProblem, seed, pool: WorkerPool = SERIAL) -> np.ndarray:
    tasks = [(problem, row, seed) for row in thetas]
    return np.asarray(pool.map(evaluate_task, tasks), dtype=float)


def calibration_anchors(
    histograms: Sequence[PoincareHistogram],
    quantiles: Tuple[float, float] = (0.25, 0.75),
) -> Optional[Tuple[float, float]]:
    """
    Delta P values at the low and high quantile over a patient's consecutive
    segment pairs

    Returns:
        (low, high), or None for fewer than two segments
    """
    if len(histograms) < 2:
        return None
    values = np.array([delta_p(a, b) for a, b in zip(histograms[:-1], histograms[1:])])
    low, high = np.quantile(values, quantiles)
    return float(low), float(high)


def generations_for(delta_p_prev: Optional[float], anchors: Optional[Tuple[float, float]], config: GaConfig) -> int:
    """
    Generation budget for a segment

    Linear in Delta P between the calibration anchors, clamped to
    [generations_min, generations_max].

    Args:
        delta_p_prev: Delta P between the previous segment and this one (None for the first)
        anchors: (low, high) Delta P anchors of the patient
        config: GA settings

    Returns:
        Number of generations
    """
    g_min, g_max = config.generations_min, config.generations_max
    if delta_p_prev is None:
        return config.initial_generations
    if anchors is None:
        return g_max
    low, high = anchors
    if high <= low:
        return g_min if delta_p_prev <= low else g_max
    frac = (delta_p_prev - low) / (high - low)
    g = g_min + (g_max - g_min) * frac
    return int(np.clip(round(g), g_min, g_max))


def tournament(eps: np.ndarray, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of n tournament winners (lowest eps of `size` uniform picks)"""
    entrants = rng.integers(0, eps.size, size=(n, size))
    winners = np.argmin(eps[entrants], axis=1)
    return entrants[np.arange(n), winners]


def two_point_crossover(parents: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """
    Two-point crossover of consecutive parent pairs

    Args:
        parents: (n, d) array, n even
        rate: Probability that a pair is crossed
        rng: Random generator

    Returns:
        Children, same shape
    """
    children = parents.copy()
    d = parents.shape[1]
    for i in range(0, parents.shape[0] - 1, 2):
        if rng.random() >= rate:
            continue
        a, b = np.sort(rng.choice(np.arange(1, d), size=2, replace=False))
        children[i, a:b] = parents[i + 1, a:b]
        children[i + 1, a:b] = parents[i, a:b]
    return children


def creep_mutation(
    thetas: np.ndarray,
    bounds: ParameterBounds,
    rate: float,
    width: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Uniform additive perturbation of each coordinate with probability rate, then clamp"""
    mask = rng.random(thetas.shape) < rate
    step = rng.uniform(-1.0, 1.0, size=thetas.shape) * width * bounds.width
    return bounds.clip(np.where(mask, thetas + step, thetas))


def breed(pop: Population, n: int, config: GaConfig, rng: np.random.Generator) -> np.ndarray:
    """n offspring by tournament selection, two-point crossover and creep mutation"""
    n_parents = n + (n % 2)
    parents = pop.thetas[tournament(pop.eps, n_parents, config.tournament_size, rng)]
    children = two_point_crossover(parents, config.crossover_rate, rng)[:n]
    return creep_mutation(children, config.bounds, config.mutation_rate, config.mutation_width, rng)


def immigrate(pop: Population, config: GaConfig, seed) -> Population:
    """Replace the least-fit individuals with fresh Latin-hypercube samples"""
    n = min(config.immigration_count, pop.size)
    if n == 0:
        return pop.copy()
    result = pop.copy()
    worst = pop.order()[::-1][:n]
    result.thetas[worst] = latin_hypercube(config.bounds, n, seed)
    result.eps[worst] = math.inf
    return result


def evolve_segment(
    pop: Population,
    problem: SegmentProblem,
    delta_p_prev: Optional[float],
    anchors: Optional[Tuple[float, float]],
    config: GaConfig,
    seed: np.random.SeedSequence,
    pool: WorkerPool = SERIAL,
) -> Tuple[Population, List[Individual], int]:
    """
    Run the GA on one segment

    Args:
        pop: Population already evaluated on this segment
        problem: Segment to fit
        delta_p_prev: Delta P since the previous segment (None for the first)
        anchors: Delta P calibration anchors of the patient
        config: GA settings
        seed: Segment seed; generation streams are derived from it
        pool: Worker pool for fitness evaluation

    Returns:
        (population carried to the next segment, ranked estimates, generations run)
    """
    n_generations = generations_for(delta_p_prev, anchors, config)
    n_elite = min(config.elitism, pop.size)
    current = pop.copy()

    for g in range(n_generations):
        rng = np.random.default_rng(child_sequences(seed, _BREED, g))
        elite = current.order()[:n_elite]
        offspring = breed(current, current.size - n_elite, config, rng)
        offspring_eps = evaluate_rows(offspring, problem, child_sequences(seed, _EVALUATE, g), pool)
        current = Population(
            np.vstack([current.thetas[elite], offspring]),
            np.concatenate([current.eps[elite], offspring_eps]),
        )
        logger.debug(f"Generation {g + 1}/{n_generations}: best eps {current.best_eps:.4g}")

    ranked = current.ranked(config.n_ranked)
    carried = immigrate(current, config, child_sequences(seed, _IMMIGRATE))
    logger.info(
        f"GA: {n_generations} generations, best eps {ranked[0].eps:.4g}, "
        f"rank-{len(ranked)} eps {ranked[-1].eps:.4g}"
    )
    return carried, ranked, n_generations
