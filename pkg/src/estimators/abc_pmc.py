"""
Approximate Bayesian computation population Monte Carlo

Refines the ranked GA estimates of a segment into a weighted posterior
population. Acceptance thresholds come from the eps values of the GA ranking,
so the final population fits at least as well as the best GA individual.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from src.errors import AbcStallError, EstimationError
from src.estimators.genetic import Individual
from src.estimators.objective import SegmentProblem, simulated_error
from src.model.parameters import ModelParameters, ParameterBounds, stack
from src.utils.parallel import SERIAL, WorkerPool
from src.utils.seeding import child_sequences
from src.utils.settings import AbcSchedule

logger = logging.getLogger(__name__)

_INIT = 0
_SLOT = 1
_RESAMPLE = 0
_SIMULATE = 1


@dataclass(frozen=True)
class Particle:
    theta: ModelParameters
    weight: float
    eps: float

    def to_record(self) -> dict:
        return {"theta": self.theta.to_dict(), "weight": self.weight, "eps": self.eps}


@dataclass
class ParticleSet:
    """Weighted population: thetas (n, 12), weights (n,) summing to 1, eps (n,)"""

    thetas: np.ndarray
    weights: np.ndarray
    eps: np.ndarray

    @property
    def size(self) -> int:
        return int(self.thetas.shape[0])

    def particles(self) -> List[Particle]:
        return [
            Particle(ModelParameters.from_array(t), float(w), float(e))
            for t, w, e in zip(self.thetas, self.weights, self.eps)
        ]

    @classmethod
    def from_particles(cls, particles: Sequence[Particle]) -> "ParticleSet":
        return cls(
            thetas=stack(p.theta for p in particles),
            weights=np.array([p.weight for p in particles], dtype=float),
            eps=np.array([p.eps for p in particles], dtype=float),
        )


@dataclass
class AbcResult:
    """Final population of one segment plus run diagnostics"""

    population: ParticleSet
    thresholds: List[float]
    proposals: List[int] = field(default_factory=list)

    @property
    def max_eps(self) -> float:
        return float(np.max(self.population.eps))


def thresholds(ranked: Sequence[Individual], schedule: AbcSchedule) -> List[float]:
    """
    Acceptance thresholds T_1..T_n: eps of the GA individual at each
    configured rank (1-based)
    """
    if schedule.threshold_override is not None:
        return [float(schedule.threshold_override)] * schedule.n_iterations
    needed = max(schedule.threshold_ranks)
    if len(ranked) < needed:
        raise EstimationError(f"Need {needed} ranked GA estimates for the thresholds, got {len(ranked)}")
    return [float(ranked[rank - 1].eps) for rank in schedule.threshold_ranks]


# Relative eigenvalue floor below which scipy.stats.multivariate_normal treats a covariance as singular.
_SINGULAR_COND = 1e6 * np.finfo(float).eps
_MAX_ESCALATIONS = 6


def is_well_conditioned(sigma: np.ndarray) -> bool:
    eigenvalues = np.linalg.eigvalsh(sigma)
    return bool(eigenvalues.min() > _SINGULAR_COND * np.abs(eigenvalues).max())


def regularize(sigma: np.ndarray, bounds: ParameterBounds, strength: float = 1e-6) -> np.ndarray:
    """
    Make a covariance matrix usable as a Gaussian kernel

    Adds strength * diag((range / 12)^2) when the matrix is singular or too
    ill-conditioned for the kernel density; the strength grows tenfold per
    step until the matrix qualifies.

    Raises:
        EstimationError: still singular after the last step
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    sigma = 0.5 * (sigma + sigma.T)
    if is_well_conditioned(sigma):
        return sigma
    diagonal = np.diag((bounds.width / 12.0) ** 2)
    for step in range(_MAX_ESCALATIONS):
        regularized = sigma + strength * 10.0**step * diagonal
        if is_well_conditioned(regularized):
            logger.debug(f"Regularized singular kernel covariance (strength {strength * 10.0**step:g})")
            return regularized
    raise EstimationError("Kernel covariance singular after regularization; inspect the bounds widths")


def kernel_covariance(thetas: np.ndarray, bounds: ParameterBounds, strength: float = 1e-6) -> np.ndarray:
    """Transition kernel covariance 2 * Cov(population), regularized"""
    return regularize(2.0 * np.cov(thetas, rowvar=False), bounds, strength)


def _draw_in_bounds(
    mean: np.ndarray,
    chol: np.ndarray,
    n: int,
    bounds: ParameterBounds,
    rng: np.random.Generator,
    max_draws: int,
) -> np.ndarray:
    accepted: List[np.ndarray] = []
    draws = 0
    while len(accepted) < n:
        z = rng.standard_normal((n, mean.size))
        candidates = mean + z @ chol.T
        draws += n
        accepted.extend(candidates[bounds.contains_rows(candidates)])
        if draws > max_draws and len(accepted) < n:
            raise EstimationError(f"Could not draw {n} in-bounds particles around a GA estimate")
    return np.asarray(accepted[:n])


def init_particles(ranked: Sequence[Individual], schedule: AbcSchedule, seed) -> ParticleSet:
    """
    Initial population: n_particles / n_centers draws around each of the
    n_centers best GA estimates, with the covariance of all ranked estimates

    Args:
        ranked: Ranked GA estimates (best first)
        schedule: ABC settings
        seed: Seed for the draws

    Returns:
        ParticleSet with uniform weights and eps = +inf
    """
    if len(ranked) < schedule.n_centers:
        raise EstimationError(f"Need {schedule.n_centers} GA estimates, got {len(ranked)}")
    bounds = schedule.bounds
    rng = np.random.default_rng(seed)
    ga = stack(ind.theta for ind in ranked)
    sigma = regularize(np.cov(ga, rowvar=False), bounds, schedule.regularization)
    chol = np.linalg.cholesky(sigma)

    per_center = schedule.n_particles // schedule.n_centers
    blocks = [
        _draw_in_bounds(ga[u], chol, per_center, bounds, rng, schedule.max_proposals_per_slot)
        for u in range(schedule.n_centers)
    ]
    n = per_center * schedule.n_centers
    return ParticleSet(
        thetas=np.vstack(blocks),
        weights=np.full(n, 1.0 / n),
        eps=np.full(n, np.inf),
    )


def log_weight(theta: np.ndarray, prev_thetas: np.ndarray, prev_weights: np.ndarray, sigma: np.ndarray) -> float:
    """
    Unnormalized log importance weight of a new particle

    log w = -log sum_k w_k N(theta_k | theta, sigma)
    """
    density = multivariate_normal(mean=np.atleast_1d(theta), cov=sigma)
    log_terms = np.log(prev_weights) + np.atleast_1d(density.logpdf(np.atleast_2d(prev_thetas)))
    total = logsumexp(log_terms)
    if not np.isfinite(total):
        raise EstimationError(
            "Importance-weight densities underflowed for every previous particle; "
            "inspect the kernel covariance"
        )
    return float(-total)


def update_weights(
    thetas: np.ndarray,
    prev_thetas: np.ndarray,
    prev_weights: np.ndarray,
    sigma: np.ndarray,
) -> np.ndarray:
    """Normalized importance weights of a new population"""
    thetas = np.atleast_2d(thetas)
    prev_thetas = np.atleast_2d(prev_thetas)
    sigma = np.atleast_2d(sigma)
    logw = np.array([log_weight(t, prev_thetas, prev_weights, sigma) for t in thetas])
    return np.exp(logw - logsumexp(logw))


@dataclass(frozen=True)
class SlotTask:
    """Inputs for filling one acceptance slot in a worker"""

    problem: SegmentProblem
    prev_thetas: np.ndarray
    prev_weights: np.ndarray
    chol: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    threshold: float
    seed: np.random.SeedSequence
    max_proposals: int
    iteration: int
    slot: int


def fill_slot(task: SlotTask) -> Tuple[np.ndarray, float, int]:
    """
    Resample, perturb and simulate until a proposal is accepted

    Returns:
        (theta, eps, number of proposals)

    Raises:
        AbcStallError: no acceptance within max_proposals
    """
    rng = np.random.default_rng(child_sequences(task.seed, _RESAMPLE))
    n, d = task.prev_thetas.shape
    for attempt in range(task.max_proposals):
        k = rng.choice(n, p=task.prev_weights)
        proposal = task.prev_thetas[k] + task.chol @ rng.standard_normal(d)
        if np.any(proposal < task.lower) or np.any(proposal > task.upper):
            continue
        eps = simulated_error(task.problem, proposal, child_sequences(task.seed, _SIMULATE, attempt))
        if eps <= task.threshold:
            return proposal, eps, attempt + 1
    raise AbcStallError(task.iteration, task.slot, task.max_proposals, task.threshold)


def run_abc(
    problem: SegmentProblem,
    ranked: Sequence[Individual],
    schedule: AbcSchedule,
    seed: np.random.SeedSequence,
    pool: WorkerPool = SERIAL,
) -> AbcResult:
    """
    ABC-PMC on one segment

    Args:
        problem: Segment to fit
        ranked: Ranked GA estimates (best first)
        schedule: ABC settings
        seed: Segment seed; init and per-slot streams are derived from it
        pool: Worker pool for slot filling

    Returns:
        AbcResult with the final weighted population
    """
    bounds = schedule.bounds
    t = thresholds(ranked, schedule)
    current = init_particles(ranked, schedule, child_sequences(seed, _INIT))
    sigma = kernel_covariance(current.thetas, bounds, schedule.regularization)
    proposals = [0]

    # Iteration 1 is the initial population; T_1 only bounds it through the GA ranking.
    for j in range(2, schedule.n_iterations + 1):
        threshold = t[j - 1]
        chol = np.linalg.cholesky(sigma)
        tasks = [
            SlotTask(
                problem=problem,
                prev_thetas=current.thetas,
                prev_weights=current.weights,
                chol=chol,
                lower=bounds.lower,
                upper=bounds.upper,
                threshold=threshold,
                seed=child_sequences(seed, _SLOT, j, v),
                max_proposals=schedule.max_proposals_per_slot,
                iteration=j,
                slot=v,
            )
            for v in range(current.size)
        ]
        results = pool.map(fill_slot, tasks)
        thetas = np.vstack([r[0] for r in results])
        eps = np.array([r[1] for r in results], dtype=float)
        weights = update_weights(thetas, current.thetas, current.weights, sigma)
        proposals.append(int(sum(r[2] for r in results)))

        current = ParticleSet(thetas=thetas, weights=weights, eps=eps)
        sigma = kernel_covariance(thetas, bounds, schedule.regularization)
        logger.debug(
            f"ABC iteration {j}: T={threshold:.4g}, {proposals[-1]} proposals, "
            f"max eps {np.max(eps):.4g}"
        )

    logger.info(f"ABC done: {sum(proposals)} proposals, final max eps {np.max(current.eps):.4g}")
    return AbcResult(population=current, thresholds=t, proposals=proposals)
