"""
Event-driven stochastic simulation of the dual-pathway AV-node network

Two chains of ten nodes (fast and slow pathway) share their first node's
input (the atrial impulse) and are joined at their last node by a coupling
node. Every conducted impulse is passed on to all adjacent nodes except the
one it came from, so retrograde conduction along a chain and retrograde
invasion of the opposite pathway through the coupling node both happen.
"""
import heapq
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from src.model.parameters import CouplingConfig, ModelParameters, PathwayParameters

logger = logging.getLogger(__name__)

NODES_PER_PATHWAY = 10
FP_NODES = range(0, NODES_PER_PATHWAY)
SP_NODES = range(NODES_PER_PATHWAY, 2 * NODES_PER_PATHWAY)
COUPLING_NODE = 2 * NODES_PER_PATHWAY
N_NODES = COUPLING_NODE + 1
ATRIUM = -1

FP_END = FP_NODES[-1]
SP_END = SP_NODES[-1]

DEFAULT_WARMUP_INTERVALS = 10


def _build_adjacency() -> List[List[int]]:
    adjacency: List[List[int]] = [[] for _ in range(N_NODES)]
    for chain in (FP_NODES, SP_NODES):
        for a, b in zip(chain[:-1], chain[1:]):
            adjacency[a].append(b)
            adjacency[b].append(a)
    for end in (FP_END, SP_END):
        adjacency[end].append(COUPLING_NODE)
        adjacency[COUPLING_NODE].append(end)
    return [sorted(nbrs) for nbrs in adjacency]


ADJACENCY = _build_adjacency()


def refractory(params: PathwayParameters, t_tilde: float) -> float:
    """
    Refractory period assigned to a node that conducts after a diastolic
    interval t_tilde

    Args:
        params: Pathway parameters
        t_tilde: Diastolic interval (ms), >= 0 (math.inf for a fully recovered node)

    Returns:
        R_min + dR * (1 - exp(-t_tilde / tau_R)) in ms
    """
    if params.tau_r <= 0:
        return params.r_min + params.delta_r if t_tilde > 0 else params.r_min
    return params.r_min + params.delta_r * (1.0 - math.exp(-t_tilde / params.tau_r))


def delay(params: PathwayParameters, t_tilde: float) -> float:
    """
    Conduction delay of a node that conducts after a diastolic interval t_tilde

    Args:
        params: Pathway parameters
        t_tilde: Diastolic interval (ms), >= 0

    Returns:
        D_min + dD * exp(-t_tilde / tau_D) in ms
    """
    if params.tau_d <= 0:
        return params.d_min if t_tilde > 0 else params.d_min + params.delta_d
    return params.d_min + params.delta_d * math.exp(-t_tilde / params.tau_d)


def coupling_rp_from_data(all_rr: Sequence[float], n_shortest: int = 10) -> float:
    """
    Coupling-node refractory period: mean of the ten shortest RR intervals

    Args:
        all_rr: Full-recording RR series of one patient (ms)
        n_shortest: Number of shortest intervals to average

    Returns:
        Refractory period (ms)
    """
    rr = np.asarray(all_rr, dtype=float)
    if rr.size < n_shortest:
        raise ValueError(f"Need at least {n_shortest} RR intervals, got {rr.size}")
    return float(np.mean(np.partition(rr, n_shortest - 1)[:n_shortest]))


def atrial_arrivals(rng: np.random.Generator, rate_hz: float, duration_ms: float) -> np.ndarray:
    """
    Homogeneous Poisson arrival times on [0, duration_ms)

    Args:
        rng: Random generator
        rate_hz: Mean arrival rate (impulses per second)
        duration_ms: Length of the window (ms)

    Returns:
        Sorted arrival times (ms)
    """
    scale = 1000.0 / rate_hz
    expected = rate_hz * duration_ms / 1000.0
    block = int(expected + 6.0 * math.sqrt(expected) + 16)
    times = np.cumsum(rng.exponential(scale, size=block))
    while times[-1] < duration_ms:
        more = np.cumsum(rng.exponential(scale, size=block)) + times[-1]
        times = np.concatenate([times, more])
    return times[times < duration_ms]


@dataclass
class TrackedSamples:
    """Per-activation refractory periods and conduction delays, per pathway (ms)"""

    r_fp: np.ndarray
    r_sp: np.ndarray
    d_fp: np.ndarray
    d_sp: np.ndarray


@dataclass
class SimulationResult:
    """Output of one simulation run"""

    ventricular_times: np.ndarray
    rr_intervals: np.ndarray
    n_fp: int
    n_sp: int
    n_atrial: int
    duration_ms: float
    tracked: Optional[TrackedSamples] = None

    @property
    def n_ventricular(self) -> int:
        return int(self.ventricular_times.size)


def simulate(
    theta: ModelParameters,
    coupling: CouplingConfig,
    rate_hz: float,
    duration_ms: float,
    seed,
    track: bool = False,
    warmup_intervals: int = DEFAULT_WARMUP_INTERVALS,
    arrivals: Optional[np.ndarray] = None,
) -> SimulationResult:
    """
    Simulate the network for one window of atrial fibrillation

    Events are processed in (time, node index, sender) order, so simultaneous
    arrivals at the coupling node resolve fast pathway first.

    Args:
        theta: Model parameters
        coupling: Coupling-node settings
        rate_hz: Atrial arrival rate lambda (1/s)
        duration_ms: Simulated time (ms)
        seed: Anything accepted by numpy.random.default_rng
        track: Store R and D of every pathway-node activation
        warmup_intervals: Leading RR intervals dropped from rr_intervals
        arrivals: Atrial impulse times (ms); drawn as a Poisson process at
            rate_hz when omitted

    Returns:
        SimulationResult
    """
    if not rate_hz > 0:
        raise ValueError(f"Atrial rate must be > 0, got {rate_hz}")
    if not duration_ms > 0:
        raise ValueError(f"Duration must be > 0, got {duration_ms}")

    if arrivals is None:
        arrivals = atrial_arrivals(np.random.default_rng(seed), rate_hz, duration_ms)
    else:
        arrivals = np.sort(np.asarray(arrivals, dtype=float))
        arrivals = arrivals[(arrivals >= 0) & (arrivals < duration_ms)]

    fp = theta.pathway("fp")
    sp = theta.pathway("sp")
    node_params = [fp] * NODES_PER_PATHWAY + [sp] * NODES_PER_PATHWAY

    t_last = [-math.inf] * N_NODES
    r_last = [0.0] * N_NODES

    queue = []
    first_sp = SP_NODES[0]
    for t in arrivals.tolist():
        queue.append((t, 0, ATRIUM))
        queue.append((t, first_sp, ATRIUM))
    heapq.heapify(queue)

    ventricular: List[float] = []
    n_fp = n_sp = 0
    r_samples = ([], [])
    d_samples = ([], [])
    coupling_rp = coupling.rp_ms
    coupling_cd = coupling.cd_ms
    push = heapq.heappush
    pop = heapq.heappop

    while queue:
        t, node, sender = pop(queue)
        t_tilde = t - (t_last[node] + r_last[node])
        if t_tilde < 0:
            continue

        if node == COUPLING_NODE:
            r, d = coupling_rp, coupling_cd
            ventricular.append(t + d)
            if sender == FP_END:
                n_fp += 1
            else:
                n_sp += 1
        else:
            params = node_params[node]
            r = refractory(params, t_tilde)
            d = delay(params, t_tilde)
            if track:
                side = 0 if node < NODES_PER_PATHWAY else 1
                r_samples[side].append(r)
                d_samples[side].append(d)

        t_last[node] = t
        r_last[node] = r
        t_out = t + d
        for neighbour in ADJACENCY[node]:
            if neighbour != sender:
                push(queue, (t_out, neighbour, node))

    times = np.asarray(ventricular, dtype=float)
    rr = np.diff(times)[warmup_intervals:] if times.size > 1 else np.empty(0)

    tracked = None
    if track:
        tracked = TrackedSamples(
            r_fp=np.asarray(r_samples[0]),
            r_sp=np.asarray(r_samples[1]),
            d_fp=np.asarray(d_samples[0]),
            d_sp=np.asarray(d_samples[1]),
        )

    logger.debug(
        f"Simulated {arrivals.size} atrial impulses -> {times.size} ventricular "
        f"(FP {n_fp}, SP {n_sp}) at lambda={rate_hz:.2f}"
    )
    return SimulationResult(
        ventricular_times=times,
        rr_intervals=rr,
        n_fp=n_fp,
        n_sp=n_sp,
        n_atrial=int(arrivals.size),
        duration_ms=float(duration_ms),
        tracked=tracked,
    )
