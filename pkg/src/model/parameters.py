"""
Model parameter vector, coupling-node settings and the parameter bounds
used by the estimators
"""
from dataclasses import dataclass, fields
from typing import Dict, Iterable, List, Sequence

import numpy as np

PATHWAYS = ("fp", "sp")

# Order of the 12 coordinates of theta; shared by every array representation.
PARAMETER_NAMES: List[str] = [
    "r_min_fp", "delta_r_fp", "tau_r_fp", "d_min_fp", "delta_d_fp", "tau_d_fp",
    "r_min_sp", "delta_r_sp", "tau_r_sp", "d_min_sp", "delta_d_sp", "tau_d_sp",
]
N_PARAMETERS = len(PARAMETER_NAMES)


@dataclass(frozen=True)
class PathwayParameters:
    """RP and CD dynamics of one pathway (ms); identical for all its nodes"""

    r_min: float
    delta_r: float
    tau_r: float
    d_min: float
    delta_d: float
    tau_d: float


@dataclass(frozen=True)
class ModelParameters:
    """The 12-dimensional parameter vector theta (all values in ms)"""

    r_min_fp: float
    delta_r_fp: float
    tau_r_fp: float
    d_min_fp: float
    delta_d_fp: float
    tau_d_fp: float
    r_min_sp: float
    delta_r_sp: float
    tau_r_sp: float
    d_min_sp: float
    delta_d_sp: float
    tau_d_sp: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"Model parameter {f.name} must be finite and >= 0, got {value}")

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "ModelParameters":
        values = np.asarray(values, dtype=float)
        if values.shape != (N_PARAMETERS,):
            raise ValueError(f"Expected {N_PARAMETERS} parameters, got shape {values.shape}")
        return cls(*(float(v) for v in values))

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> "ModelParameters":
        missing = [name for name in PARAMETER_NAMES if name not in data]
        if missing:
            raise ValueError(f"Missing model parameters: {missing}")
        return cls(**{name: float(data[name]) for name in PARAMETER_NAMES})

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PARAMETER_NAMES], dtype=float)

    def to_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in PARAMETER_NAMES}

    def pathway(self, name: str) -> PathwayParameters:
        """Get the six parameters of pathway 'fp' or 'sp'"""
        if name not in PATHWAYS:
            raise ValueError(f"Unknown pathway: {name}")
        return PathwayParameters(
            r_min=getattr(self, f"r_min_{name}"),
            delta_r=getattr(self, f"delta_r_{name}"),
            tau_r=getattr(self, f"tau_r_{name}"),
            d_min=getattr(self, f"d_min_{name}"),
            delta_d=getattr(self, f"delta_d_{name}"),
            tau_d=getattr(self, f"tau_d_{name}"),
        )


@dataclass(frozen=True)
class CouplingConfig:
    """Fixed refractory period and conduction delay of the coupling node"""

    rp_ms: float
    cd_ms: float = 60.0

    def __post_init__(self):
        if not self.rp_ms > 0:
            raise ValueError(f"Coupling RP must be > 0, got {self.rp_ms}")
        if self.cd_ms < 0:
            raise ValueError(f"Coupling CD must be >= 0, got {self.cd_ms}")


class ParameterBounds:
    """Box constraints on theta, one [low, high] pair per coordinate"""

    def __init__(self, ranges: Dict[str, Sequence[float]]):
        """
        Initialize bounds

        Args:
            ranges: Mapping parameter name -> (low, high), all 12 names required
        """
        missing = [name for name in PARAMETER_NAMES if name not in ranges]
        if missing:
            raise ValueError(f"Bounds missing for: {missing}")
        self.lower = np.array([float(ranges[n][0]) for n in PARAMETER_NAMES])
        self.upper = np.array([float(ranges[n][1]) for n in PARAMETER_NAMES])
        if np.any(self.upper < self.lower) or np.any(self.lower < 0):
            raise ValueError("Bounds must satisfy 0 <= low <= high")

    @classmethod
    def from_groups(cls, groups: Dict[str, Sequence[float]]) -> "ParameterBounds":
        """
        Build bounds from the grouped layout of the parameter range table

        Args:
            groups: Keys r_min, delta_r, d_min, delta_d, tau; each applies to
                both pathways (tau covers tau_r and tau_d)
        """
        ranges = {}
        for pathway in PATHWAYS:
            for key in ("r_min", "delta_r", "d_min", "delta_d"):
                ranges[f"{key}_{pathway}"] = groups[key]
            ranges[f"tau_r_{pathway}"] = groups["tau"]
            ranges[f"tau_d_{pathway}"] = groups["tau"]
        return cls(ranges)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, theta) -> bool:
        values = theta.to_array() if isinstance(theta, ModelParameters) else np.asarray(theta)
        return bool(np.all(values >= self.lower) and np.all(values <= self.upper))

    def contains_rows(self, values: np.ndarray) -> np.ndarray:
        """Row-wise membership for an (n, 12) array"""
        values = np.atleast_2d(values)
        return np.all((values >= self.lower) & (values <= self.upper), axis=1)

    def clip(self, values: np.ndarray) -> np.ndarray:
        return np.clip(values, self.lower, self.upper)

    def scale(self, unit: np.ndarray) -> np.ndarray:
        """Map points from the unit cube onto the box"""
        return self.lower + unit * self.width

    def to_dict(self) -> Dict[str, List[float]]:
        return {n: [float(lo), float(hi)] for n, lo, hi in zip(PARAMETER_NAMES, self.lower, self.upper)}

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ParameterBounds)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def __repr__(self) -> str:
        return f"ParameterBounds({self.to_dict()})"


GA_RANGES = {
    "r_min": (100.0, 1000.0),
    "delta_r": (0.0, 1000.0),
    "d_min": (2.0, 50.0),
    "delta_d": (0.0, 100.0),
    "tau": (25.0, 500.0),
}

ABC_RANGES = {
    "r_min": (30.0, 1300.0),
    "delta_r": (0.0, 1300.0),
    "d_min": (0.1, 80.0),
    "delta_d": (0.0, 130.0),
    "tau": (10.0, 700.0),
}

GA_BOUNDS = ParameterBounds.from_groups(GA_RANGES)
ABC_BOUNDS = ParameterBounds.from_groups(ABC_RANGES)


def stack(thetas: Iterable[ModelParameters]) -> np.ndarray:
    """Stack parameter vectors into an (n, 12) array"""
    rows = [t.to_array() for t in thetas]
    if not rows:
        return np.empty((0, N_PARAMETERS))
    return np.vstack(rows)
