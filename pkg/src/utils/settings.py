"""
Typed pipeline configuration

Defaults reproduce the published constants; every field can be overridden in
config.yaml for sensitivity studies.
"""
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from src.errors import ConfigError
from src.model.parameters import ABC_RANGES, GA_RANGES, ParameterBounds


def _ranges(groups: Dict[str, Any]) -> Dict[str, Tuple[float, float]]:
    return {k: (float(v[0]), float(v[1])) for k, v in groups.items()}


@dataclass(frozen=True)
class PathsConfig:
    rr_dir: str = "./data/rr"
    afr_dir: str = "./data/afr"
    outcomes: Optional[str] = None
    output_dir: str = "./output"


@dataclass(frozen=True)
class IngestConfig:
    segment_minutes: int = 10
    step_minutes: int = 5
    min_beats_per_minute: int = 20
    min_recording_hours: float = 12.0
    default_recording_start: str = "08:00:00"


@dataclass(frozen=True)
class SimulationConfig:
    duration_ms: float = 600_000.0
    coupling_cd_ms: float = 60.0
    coupling_rp_shortest: int = 10
    warmup_intervals: int = 10


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 300
    tournament_size: int = 4
    crossover_rate: float = 0.9
    mutation_rate: float = 0.3
    mutation_width: float = 0.05
    immigration_count: int = 10
    elitism: int = 1
    generations_min: int = 2
    generations_max: int = 7
    initial_generations: int = 7
    delta_p_quantiles: Tuple[float, float] = (0.25, 0.75)
    n_ranked: int = 25
    ranges: Dict[str, Tuple[float, float]] = field(default_factory=lambda: dict(GA_RANGES))

    @property
    def bounds(self) -> ParameterBounds:
        return ParameterBounds.from_groups(self.ranges)


@dataclass(frozen=True)
class AbcSchedule:
    n_particles: int = 100
    n_iterations: int = 8
    threshold_ranks: Tuple[int, ...] = (10, 8, 5, 3, 1, 1, 1, 1)
    n_centers: int = 5
    max_proposals_per_slot: int = 100_000
    regularization: float = 1e-6
    threshold_override: Optional[float] = None
    ranges: Dict[str, Tuple[float, float]] = field(default_factory=lambda: dict(ABC_RANGES))

    @property
    def bounds(self) -> ParameterBounds:
        return ParameterBounds.from_groups(self.ranges)


@dataclass(frozen=True)
class ReductionConfig:
    kde_grid_points: int = 512
    kde_padding_bandwidths: float = 3.0
    kde_max_samples: int = 20_000
    ks_sample_cap: int = 10_000
    dump_raw_samples: bool = False


@dataclass(frozen=True)
class TrendConfig:
    day_hours: Tuple[float, float] = (9.0, 21.0)
    night_hours: Tuple[float, float] = (2.0, 6.0)
    ks_window_start_hour: float = 8.0


@dataclass(frozen=True)
class ProcessingConfig:
    max_workers: int = 1


@dataclass(frozen=True)
class DebugConfig:
    dump_simulations: bool = False
    dump_histograms: bool = False


@dataclass(frozen=True)
class LoggingConfig:
    level: str = "INFO"
    file: Optional[str] = "avnode.log"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    ga: GaConfig = field(default_factory=GaConfig)
    abc: AbcSchedule = field(default_factory=AbcSchedule)
    reduction: ReductionConfig = field(default_factory=ReductionConfig)
    trends: TrendConfig = field(default_factory=TrendConfig)
    processing: ProcessingConfig = field(default_factory=ProcessingConfig)
    debug: DebugConfig = field(default_factory=DebugConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)

    @property
    def output_dir(self) -> Path:
        return Path(self.paths.output_dir)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def hash(self) -> str:
        """SHA-256 of the canonical JSON form, excluding logging, parallelism and the output location"""
        data = self.to_dict()
        for volatile in ("logging", "processing"):
            data.pop(volatile, None)
        data["paths"].pop("output_dir", None)
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"), default=list)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_SECTIONS = {
    "paths": PathsConfig,
    "ingest": IngestConfig,
    "simulation": SimulationConfig,
    "ga": GaConfig,
    "abc": AbcSchedule,
    "reduction": ReductionConfig,
    "trends": TrendConfig,
    "processing": ProcessingConfig,
    "debug": DebugConfig,
    "logging": LoggingConfig,
}

_TUPLE_FIELDS = {"delta_p_quantiles", "threshold_ranks", "day_hours", "night_hours"}


def _build_section(cls, raw: Optional[Dict[str, Any]], section: str):
    raw = dict(raw or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"Unknown keys in '{section}': {unknown}")
    for key in list(raw):
        if key in _TUPLE_FIELDS and raw[key] is not None:
            raw[key] = tuple(raw[key])
        elif key == "ranges":
            defaults = getattr(cls(), "ranges")
            merged = dict(defaults)
            merged.update(_ranges(raw[key]))
            raw[key] = merged
    try:
        return cls(**raw)
    except TypeError as e:
        raise ConfigError(f"Invalid '{section}' section: {e}") from e


def build_config(raw: Dict[str, Any]) -> PipelineConfig:
    """
    Convert a validated raw config dict into a PipelineConfig

    Args:
        raw: Dict as loaded from YAML

    Returns:
        PipelineConfig
    """
    raw = dict(raw or {})
    unknown = sorted(set(raw) - set(_SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(f"Unknown config sections: {unknown}")
    kwargs = {name: _build_section(cls, raw.get(name), name) for name, cls in _SECTIONS.items()}
    return PipelineConfig(seed=int(raw.get("seed", 0)), **kwargs)


def replace_section(config: PipelineConfig, section: str, **changes) -> PipelineConfig:
    """Copy of config with some fields of one section replaced"""
    from dataclasses import replace

    current = getattr(config, section)
    if not is_dataclass(current):
        raise ConfigError(f"Not a config section: {section}")
    return replace(config, **{section: replace(current, **changes)})
