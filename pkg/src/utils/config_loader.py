"""
Configuration loader with environment variable support
"""
import logging
import os
import re
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from src.errors import ConfigError
from src.utils.settings import PipelineConfig, build_config

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "AVNODE_OUTPUT_DIR"

_ENV_PATTERN = re.compile(r"\$\{([^}:]+)(?::([^}]*))?\}")


def load_config(config_path: str = "config.yaml") -> Dict[str, Any]:
    """
    Load configuration from YAML file with environment variable substitution

    Args:
        config_path: Path to config file

    Returns:
        Configuration dict
    """
    config_file = Path(config_path)
    if not config_file.exists():
        raise ConfigError(f"Config file not found: {config_path}")

    with open(config_file, "r") as f:
        try:
            config = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Config file {config_path} is not valid YAML: {e}") from e

    config = _substitute_env_vars(config)

    logger.info(f"Loaded configuration from {config_path}")
    return config


def _substitute_env_vars(obj: Any) -> Any:
    """
    Recursively substitute environment variables in config

    Supports ${VAR_NAME} and ${VAR_NAME:default_value} syntax
    """
    if isinstance(obj, dict):
        return {k: _substitute_env_vars(v) for k, v in obj.items()}
    elif isinstance(obj, list):
        return [_substitute_env_vars(item) for item in obj]
    elif isinstance(obj, str):

        def replacer(match):
            var_name = match.group(1)
            default_value = match.group(2) if match.group(2) is not None else ""
            value = os.environ.get(var_name, default_value)
            if not value and not default_value:
                logger.warning(f"Environment variable {var_name} not set and no default provided")
            return value

        return _ENV_PATTERN.sub(replacer, obj)
    else:
        return obj


def validate_config(config: Dict[str, Any]) -> bool:
    """
    Validate value ranges that the typed config cannot express

    Args:
        config: Configuration dict

    Returns:
        True if valid

    Raises:
        ConfigError if invalid
    """
    ga = config.get("ga", {}) or {}
    g_min = ga.get("generations_min", 2)
    g_max = ga.get("generations_max", 7)
    if not 1 <= g_min <= g_max:
        raise ConfigError(f"GA generations must satisfy 1 <= min <= max, got [{g_min}, {g_max}]")
    if ga.get("n_ranked", 25) > ga.get("population_size", 300):
        raise ConfigError("ga.n_ranked cannot exceed ga.population_size")

    abc = config.get("abc", {}) or {}
    n_iter = abc.get("n_iterations", 8)
    ranks = abc.get("threshold_ranks", [10, 8, 5, 3, 1, 1, 1, 1])
    if not isinstance(n_iter, int) or n_iter < 2:
        raise ConfigError(f"abc.n_iterations must be an integer >= 2, got {n_iter!r}")
    if len(ranks) != n_iter:
        raise ConfigError(f"abc.threshold_ranks needs {n_iter} entries, got {len(ranks)}")
    if any(b > a for a, b in zip(ranks, ranks[1:])):
        raise ConfigError("abc.threshold_ranks must be non-increasing")
    if max(ranks) > ga.get("n_ranked", 25):
        raise ConfigError("abc.threshold_ranks refer to ranks beyond ga.n_ranked")
    n_particles = abc.get("n_particles", 100)
    n_centers = abc.get("n_centers", 5)
    if n_particles % n_centers != 0:
        raise ConfigError("abc.n_particles must be a multiple of abc.n_centers")

    seed = config.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

    logger.info("Configuration validated successfully")
    return True


def load_pipeline_config(config_path: Optional[str] = None) -> PipelineConfig:
    """
    Load, validate and type a config file; without a path the defaults are used

    The AVNODE_OUTPUT_DIR environment variable overrides paths.output_dir.
    """
    raw: Dict[str, Any] = load_config(config_path) if config_path else {}
    validate_config(raw)
    env_output = os.environ.get(OUTPUT_DIR_ENV)
    if env_output:
        raw.setdefault("paths", {})
        raw["paths"] = dict(raw["paths"] or {}, output_dir=env_output)
    return build_config(raw)
