import copy
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv
from loguru import logger

from src.errors import ConfigurationError

DATA_ENV = "TENSLET_DATA"

DEFAULTS: Dict[str, Any] = {
    "logging": {
        "level": "INFO",
        "file_logging": False,
        "log_file": "tenslet.log",
        "rotation": "1 day",
        "retention": "7 days",
    },
    "transform": {"J0": 3, "J": 5, "convention": "degree", "bank": "tenslet-r2"},
    "quadrature": {"kind": "gl", "data_dir": None},
    "fields": {"reference_degree": 128, "distance": "geodesic"},
    "verify": {
        "filters_tol": 1e-12,
        "vsh_tol": 1e-10,
        "cross_route_tol": 1e-10,
        "cross_family_tol": 1e-11,
        "frame_tol": 1e-10,
        "grid_size": 10000,
    },
    "bench": {"J0": 1, "repeats": 3, "warmup": 1, "max_level": 9},
    "runtime": {"threads": None, "seed": 0},
}


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


class Config:
    """Configuration for the transforms, rules, fields and harnesses."""

    def __init__(self, config_path: Optional[str] = "config.yaml", env_file: Optional[str] = ".env"):
        self.config_path = config_path
        if env_file and Path(env_file).is_file():
            load_dotenv(env_file)
        self.config = self._load_config()
        self._apply_environment()
        self._validate_config()

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from YAML file over the built-in defaults."""
        if self.config_path is None:
            return copy.deepcopy(DEFAULTS)
        try:
            with open(self.config_path, "r", encoding="utf-8") as file:
                loaded = yaml.safe_load(file) or {}
            logger.info(f"Configuration loaded from {self.config_path}")
        except FileNotFoundError:
            logger.warning(f"Configuration file {self.config_path} not found, using defaults")
            return copy.deepcopy(DEFAULTS)
        except yaml.YAMLError as e:
            logger.error(f"Error parsing configuration file: {e}")
            raise ConfigurationError(f"Unreadable configuration file {self.config_path}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"Configuration file {self.config_path} must hold a mapping")
        return _deep_merge(DEFAULTS, loaded)

    def _apply_environment(self):
        data_dir = os.getenv(DATA_ENV)
        if data_dir:
            self.config["quadrature"]["data_dir"] = data_dir
            logger.debug(f"{DATA_ENV} sets quadrature.data_dir = {data_dir}")

    def _validate_config(self):
        """Validate configuration parameters."""
        for section in ("transform", "quadrature", "logging"):
            if not isinstance(self.config.get(section), dict):
                raise ConfigurationError(f"Missing required configuration section: {section}")

        convention = self.get("transform.convention")
        if convention not in ("degree", "eigenvalue"):
            raise ConfigurationError(f"transform.convention must be 'degree' or 'eigenvalue', got {convention!r}")
        J0, J = self.get("transform.J0"), self.get("transform.J")
        if not isinstance(J0, int) or J0 < 1:
            raise ConfigurationError(f"transform.J0 must be an integer >= 1, got {J0!r}")
        if not isinstance(J, int) or J < J0:
            raise ConfigurationError(f"transform.J must be an integer >= J0={J0}, got {J!r}")
        threads = self.get("runtime.threads")
        if threads is not None and (not isinstance(threads, int) or threads < 1):
            raise ConfigurationError(f"runtime.threads must be a positive integer, got {threads!r}")
        distance = self.get("fields.distance")
        if distance not in ("geodesic", "chord"):
            raise ConfigurationError(f"fields.distance must be 'geodesic' or 'chord', got {distance!r}")

        logger.debug("Configuration validation completed")

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value by key (supports nested keys with dot notation)."""
        value = self.config
        for k in key.split("."):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def update(self, key: str, value: Any):
        """Update configuration value and re-validate."""
        keys = key.split(".")
        config = self.config
        for k in keys[:-1]:
            if k not in config:
                config[k] = {}
            config = config[k]
        config[keys[-1]] = value
        logger.debug(f"Configuration updated: {key} = {value}")
        self._validate_config()

    def set(self, key: str, value: Any):
        """Set configuration value (alias for update)."""
        self.update(key, value)

    def save(self, path: Optional[str] = None):
        """Save configuration to file."""
        target = path or self.config_path
        with open(target, "w", encoding="utf-8") as file:
            yaml.safe_dump(self.config, file, default_flow_style=False, sort_keys=False)
        logger.info(f"Configuration saved to {target}")
