"""Run defaults loaded from YAML with environment overrides.

Resolution order for every value: command-line flag (applied by the CLI),
then the YAML file named by ``STAGFV_CONFIG`` or ``config/defaults.yaml``,
then ``DEFAULT_CONFIG`` below. ``STAGFV_OUT`` overrides the output directory.
"""

from __future__ import annotations

import os
from functools import lru_cache
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.core.logging import EventType, get_logger

logger = get_logger(__name__)

PROJECT_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_CONFIG_PATH = PROJECT_ROOT / "config" / "defaults.yaml"

# Default configuration when no file is available
DEFAULT_CONFIG: dict[str, Any] = {
    "version": "1.0",
    "levels_1d": [16, 32, 64, 128, 256, 512],
    "levels_2d": [9, 17, 33, 65],
    "tol": 1e-12,
    "ratio": 3.0,
    "amplitude": 0.1,
    "seed": 7,
    "identity_samples": 50,
    "workers": 1,
    "out_dir": "out",
    "quality_rules": "config/mesh_quality.yaml",
}


class ConfigError(Exception):
    """Raised when a configuration file is unreadable or invalid."""


class Settings(BaseModel):
    """Validated run defaults."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    version: str = "1.0"
    levels_1d: list[int] = Field(min_length=3)
    levels_2d: list[int] = Field(min_length=3)
    tol: float = Field(gt=0.0, lt=1.0)
    ratio: float = Field(ge=1.0)
    amplitude: float = Field(ge=0.0, lt=0.25)
    seed: int
    identity_samples: int = Field(ge=1)
    workers: int = Field(ge=1)
    out_dir: Path
    quality_rules: Path

    @field_validator("quality_rules")
    @classmethod
    def _anchor(cls, value: Path) -> Path:
        return value if value.is_absolute() else PROJECT_ROOT / value


def read_yaml(path: str | Path) -> dict[str, Any]:
    """Read a YAML mapping.

    Raises:
        ConfigError: If the file cannot be read or is not a mapping.
    """
    try:
        with Path(path).open(encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping, got {type(data).__name__}")
    return data


def load_settings(path: str | Path | None = None) -> Settings:
    """Merge defaults, the YAML file and environment overrides.

    Args:
        path: YAML file; ``STAGFV_CONFIG`` or the bundled defaults when omitted.

    Raises:
        ConfigError: On unreadable files, unknown keys or invalid values.
    """
    merged = dict(DEFAULT_CONFIG)
    source = Path(path) if path is not None else Path(
        os.environ.get("STAGFV_CONFIG", str(DEFAULT_CONFIG_PATH))
    )
    if source.exists():
        merged.update(read_yaml(source))
    elif path is not None:
        raise ConfigError(f"config file not found: {source}")

    if out := os.environ.get("STAGFV_OUT"):
        merged["out_dir"] = out

    try:
        settings = Settings.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(f"invalid config {source}: {e}") from e
    logger.debug(EventType.CONFIG_LOADED.value, source=str(source), out_dir=str(settings.out_dir))
    return settings


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Cached settings from the environment-selected file."""
    return load_settings()
