"""Configuration: application settings, run-config files and logging setup."""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

from pydantic_settings import BaseSettings, SettingsConfigDict

from src.exceptions import ConfigError
from src.models import AseaConfig, TrainSpec

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="ASEA_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    log_level: str = "INFO"
    data_dir: str = "data"
    output_dir: str = "runs"
    sbu_dir: Optional[str] = None
    num_threads: int = 1

    # Inspection server
    model_path: Optional[str] = None
    server_host: str = "127.0.0.1"
    server_port: int = 8000


def get_settings() -> Settings:
    """Get application settings."""
    return Settings()


def configure_logging(level: str = "INFO") -> None:
    """Install one stream handler on the root logger."""
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, force=True)


MODEL_KEYS = frozenset(AseaConfig.model_fields)
TRAIN_KEYS = frozenset(TrainSpec.model_fields)
LIST_KEYS = frozenset(
    name
    for model in (AseaConfig, TrainSpec)
    for name, field in model.model_fields.items()
    if "List" in str(field.annotation) or "list" in str(field.annotation)
)


def parse_key_values(lines: Iterable[str], source: str = "<config>") -> Dict[str, str]:
    """Parse ``key=value`` lines, ignoring blanks and ``#`` comments."""
    values: Dict[str, str] = {}
    for line_number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_number}: expected key=value, got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in MODEL_KEYS and key not in TRAIN_KEYS:
            raise ConfigError(f"{source}:{line_number}: unknown configuration key '{key}'")
        values[key] = value
    return values


def _coerce(key: str, value: str) -> Any:
    if key in LIST_KEYS:
        return [item.strip() for item in value.split(",") if item.strip()]
    if value.lower() in ("none", "null", ""):
        return None
    return value


def resolve_run_config(
    path: Optional[Path] = None, overrides: Optional[Iterable[str]] = None
) -> Tuple[AseaConfig, TrainSpec]:
    """Merge a key=value file with ``key=value`` overrides into validated models."""
    values: Dict[str, str] = {}
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_key_values(Path(path).read_text().splitlines(), str(path)))
    if overrides:
        values.update(parse_key_values(overrides, "<command line>"))

    model_values = {k: _coerce(k, v) for k, v in values.items() if k in MODEL_KEYS}
    train_values = {k: _coerce(k, v) for k, v in values.items() if k in TRAIN_KEYS}
    try:
        config = AseaConfig(**model_values)
        spec = TrainSpec(**train_values)
    except ValueError as e:
        raise ConfigError(str(e)) from e

    logger.info("resolved model config: %s", config.model_dump_json())
    logger.info("resolved train spec: %s", spec.model_dump_json())
    return config, spec
