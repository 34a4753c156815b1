"""Configuration loading for the recognizer: presets, run files and overrides."""

import logging
import os
from pathlib import Path
from typing import Any, Optional, Sequence, Union, cast

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from config.models import LmConfig, ModelConfig, RunConfig
from orchestration.errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)

PRESETS_PATH = Path(__file__).parent / "presets.yaml"
WORKERS_ENV = "ASR_WORKERS"


def load_presets() -> dict[str, dict[str, Any]]:
    """
    Load bundled presets from presets.yaml.

    Returns:
        Mapping with `models`, `lms` and `runs` tables

    Raises:
        FileNotFoundError: If presets.yaml is not found
        yaml.YAMLError: If YAML parsing fails
    """
    if not PRESETS_PATH.exists():
        raise FileNotFoundError(f"Presets file not found: {PRESETS_PATH}")

    with open(PRESETS_PATH, "r") as f:
        presets = yaml.safe_load(f)

    return cast(dict[str, dict[str, Any]], presets)


def _preset(table: str, name: str) -> dict[str, Any]:
    entries = load_presets()[table]
    if name not in entries:
        raise ConfigError(f"Unknown {table} preset {name!r}; choose from {sorted(entries)}")
    return dict(entries[name] or {})


def model_preset(name: str) -> ModelConfig:
    """ModelConfig of a bundled architecture (e.g. `swb300`, `size_28m`)."""
    return ModelConfig(**_preset("models", name))


def lm_preset(name: str) -> LmConfig:
    """LmConfig of a bundled LM (e.g. `lm_swb300`, `lm_3072`)."""
    return LmConfig(**_preset("lms", name))


def parse_override(item: str) -> tuple[str, str, Any]:
    """
    Split `section.key=value`; the value is parsed as a YAML scalar.

    Raises:
        ConfigError: If the item is not of that form
    """
    path, sep, raw = item.partition("=")
    section, dot, key = path.strip().partition(".")
    if not sep or not dot or not section or not key or "." in key:
        raise ConfigError(f"Override {item!r} must look like section.key=value")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"Override {item!r}: cannot parse value: {e}") from e
    return section, key, value


def _merge(base: dict[str, Any], update: dict[str, Any], origin: str) -> dict[str, Any]:
    merged = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for section, values in update.items():
        if isinstance(values, dict):
            if not isinstance(merged.get(section, {}), dict):
                raise ConfigError(f"{origin}: {section} is not a section")
            merged.setdefault(section, {}).update(values)
        else:
            merged[section] = values
    return merged


def _key_path(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"])
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def build_run_config(document: dict[str, Any], origin: str = "config") -> RunConfig:
    """
    Validate a RunConfig document.

    Raises:
        ConfigError: Naming the offending key path
    """
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(f"{origin}: {_key_path(e)}") from e


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Sequence[str] = (),
    preset: Optional[str] = None,
) -> RunConfig:
    """
    Resolve a run configuration: bundled preset, then the YAML file, then
    `--set` overrides.

    Raises:
        ConfigError: On unknown presets, sections or keys, and invalid values
        FileNotFoundError: If `path` does not exist
    """
    document: dict[str, Any] = _preset("runs", preset) if preset else {}
    if path is not None:
        with open(path, "r") as f:
            try:
                loaded = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"{path}: invalid YAML: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: expected a mapping of sections")
        document = _merge(document, loaded, str(path))
    for item in overrides:
        section, key, value = parse_override(item)
        document = _merge(document, {section: {key: value}}, f"--set {item}")
    config = build_run_config(document, str(path or preset or "config"))
    logger.debug(f"Resolved config from preset={preset} file={path} with {len(overrides)} override(s)")
    return config


def config_document(config: RunConfig) -> dict[str, Any]:
    return cast(dict[str, Any], config.model_dump(mode="json"))


def write_resolved_config(config: RunConfig, path: Union[str, Path]) -> Path:
    """Write the fully resolved config; loading it back reproduces the run."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(config_document(config), f, sort_keys=False)
    return path


def get_default_workers() -> int:
    """
    Default worker count, overridable with the ASR_WORKERS variable.

    Raises:
        ConfigError: If ASR_WORKERS is not a positive integer
    """
    raw = os.getenv(WORKERS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError as e:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from e
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return workers
