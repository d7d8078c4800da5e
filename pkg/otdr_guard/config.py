"""Configuration loader for otdr-guard."""

import hashlib
import json
from pathlib import Path
from typing import Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError

from .errors import ConfigError
from .models import RunConfig

CONFIG_FILENAME = "otdrguard.yaml"

# Environment variables may override paths, nothing else.
ENV_DATA = "OTDRGUARD_DATA"
ENV_MODEL_DIR = "OTDRGUARD_MODEL_DIR"
ENV_REPORT_DIR = "OTDRGUARD_REPORT_DIR"


def find_config_file(start_path: Optional[Path] = None) -> Optional[Path]:
    """Find otdrguard.yaml in current directory or parents."""
    if start_path is None:
        start_path = Path.cwd()

    current = start_path
    while current != current.parent:
        config_path = current / CONFIG_FILENAME
        if config_path.exists():
            return config_path
        current = current.parent

    return None


def parse_config(data: Optional[dict], source: str = "<config>") -> RunConfig:
    """Validate a config mapping; unknown keys are rejected."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    try:
        return RunConfig(**data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"{source}: {problems}") from e


def load_config(config_path: Optional[Path] = None, seed: Optional[int] = None) -> RunConfig:
    """Load configuration from a YAML/JSON file, falling back to defaults when none is found."""
    load_dotenv()

    if config_path is None:
        config_path = find_config_file()

    if config_path is None:
        config = RunConfig()
    else:
        if not config_path.exists():
            raise FileNotFoundError(f"{config_path} not found. Run 'otdrguard init' to create one.")
        with open(config_path, "r", encoding="utf-8") as f:
            try:
                data = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise ConfigError(f"{config_path}: {e}") from e
        config = parse_config(data, str(config_path))

    if seed is not None:
        if seed < 0:
            raise ConfigError("seed must be non-negative")
        config = config.model_copy(update={"seed": seed})
    return config


def config_hash(config: BaseModel) -> str:
    """SHA-256 of the canonical JSON form of a config."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_config(config: RunConfig, config_path: Path) -> None:
    """Save configuration to YAML file."""
    data = config.model_dump(mode="json")
    with open(config_path, "w", encoding="utf-8") as f:
        yaml.dump(data, f, default_flow_style=False, sort_keys=False)


def resolved_config_path(output: Path) -> Path:
    """Where a command records the config it ran with."""
    return output.with_name(f"{output.stem}.config.yaml")
