"""Run configuration loading and environment defaults.

Environment variables (read through python-dotenv from an optional .env):
  SQUEEZESIM_OUTPUT_ROOT: default root for run directories (default: "results")
  SQUEEZESIM_LOG_LEVEL: default log level for the CLI (default: "INFO")
"""

import difflib
import hashlib
import json
import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError

from core import schemas
from core.errors import ConfigError
from core.schemas import RunConfig

load_dotenv()

DEFAULT_OUTPUT_ROOT = "results"


def _known_keys() -> set[str]:
    keys = set()
    for obj in vars(schemas).values():
        if isinstance(obj, type) and issubclass(obj, BaseModel) and obj is not BaseModel:
            for name, info in obj.model_fields.items():
                keys.add(name)
                choices = getattr(info.validation_alias, "choices", None) or []
                keys.update(c for c in choices if isinstance(c, str))
    return keys


def _describe(error: dict) -> str:
    location = ".".join(str(part) for part in error["loc"]) or "<root>"
    if error["type"] == "extra_forbidden":
        key = str(error["loc"][-1])
        suggestion = difflib.get_close_matches(key, sorted(_known_keys()), n=1, cutoff=0.6)
        hint = f"; did you mean '{suggestion[0]}'?" if suggestion else ""
        return f"{location}: unknown key '{key}'{hint}"
    return f"{location}: {error['msg']}"


def parse_config(data: dict, source: str = "<config>") -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        problems = [_describe(e) for e in exc.errors()]
        raise ConfigError(f"{source}: {len(problems)} invalid setting(s)", problems) from exc


def load_config(config_path="config.json") -> RunConfig:
    """Loads and validates a run configuration from a JSON file."""
    if not os.path.exists(config_path):
        raise ConfigError(f"Missing configuration file: {config_path}")
    with open(config_path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{config_path}: top level must be a JSON object")
    return parse_config(data, str(config_path))


def resolved_config(config: RunConfig) -> dict:
    """The config with every default filled in, as written to run manifests."""
    return config.model_dump(mode="json")


def config_digest(config: RunConfig) -> str:
    canonical = json.dumps(resolved_config(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def default_output_root() -> Path:
    return Path(os.environ.get("SQUEEZESIM_OUTPUT_ROOT", DEFAULT_OUTPUT_ROOT))


def default_log_level() -> str:
    return os.environ.get("SQUEEZESIM_LOG_LEVEL", "INFO").upper()
