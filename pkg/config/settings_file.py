# Flat key-value config files (`key = value`, `#` comments)
# Parsed with python-dotenv so the grammar matches the .env files used elsewhere.

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from dotenv import dotenv_values

from core.errors import ConfigError

logger = logging.getLogger(__name__)


def read_settings(path: Union[str, Path]) -> Dict[str, str]:
    """
    Read a key-value config file into a plain dict.

    Keys are stripped; empty values are kept as empty strings so that
    validation can decide whether they are allowed.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = dotenv_values(path)
    settings = {}
    for key, value in raw.items():
        settings[key.strip()] = (value or "").strip()
    logger.debug(f"Read {len(settings)} settings from {path}")
    return settings


def split_list(value: str) -> List[str]:
    """'a, b ,c' -> ['a', 'b', 'c']; empty string -> []."""
    return [item.strip() for item in value.split(",") if item.strip()]


def parse_pair(value: str, key: str) -> Tuple[float, float]:
    """'30,90' -> (30.0, 90.0)."""
    parts = split_list(value)
    if len(parts) != 2:
        raise ConfigError(f"'{key}' must be two comma-separated numbers, got '{value}'")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"'{key}' must be numeric, got '{value}'")


def prefixed(settings: Dict[str, str], prefix: str) -> Dict[str, str]:
    """All entries `prefix.<name>` as {name: value}."""
    marker = prefix + "."
    return {k[len(marker):]: v for k, v in settings.items() if k.startswith(marker)}


def optional_float(settings: Dict[str, str], key: str) -> Optional[float]:
    value = settings.get(key, "")
    if value == "":
        return None
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"'{key}' must be numeric, got '{value}'")
