import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv  # type: ignore

from cyclescore.errors import CycleScoreError

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).resolve().parent.parent
DEFAULT_CONFIG_PATH = PROJECT_ROOT / "data" / "config.json"
WORKERS_ENV = "CYCLESCORE_WORKERS"
CONFIG_ENV = "CYCLESCORE_CONFIG"


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Return a copy of `base` with `override` merged in, recursing into dicts."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def resolve_path(path: str | Path) -> Path:
    """Resolve data paths relative to the project root."""
    path = Path(path)
    return path if path.is_absolute() else PROJECT_ROOT / path


class Settings:
    @staticmethod
    def load_env() -> None:
        """Load `.env` into the process environment."""
        load_dotenv(override=False)

    @staticmethod
    def workers() -> int:
        """Worker count from the environment, at least 1."""
        Settings.load_env()
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning("Ignoring non-integer %s=%r", WORKERS_ENV, raw)
            return 1

    @staticmethod
    def load_config(path: Optional[str | Path] = None) -> Dict[str, Any]:
        """Bundled defaults deep-merged with the user file, if any."""
        with open(DEFAULT_CONFIG_PATH, "r", encoding="utf-8") as f:
            config = json.load(f)
        if path is None:
            Settings.load_env()
            path = os.environ.get(CONFIG_ENV) or None
        if path is None:
            return config
        try:
            with open(path, "r", encoding="utf-8") as f:
                user = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise CycleScoreError(f"Cannot read config {path}: {e}") from e
        logger.info("Loaded config overrides from %s", path)
        return deep_merge(config, user)

