import copy
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).parent / "default.yaml"


def search_paths() -> List[Path]:
    """Locations checked, in order, when no config path is given."""
    return [
        Path.cwd() / "protoquad.yaml",
        Path.cwd() / "protoquad.yml",
        Path.home() / ".protoquad" / "config.yaml",
        DEFAULT_CONFIG_PATH,
    ]


class ConfigManager:
    """Configuration manager for ProtoQuad."""

    def __init__(self, config_path: Optional[str] = None):
        """Initialize the configuration manager.

        Args:
            config_path (str): Path to the configuration file
        """
        if config_path:
            self.config_path = Path(config_path)
        else:
            self.config_path = next((p for p in search_paths() if p.exists()), DEFAULT_CONFIG_PATH)
        self.config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """Load the configuration, layered over the packaged defaults.

        Returns:
            Dict[str, Any]: Configuration dictionary
        """
        defaults = self._read(DEFAULT_CONFIG_PATH)
        if self.config_path == DEFAULT_CONFIG_PATH:
            return defaults
        try:
            loaded = self._read(self.config_path)
        except (OSError, yaml.YAMLError, ValueError) as e:
            logger.warning("Could not load config from %s: %s; using the packaged defaults",
                           self.config_path, e)
            return defaults
        return _merge(defaults, loaded)

    @staticmethod
    def _read(path: Path) -> Dict[str, Any]:
        with open(path, "r", encoding="utf-8") as f:
            payload = yaml.safe_load(f) or {}
        if not isinstance(payload, dict):
            raise ValueError(f"{path}: top level must be a mapping")
        return payload

    def get(self, key: str, default: Any = None) -> Any:
        """Get a configuration value.

        Args:
            key (str): Configuration key (e.g., "selection.k")
            default (Any): Default value if key not found

        Returns:
            Any: Configuration value
        """
        value = self.config
        try:
            for k in key.split("."):
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def set(self, key: str, value: Any) -> None:
        """Set a configuration value.

        Args:
            key (str): Configuration key
            value (Any): Configuration value
        """
        keys = key.split(".")
        config = self.config
        for k in keys[:-1]:
            if not isinstance(config.get(k), dict):
                config[k] = {}
            config = config[k]
        config[keys[-1]] = value

    def save(self, path: Optional[str] = None) -> None:
        """Save configuration to file.

        Args:
            path (str): Destination (uses config_path if None)
        """
        save_path = Path(path) if path else self.config_path
        save_path.parent.mkdir(parents=True, exist_ok=True)
        with open(save_path, "w", encoding="utf-8") as f:
            yaml.safe_dump(self.config, f, default_flow_style=False, sort_keys=True)

    def get_embedding_config(self) -> Dict[str, Any]:
        return self.config.get("embedding", {})

    def get_kernel_config(self) -> Dict[str, Any]:
        return self.config.get("kernel", {})

    def get_selection_config(self) -> Dict[str, Any]:
        return self.config.get("selection", {})

    def get_analysis_config(self) -> Dict[str, Any]:
        return self.config.get("analysis", {})

    def get_logging_config(self) -> Dict[str, Any]:
        return self.config.get("logging", {})

    def get_performance_config(self) -> Dict[str, Any]:
        return self.config.get("performance", {})

    def __repr__(self) -> str:
        return f"ConfigManager(config_path={self.config_path})"


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged
