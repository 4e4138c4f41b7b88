"""Loading, validating and hashing JSON configuration files."""

import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import Any, Type, TypeVar

from loguru import logger
from pydantic import BaseModel, ValidationError

from src.exceptions import ConfigError
from src.schemas.experiment import ExperimentConfig
from src.schemas.train_config import TrainConfig

ConfigT = TypeVar('ConfigT', bound=BaseModel)


def config_hash(config: BaseModel) -> str:
    """sha256 of the canonical JSON dump of a validated config."""
    canonical = json.dumps(config.model_dump(mode='json'), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


class ConfigService:
    """Service for reading configs from disk and applying overrides."""

    def load(self, path: str | Path, schema: Type[ConfigT]) -> ConfigT:
        """
        Read and validate a JSON config.

        Args:
            path: JSON file
            schema: pydantic model to validate against

        Returns:
            Validated config

        Raises:
            ConfigError: If the file is missing, unparsable or invalid
        """
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding='utf-8'))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config {path} is not valid JSON: {e}")
        return self.validate(data, schema, source=str(path))

    def validate(self, data: dict[str, Any], schema: Type[ConfigT], source: str = "<dict>") -> ConfigT:
        try:
            config = schema.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"Invalid {schema.__name__} in {source}: {e}")
        logger.debug(f"Loaded {schema.__name__} from {source} (hash {config_hash(config)[:12]})")
        return config

    def load_train_config(self, path: str | Path, **overrides) -> TrainConfig:
        """Read a TrainConfig; keyword overrides (e.g. method=...) replace top-level keys."""
        config = self.load(path, TrainConfig) if path else TrainConfig()
        return self.override(config, **overrides)

    def load_experiment_config(self, path: str | Path) -> ExperimentConfig:
        return self.load(path, ExperimentConfig)

    def override(self, config: ConfigT, **overrides) -> ConfigT:
        """Re-validate a config with some top-level keys replaced."""
        if not overrides:
            return config
        data = config.model_dump(mode='json')
        for key, value in overrides.items():
            if isinstance(value, BaseModel):
                value = value.model_dump(mode='json')
            elif isinstance(value, Enum):
                value = value.value
            data[key] = value
        return self.validate(data, type(config), source="override")
