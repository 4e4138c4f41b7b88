"""Application configuration read from the environment."""

import os
from typing import Optional

from src.exceptions import ConfigError


class AppConfig:
    """Process-wide settings (logging, parallelism, output location)."""

    def __init__(self):
        # Format: LCP_<NAME>=value
        self.log_level = os.getenv('LCP_LOG_LEVEL', 'INFO').upper()
        self.log_file = os.getenv('LCP_LOG_FILE') or None
        self.output_dir = os.getenv('LCP_OUTPUT_DIR', './output')
        self.run_slow_tests = os.getenv('LCP_RUN_SLOW', '0') == '1'

        try:
            self.workers = int(os.getenv('LCP_WORKERS', '1'))
        except ValueError as e:
            raise ConfigError(f"LCP_WORKERS must be an integer: {e}")
        if self.workers < 1:
            raise ConfigError(f"LCP_WORKERS must be >= 1, got {self.workers}")

        if self.log_level not in ('TRACE', 'DEBUG', 'INFO', 'SUCCESS', 'WARNING', 'ERROR', 'CRITICAL'):
            raise ConfigError(f"Unknown LCP_LOG_LEVEL {self.log_level}")


# Global application config
_app_config: Optional[AppConfig] = None


def init_config(config: Optional[AppConfig] = None) -> AppConfig:
    """
    Initialize the application configuration.

    Args:
        config: AppConfig instance. If None, reads a new one from the environment.
    """
    global _app_config
    _app_config = config if config is not None else AppConfig()
    return _app_config


def get_config() -> AppConfig:
    """
    Get the application configuration, reading the environment on first use.

    Returns:
        AppConfig instance
    """
    if _app_config is None:
        return init_config()
    return _app_config
