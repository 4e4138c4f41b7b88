"""Configuration module for application settings."""

from .settings import AppConfig, get_config, init_config

__all__ = ['AppConfig', 'get_config', 'init_config']
