"""Services package."""

from .config_service import ConfigService
from .experiment_service import ExperimentService

__all__ = ['ConfigService', 'ExperimentService']
