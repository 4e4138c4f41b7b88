"""Repositories package."""

from .dataset_repository import DatasetFile, DatasetRepository
from .human_repository import HumanRepository
from .result_repository import ResultRepository
from .system_repository import SystemRepository

__all__ = ['DatasetFile', 'DatasetRepository', 'HumanRepository', 'ResultRepository', 'SystemRepository']
