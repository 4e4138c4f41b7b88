"""Module for initializing repositories, services, and controllers."""

from pathlib import Path
from typing import Optional

from src.controllers.data_controller import DataController
from src.controllers.evaluate_controller import EvaluateController
from src.controllers.experiment_controller import ExperimentController
from src.controllers.train_controller import TrainController
from src.repositories.dataset_repository import DatasetRepository
from src.repositories.human_repository import HumanRepository
from src.repositories.result_repository import ResultRepository
from src.repositories.system_repository import SystemRepository
from src.services.config_service import ConfigService
from src.services.experiment_service import ExperimentService


def initialize_modules(
        base_dir: str | Path = ".",
        workers: Optional[int] = None,
) -> tuple[DataController, TrainController, EvaluateController, ExperimentController]:
    """
    Initialize repositories, services, and controllers.

    Args:
        base_dir: Directory relative file paths resolve against
        workers: Process count for experiments (config / environment when None)

    Returns:
        Tuple of (DataController, TrainController, EvaluateController, ExperimentController)
    """
    # Initialize repositories
    dataset_repository = DatasetRepository(base_dir)
    human_repository = HumanRepository(base_dir)
    system_repository = SystemRepository(base_dir)
    result_repository = ResultRepository(base_dir)

    # Initialize services
    config_service = ConfigService()
    experiment_service = ExperimentService(workers)

    # Initialize controllers
    data_controller = DataController(config_service, dataset_repository, human_repository)
    train_controller = TrainController(config_service, dataset_repository, system_repository)
    evaluate_controller = EvaluateController(dataset_repository, system_repository, human_repository)
    experiment_controller = ExperimentController(config_service, experiment_service, result_repository)

    return data_controller, train_controller, evaluate_controller, experiment_controller
