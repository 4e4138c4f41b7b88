"""Controllers package."""

from .data_controller import DataController
from .evaluate_controller import EvaluateController
from .experiment_controller import ExperimentController
from .train_controller import TrainController

__all__ = ['DataController', 'EvaluateController', 'ExperimentController', 'TrainController']
