"""Evaluate controller: test-time reward of a saved system."""

from pathlib import Path

from loguru import logger

from src.exceptions import LogValidationError
from src.models.bandit_log import AuditedCounterfactuals
from src.repositories.dataset_repository import DatasetRepository
from src.repositories.human_repository import HumanRepository
from src.repositories.system_repository import SystemRepository
from src.services.evaluation_service import evaluate_team


class EvaluateController:
    """Controller for the evaluate command."""

    def __init__(
            self,
            dataset_repository: DatasetRepository,
            system_repository: SystemRepository,
            human_repository: HumanRepository,
    ):
        self.dataset_repository = dataset_repository
        self.system_repository = system_repository
        self.human_repository = human_repository

    def evaluate(self, system_dir: str | Path, test: str | Path, hbm: str | Path, seed: int = 0) -> dict:
        """
        Evaluate a saved system on a test file with full counterfactuals.

        `hbm` is a pool file (.json) whose costs are charged, or an annotation
        file replayed under the system's own cost (one worker per annotator
        for a personalized system).

        Args:
            system_dir: Bundle directory
            test: Dataset file with cf columns
            hbm: Pool or annotation file
            seed: Seed for human sampling

        Returns:
            Dictionary with the TeamEvaluation
        """
        try:
            system = self.system_repository.load(system_dir)
            dataset = self.dataset_repository.load(test)
            if dataset.counterfactuals is None:
                raise LogValidationError(f"{test} has no cf columns to evaluate against")

            cost = None
            if Path(hbm).suffix.lower() == ".json":
                pool = self.human_repository.load_pool(hbm)
            else:
                pool = self.human_repository.pool_from_annotations(
                    hbm, None, dataset.counterfactuals.k, per_annotator=system.is_personalized)
                cost = system.cost

            table = AuditedCounterfactuals(dataset.counterfactuals)
            evaluation = evaluate_team(system, dataset.features, table, pool, seed, cost)
            logger.success(f"Total reward {evaluation.total_reward:.4f} on {evaluation.n} instances "
                           f"({evaluation.human_fraction:.1%} to humans)")
            data = evaluation.model_dump()
            data['counterfactual_reads'] = len(table.accesses)
            return {
                'success': True,
                'message': f"Evaluated {system.method.value}",
                'data': data,
            }
        except ValueError as e:
            logger.error(f"evaluate failed: {e}")
            return {
                'success': False,
                'message': f"Error evaluating: {e}",
                'data': None,
            }
