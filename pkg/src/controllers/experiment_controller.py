"""Experiment controller: full experiment runs and significance tests."""

from pathlib import Path
from typing import Optional

from loguru import logger

from src.repositories.result_repository import ResultRepository
from src.services.config_service import ConfigService
from src.services.experiment_service import ExperimentService
from src.services.stats_service import t_test


class ExperimentController:
    """Controller for the experiment and ttest commands."""

    def __init__(
            self,
            config_service: ConfigService,
            experiment_service: ExperimentService,
            result_repository: ResultRepository,
    ):
        self.config_service = config_service
        self.experiment_service = experiment_service
        self.result_repository = result_repository

    def run(self, config_path: str | Path, out: str | Path, protocol: str = "methods") -> dict:
        """
        Run an experiment config and write its tables to `out`.

        Args:
            config_path: ExperimentConfig JSON
            out: Output directory for the CSV tables
            protocol: 'methods' (method comparison) or 'workers' (random-worker personalization)

        Returns:
            Dictionary with the table paths and the summary rows
        """
        try:
            config = self.config_service.load_experiment_config(config_path)
            if protocol == "workers":
                result = self.experiment_service.run_worker_protocol(config)
                path = self.result_repository.save_worker_protocol(result, out)
                logger.success(f"Worker protocol finished: Spearman rho={result.spearman:.3f}")
                return {
                    'success': True,
                    'message': f"Spearman rho={result.spearman:.3f}",
                    'data': {'workers': str(path), 'spearman': result.spearman, 'spearman_p': result.spearman_p},
                }

            results = self.experiment_service.run_experiment(config)
            paths = self.result_repository.save_experiment(results, out)
            failed = sum(row.failed for result in results for row in result.rows)
            logger.success(f"Experiment '{config.name}' finished; tables written to {out}"
                           + (f" ({failed} failed method runs)" if failed else ""))
            return {
                'success': True,
                'message': f"Experiment '{config.name}' finished",
                'data': {
                    'tables': {name: str(path) for name, path in paths.items()},
                    'summary': [row.model_dump() for result in results for row in result.summary],
                    'failed': failed,
                },
            }
        except ValueError as e:
            logger.error(f"experiment failed: {e}")
            return {
                'success': False,
                'message': f"Error running experiment: {e}",
                'data': None,
            }

    def ttest(self, file_a: str | Path, file_b: str | Path,
              method_a: Optional[str] = None, method_b: Optional[str] = None) -> dict:
        """Welch t-test between the per-repetition rewards of two files (optionally one method each)."""
        try:
            a = self.result_repository.load_rewards(file_a, method_a)
            b = self.result_repository.load_rewards(file_b, method_b)
            result = t_test(a, b)
            logger.success(f"t={result.t:.4f}, dof={result.dof:.2f}, p={result.p:.4g}, "
                           f"significant={result.significant}")
            return {
                'success': True,
                'message': "significant" if result.significant else "not significant",
                'data': result.model_dump(),
            }
        except ValueError as e:
            logger.error(f"ttest failed: {e}")
            return {
                'success': False,
                'message': f"Error running t-test: {e}",
                'data': None,
            }
