"""Train controller: training and OOD tuning of deferral systems."""

from pathlib import Path
from typing import Optional, Sequence

from loguru import logger
from pydantic import ValidationError

from src.enums.EMethod import EMethod
from src.enums.ERoute import EMaskSource
from src.exceptions import ConfigError, LogValidationError
from src.repositories.dataset_repository import DatasetFile, DatasetRepository
from src.repositories.system_repository import SystemRepository
from src.schemas.train_config import OODConfig
from src.services.config_service import ConfigService
from src.services.ood_service import tune_system
from src.services.training_service import train_system


class TrainController:
    """Controller for the train and tune-ood commands."""

    def __init__(
            self,
            config_service: ConfigService,
            dataset_repository: DatasetRepository,
            system_repository: SystemRepository,
    ):
        self.config_service = config_service
        self.dataset_repository = dataset_repository
        self.system_repository = system_repository

    def _load_log(self, data: str | Path, default_name: str) -> DatasetFile:
        path = Path(data)
        if path.is_dir():
            path = path / default_name
        dataset = self.dataset_repository.load(path)
        if dataset.log is None:
            raise LogValidationError(f"{path} holds no logged actions and rewards")
        return dataset

    def train(self, method: str, data: str | Path, config_path: Optional[str | Path], out: str | Path,
              seed: Optional[int] = None) -> dict:
        """
        Train a system on a logged dataset and save the bundle.

        Args:
            method: Method tag (ao, ts, jc, jcp, ao-ec, ts-ec, jc-ec, jc-od)
            data: Dataset file, or a directory holding train.csv
            config_path: TrainConfig JSON (defaults when None)
            out: Bundle directory
            seed: Overrides the config seed

        Returns:
            Dictionary with the bundle location and training summary
        """
        try:
            overrides = {'method': EMethod.from_value(method)}
            if seed is not None:
                overrides['seed'] = seed
            config = self.config_service.load_train_config(config_path, **overrides)
            dataset = self._load_log(data, "train.csv")
            mask = dataset.oracle_mask if config.ec.mask_source is EMaskSource.ORACLE else None
            system = train_system(dataset.log, config, mask=mask)
            self.system_repository.save(system, out)
            logger.success(f"Trained {system.method.value}; bundle written to {out}")
            return {
                'success': True,
                'message': f"Trained {system.method.value}",
                'data': {
                    'out': str(out),
                    'epochs': len(system.trace),
                    'stopped_epoch': system.stopped_epoch,
                    'final_objective': system.trace[-1] if system.trace else None,
                    'config_hash': system.config_hash,
                },
            }
        except ValueError as e:
            logger.error(f"train failed: {e}")
            return {
                'success': False,
                'message': f"Error training: {e}",
                'data': None,
            }

    def tune_ood(self, system_dir: str | Path, tuning_data: str | Path, grid: Optional[Sequence[float]],
                 out: str | Path, config_path: Optional[str | Path] = None) -> dict:
        """
        Tune the contamination of a gated system on a post-shift log and save the re-gated bundle.

        Args:
            system_dir: Bundle trained with an OOD detector (jc-od)
            tuning_data: Post-shift dataset file, or a directory holding tune.csv
            grid: Candidate contaminations (config grid when None)
            out: Output bundle directory
            config_path: TrainConfig JSON for propensity and refit settings

        Returns:
            Dictionary with the chosen p and the objective per grid value
        """
        try:
            config = self.config_service.load_train_config(config_path)
            if grid is not None:
                try:
                    ood = OODConfig.model_validate({**config.ood.model_dump(mode='json'), 'p_grid': list(grid)})
                except ValidationError as e:
                    raise ConfigError(f"Invalid OOD grid {list(grid)}: {e}")
                config = self.config_service.override(config, ood=ood)
            system = self.system_repository.load(system_dir)
            tuning = self._load_log(tuning_data, "tune.csv")
            tuned, best, scores = tune_system(system, tuning.log, config)
            self.system_repository.save(tuned, out, extra={
                'ood_tuning': {'p': best, 'scores': {str(p): v for p, v in scores.items()}},
            })
            logger.success(f"Tuned OOD contamination to p={best}; bundle written to {out}")
            return {
                'success': True,
                'message': f"Selected p={best}",
                'data': {'p': best, 'scores': scores, 'out': str(out)},
            }
        except ValueError as e:
            logger.error(f"tune-ood failed: {e}")
            return {
                'success': False,
                'message': f"Error tuning OOD gate: {e}",
                'data': None,
            }
