"""Data controller: synthetic dataset generation for the CLI."""

import json
from pathlib import Path
from typing import Any, Optional

from loguru import logger

from src.enums.EWorld import EWorld
from src.exceptions import LCPError
from src.models.human_behavior import NoiseHBM, TabularHBM
from src.repositories.dataset_repository import DatasetRepository
from src.repositories.human_repository import HumanRepository
from src.schemas.experiment import ExperimentConfig
from src.schemas.worker_pool import PoolSpec, WorkerSpec
from src.services.config_service import ConfigService
from src.services.experiment_service import World, build_world


class DataController:
    """Controller for the gen-data command."""

    def __init__(
            self,
            config_service: ConfigService,
            dataset_repository: DatasetRepository,
            human_repository: HumanRepository,
    ):
        """
        Initialize controller with its services and repositories.

        Args:
            config_service: ConfigService instance
            dataset_repository: DatasetRepository instance
            human_repository: HumanRepository instance
        """
        self.config_service = config_service
        self.dataset_repository = dataset_repository
        self.human_repository = human_repository

    def generate(self, world: str, params: Optional[dict[str, Any]], seed: int, out: str | Path,
                 cost: float = 0.0) -> dict:
        """
        Generate one world and write train/test (and tuning) files plus the test humans.

        Files in `out`: train.csv (log, counterfactuals, in_S when planted),
        test.csv (features, counterfactuals), tune.csv for covariate shift,
        humans.json (pool file) with any tables it references, world.json.

        Args:
            world: World name
            params: WorldConfig fields
            seed: Run seed
            out: Output directory
            cost: Per-decision human cost recorded in the pool file

        Returns:
            Dictionary with the written files
        """
        try:
            config = self.config_service.validate(
                {'world': EWorld(world).value, 'world_params': params or {}, 'train': {'cost': cost}},
                ExperimentConfig, source="gen-data",
            )
            generated = build_world(config, seed)
            files = self._write(generated, Path(out))
            (Path(out) / "world.json").write_text(json.dumps({
                'world': config.world.value, 'seed': seed, 'params': config.world_params.model_dump(mode='json'),
            }, indent=2, sort_keys=True) + "\n", encoding='utf-8')
            logger.success(f"Generated {config.world.value} world (seed={seed}) in {out}")
            return {
                'success': True,
                'message': f"Generated {config.world.value} world",
                'data': {'files': {name: str(path) for name, path in files.items()}},
            }
        except ValueError as e:
            logger.error(f"gen-data failed: {e}")
            return {
                'success': False,
                'message': f"Error generating data: {e}",
                'data': None,
            }

    def _write(self, world: World, out: Path) -> dict[str, Path]:
        files = {
            'train': self.dataset_repository.save(
                out / "train.csv", world.train.features, world.train.log, world.train.counterfactuals,
                world.train.oracle_mask),
            'test': self.dataset_repository.save(out / "test.csv", world.test.features,
                                                 counterfactuals=world.test.counterfactuals),
        }
        if world.tune is not None:
            files['tune'] = self.dataset_repository.save(
                out / "tune.csv", world.tune.features, world.tune.log, world.tune.counterfactuals)

        specs = []
        for h, worker in enumerate(world.pool.workers):
            if isinstance(worker, NoiseHBM):
                specs.append(WorkerSpec(kind='noise', rho=worker.rho))
            elif isinstance(worker, TabularHBM):
                name = f"test_policy_{h}.csv"
                self.human_repository.save_policy_table(out / name, worker.table)
                specs.append(WorkerSpec(kind='tabular', path=name))
            else:
                raise LCPError(f"Cannot describe {worker!r} in a pool file")
        files['humans'] = self.human_repository.save_pool(
            out / "humans.json", PoolSpec(num_actions=world.pool.num_actions, workers=specs, costs=world.pool.costs))
        return files
