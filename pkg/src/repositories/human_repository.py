"""Human repository: recorded annotations, tabulated human policies and worker-pool files."""

import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import ValidationError

from src.enums.EHumanKind import EHumanKind
from src.exceptions import HBMError
from src.models.human_behavior import HumanBehaviorModel, NoiseHBM, ReplayHBM, TabularHBM, WorkerPool
from src.schemas.worker_pool import PoolSpec, WorkerSpec

ANNOTATION_COLUMNS = ('instance_id', 'annotator_id', 'action')
FLOAT_FORMAT = '%.17g'


class HumanRepository:
    """Repository for the files describing the humans a system is evaluated against."""

    def __init__(self, base_dir: str | Path = "."):
        self.base_dir = Path(base_dir)

    def _path(self, path: str | Path, relative_to: Optional[Path] = None) -> Path:
        path = Path(path)
        if path.is_absolute():
            return path
        return (relative_to or self.base_dir) / path

    def load_annotations(self, path: str | Path, num_actions: Optional[int] = None) -> ReplayHBM:
        """
        Read `instance_id, annotator_id, action` rows into a ReplayHBM.

        Raises:
            HBMError: If the file is missing or lacks a required column
        """
        source = self._path(path)
        if not source.is_file():
            raise HBMError(f"Annotation file not found: {source}")
        frame = pd.read_csv(source)
        missing = [c for c in ANNOTATION_COLUMNS if c not in frame.columns]
        if missing:
            raise HBMError(f"{source} lacks annotation columns {missing}")
        replay = ReplayHBM.from_annotations(
            frame['instance_id'].to_numpy(), frame['annotator_id'].tolist(), frame['action'].to_numpy(),
            num_actions,
        )
        logger.debug(f"Loaded {len(frame)} annotations from {source}: {replay}")
        return replay

    def save_annotations(self, path: str | Path, instance_ids, annotator_ids, actions) -> Path:
        target = self._path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame({
            'instance_id': list(instance_ids), 'annotator_id': list(annotator_ids), 'action': list(actions),
        }).to_csv(target, index=False, lineterminator='\n')
        return target

    def save_policy_table(self, path: str | Path, table: np.ndarray) -> Path:
        """One row per instance with columns q0..q{k-1}."""
        table = np.asarray(table, dtype=float)
        target = self._path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(table, columns=[f"q{a}" for a in range(table.shape[1])]).to_csv(
            target, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        return target

    def load_policy_table(self, path: str | Path) -> TabularHBM:
        source = self._path(path)
        if not source.is_file():
            raise HBMError(f"Human policy table not found: {source}")
        return TabularHBM(pd.read_csv(source).to_numpy(dtype=float))

    def save_pool(self, path: str | Path, spec: PoolSpec) -> Path:
        target = self._path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(spec.model_dump(mode='json', exclude_none=True), indent=2) + "\n",
                          encoding='utf-8')
        return target

    def load_pool(self, path: str | Path) -> WorkerPool:
        """
        Build a WorkerPool from a JSON pool file; worker paths resolve next to it.

        Raises:
            HBMError: If the file is missing, invalid or references missing files
        """
        source = self._path(path)
        if not source.is_file():
            raise HBMError(f"Pool file not found: {source}")
        try:
            spec = PoolSpec.model_validate(json.loads(source.read_text(encoding='utf-8')))
        except (json.JSONDecodeError, ValidationError) as e:
            raise HBMError(f"Invalid pool file {source}: {e}")
        workers = [self._worker(w, spec.num_actions, source.parent) for w in spec.workers]
        pool = WorkerPool(workers, spec.costs)
        logger.debug(f"Loaded {pool} from {source}")
        return pool

    def _worker(self, spec: WorkerSpec, num_actions: int, relative_to: Path) -> HumanBehaviorModel:
        if spec.kind is EHumanKind.NOISE:
            return NoiseHBM(spec.rho, num_actions)
        if spec.kind is EHumanKind.TABULAR:
            return self.load_policy_table(self._path(spec.path, relative_to))
        replay = self.load_annotations(self._path(spec.path, relative_to), num_actions)
        return replay if spec.annotator is None else replay.annotator(spec.annotator)

    def pool_from_annotations(self, path: str | Path, costs: Optional[Sequence[float]] = None,
                              num_actions: Optional[int] = None, per_annotator: bool = False) -> WorkerPool:
        """A pool replaying an annotation file: one replay human, or one worker per annotator (free by default)."""
        replay = self.load_annotations(path, num_actions)
        workers = [replay] if not per_annotator else [replay.annotator(j) for j in range(replay.num_annotators)]
        return WorkerPool(workers, [0.0] * len(workers) if costs is None else list(costs))
