"""Dataset repository for delimited-text bandit logs and counterfactual tables."""

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger

from src.exceptions import LogValidationError
from src.models.bandit_log import BanditLog, CounterfactualTable, DeterministicSupportMask, NO_HUMAN

FLOAT_FORMAT = '%.17g'
_FEATURE = re.compile(r'^x(\d+)$')
_COUNTERFACTUAL = re.compile(r'^cf(\d+)$')


@dataclass
class DatasetFile:
    """Contents of one dataset file; every part except the features is optional."""

    features: np.ndarray
    log: Optional[BanditLog] = None
    counterfactuals: Optional[CounterfactualTable] = None
    oracle_mask: Optional[DeterministicSupportMask] = None
    # Original human id of each re-indexed id 0..K-1
    human_ids: Optional[np.ndarray] = None


def _indexed_columns(columns, pattern: re.Pattern) -> list[str]:
    found = sorted(((int(m.group(1)), c) for c in columns if (m := pattern.match(c))), key=lambda t: t[0])
    if [i for i, _ in found] != list(range(len(found))):
        raise LogValidationError(f"Columns matching {pattern.pattern} are not numbered 0..{len(found) - 1}")
    return [c for _, c in found]


def _reindex_humans(humans: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense ids 0..K-1 in ascending order of the original ids; -1 stays -1."""
    if np.any((humans < 0) & (humans != NO_HUMAN)):
        raise LogValidationError(f"Human ids must be >= 0 or {NO_HUMAN}")
    known = humans != NO_HUMAN
    original, dense = np.unique(humans[known], return_inverse=True)
    reindexed = np.full(humans.shape, NO_HUMAN, dtype=np.int64)
    reindexed[known] = dense
    return reindexed, original


class DatasetRepository:
    """
    Repository for the `x0..x{d-1}, a, r[, h][, p0][, cf0..cf{k-1}][, in_S]` format.

    Absent optional columns mean the quantity is absent. Empty `p0` cells
    mean no logged propensity for that record; `h` = -1 means no human id.
    Unless the caller fixes num_humans, human ids are re-indexed densely on
    load and the original ids are kept on the DatasetFile.
    """

    def __init__(self, base_dir: str | Path = "."):
        """
        Initialize repository with a base directory.

        Args:
            base_dir: Directory relative paths are resolved against
        """
        self.base_dir = Path(base_dir)

    def _path(self, path: str | Path) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path

    def save(
            self,
            path: str | Path,
            features: np.ndarray,
            log: Optional[BanditLog] = None,
            counterfactuals: Optional[CounterfactualTable] = None,
            oracle_mask: Optional[DeterministicSupportMask] = None,
    ) -> Path:
        """
        Write a dataset file; a log must be row-aligned with the features.

        Returns:
            Path written
        """
        features = np.asarray(features, dtype=float)
        n = features.shape[0]
        frame = pd.DataFrame(features, columns=[f"x{j}" for j in range(features.shape[1])])
        if log is not None:
            if log.n != n:
                raise LogValidationError(f"Log has {log.n} records for {n} instances")
            frame['a'] = log.actions
            frame['r'] = log.rewards
            if log.humans is not None:
                frame['h'] = log.humans
            if log.propensities is not None:
                frame['p0'] = log.propensities
        if counterfactuals is not None:
            if counterfactuals.n != n:
                raise LogValidationError(f"Counterfactual table has {counterfactuals.n} rows for {n} instances")
            for a in range(counterfactuals.k):
                frame[f"cf{a}"] = counterfactuals.values[:, a]
        if oracle_mask is not None:
            frame['in_S'] = oracle_mask.in_s.astype(np.int64)

        target = self._path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(target, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        logger.debug(f"Wrote {n} rows to {target}")
        return target

    def load(
            self,
            path: str | Path,
            num_actions: Optional[int] = None,
            num_humans: Optional[int] = None,
            binary_rewards: bool = False,
    ) -> DatasetFile:
        """
        Read a dataset file.

        The action space is the number of cf columns when present, otherwise
        `num_actions`, otherwise one more than the largest logged action.

        Raises:
            LogValidationError: If the file is missing, has no feature
                columns, or its log violates the log invariants
        """
        source = self._path(path)
        if not source.is_file():
            raise LogValidationError(f"Dataset file not found: {source}")
        frame = pd.read_csv(source)
        feature_columns = _indexed_columns(frame.columns, _FEATURE)
        if not feature_columns:
            raise LogValidationError(f"{source} has no x0.. feature columns")
        features = frame[feature_columns].to_numpy(dtype=float)

        cf_columns = _indexed_columns(frame.columns, _COUNTERFACTUAL)
        counterfactuals = CounterfactualTable(frame[cf_columns].to_numpy(dtype=float)) if cf_columns else None

        log = None
        human_ids = None
        if 'a' in frame.columns and 'r' in frame.columns:
            actions = frame['a'].to_numpy(dtype=np.int64)
            k = counterfactuals.k if counterfactuals is not None else num_actions
            if k is None:
                k = max(int(actions.max()) + 1, 2) if actions.size else 2
            humans = frame['h'].fillna(NO_HUMAN).to_numpy(dtype=np.int64) if 'h' in frame.columns else None
            if num_humans is None and humans is not None:
                humans, human_ids = _reindex_humans(humans)
                num_humans = max(human_ids.size, 1)
                if not np.array_equal(human_ids, np.arange(human_ids.size)):
                    logger.info(f"Re-indexed human ids {human_ids.tolist()} to 0..{human_ids.size - 1}")
            elif num_humans is None:
                num_humans = 1
            log = BanditLog(
                features=features,
                actions=actions,
                rewards=frame['r'].to_numpy(dtype=float),
                num_actions=k,
                humans=humans,
                propensities=frame['p0'].to_numpy(dtype=float) if 'p0' in frame.columns else None,
                num_humans=num_humans,
                binary_rewards=binary_rewards,
            )

        oracle_mask = None
        if 'in_S' in frame.columns:
            if log is None:
                raise LogValidationError(f"{source} has an in_S column but no logged actions")
            oracle_mask = DeterministicSupportMask.from_actions(frame['in_S'].to_numpy(dtype=bool), log.actions)

        logger.debug(f"Read {features.shape[0]} rows from {source} (log={log is not None}, "
                     f"counterfactuals={counterfactuals is not None})")
        return DatasetFile(features, log, counterfactuals, oracle_mask, human_ids)
