"""Result repository: experiment tables as CSV files."""

from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel

from src.exceptions import StatisticsError
from src.schemas.experiment import ExperimentResult, WorkerProtocolResult

FLOAT_FORMAT = '%.17g'
RESULT_COLUMNS = ['method', 'repetition', 'total_reward', 'human_fraction', 'seed', 'sweep_value',
                  'failed', 'error', 'human_counts']
SUMMARY_COLUMNS = ['method', 'mean', 'stderr', 'n', 'mean_human_fraction', 'sweep_value']
SIGNIFICANCE_COLUMNS = ['method_a', 'method_b', 't', 'dof', 'p', 'significant', 'sweep_value']


def _frame(items: Sequence[BaseModel], columns: list[str]) -> pd.DataFrame:
    return pd.DataFrame([item.model_dump() for item in items], columns=columns)


class ResultRepository:
    """Repository for results.csv, summary.csv, significance.csv and workers.csv."""

    def __init__(self, base_dir: str | Path = "."):
        self.base_dir = Path(base_dir)

    def _dir(self, directory: str | Path) -> Path:
        directory = Path(directory)
        return directory if directory.is_absolute() else self.base_dir / directory

    @staticmethod
    def _write(frame: pd.DataFrame, path: Path):
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')

    def save_experiment(self, results: Sequence[ExperimentResult], directory: str | Path) -> dict[str, Path]:
        """
        Write the three experiment tables, concatenated over sweep values.

        Returns:
            Table name -> path
        """
        target = self._dir(directory)
        target.mkdir(parents=True, exist_ok=True)
        rows = _frame([row for result in results for row in result.rows], RESULT_COLUMNS)
        rows['human_counts'] = rows['human_counts'].map(lambda counts: ";".join(str(c) for c in counts))
        paths = {
            'results': target / "results.csv",
            'summary': target / "summary.csv",
            'significance': target / "significance.csv",
        }
        self._write(rows, paths['results'])
        self._write(_frame([s for result in results for s in result.summary], SUMMARY_COLUMNS), paths['summary'])
        self._write(_frame([s for result in results for s in result.significance], SIGNIFICANCE_COLUMNS),
                    paths['significance'])
        logger.debug(f"Wrote experiment tables to {target}")
        return paths

    def save_worker_protocol(self, result: WorkerProtocolResult, directory: str | Path) -> Path:
        target = self._dir(directory)
        target.mkdir(parents=True, exist_ok=True)
        path = target / "workers.csv"
        self._write(pd.DataFrame([w.model_dump() for w in result.workers]), path)
        return path

    def load_rewards(self, path: str | Path, method: Optional[str] = None) -> np.ndarray:
        """
        Per-repetition total rewards from a results table or a single-column file.

        Failed repetitions are dropped. With `method`, only that method's rows
        are kept.

        Raises:
            StatisticsError: If the file is missing or holds no usable rewards
        """
        source = Path(path) if Path(path).is_absolute() else self.base_dir / path
        if not source.is_file():
            raise StatisticsError(f"Reward file not found: {source}")
        frame = pd.read_csv(source)
        if 'total_reward' not in frame.columns:
            if frame.shape[1] != 1:
                raise StatisticsError(f"{source} needs a total_reward column or exactly one column")
            return frame.iloc[:, 0].dropna().to_numpy(dtype=float)
        if 'failed' in frame.columns:
            frame = frame[~frame['failed'].astype(bool)]
        if method is not None:
            if 'method' not in frame.columns:
                raise StatisticsError(f"{source} has no method column to filter on")
            frame = frame[frame['method'] == method]
        rewards = frame['total_reward'].dropna().to_numpy(dtype=float)
        if rewards.size == 0:
            raise StatisticsError(f"No rewards found in {source}" + (f" for {method}" if method else ""))
        return rewards
