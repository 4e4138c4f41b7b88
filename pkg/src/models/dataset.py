"""Generated or ingested datasets: instances, counterfactuals and the human log over them."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.exceptions import LogValidationError
from src.models.bandit_log import BanditLog, CounterfactualTable, DeterministicSupportMask


@dataclass
class Dataset:
    """
    Instances with their full counterfactual rewards.

    `log` is the historical human log over (a subset of) the instances;
    `human_policy` is the exact human action distribution per row when the
    generator knows it in closed form; `oracle_mask` marks the deterministic
    set when the generator plants one.
    """

    features: np.ndarray
    counterfactuals: CounterfactualTable
    log: Optional[BanditLog] = None
    human_policy: Optional[np.ndarray] = None
    oracle_mask: Optional[DeterministicSupportMask] = None
    label_sets: Optional[list[list[int]]] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2:
            raise LogValidationError("Dataset features must be an N x d matrix")
        if self.counterfactuals.n != self.features.shape[0]:
            raise LogValidationError(
                f"Counterfactual table has {self.counterfactuals.n} rows for {self.features.shape[0]} instances")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def k(self) -> int:
        return self.counterfactuals.k

    def __repr__(self):
        return f"<Dataset(n={self.n}, k={self.k}, logged={self.log is not None})>"

    def take(self, rows: np.ndarray) -> 'Dataset':
        """Sub-dataset of the given rows; the log must be aligned row-for-row with the instances."""
        rows = np.asarray(rows, dtype=np.int64)
        log = None
        if self.log is not None:
            if self.log.n != self.n:
                raise LogValidationError("Only a row-aligned log can be subset with its dataset")
            log = self.log.take(rows)
            log = BanditLog(
                features=log.features, actions=log.actions, rewards=log.rewards, num_actions=log.k,
                humans=log.humans, propensities=log.propensities, num_humans=log.num_humans,
                instance_ids=np.arange(rows.size), binary_rewards=log.binary_rewards, validate=False,
            )
        return Dataset(
            features=self.features[rows],
            counterfactuals=self.counterfactuals.take(rows),
            log=log,
            human_policy=None if self.human_policy is None else self.human_policy[rows],
            oracle_mask=None if self.oracle_mask is None else self.oracle_mask.take(rows),
            label_sets=None if self.label_sets is None else [self.label_sets[i] for i in rows],
            metadata=dict(self.metadata),
        )
