"""Core data containers: bandit logs, counterfactual tables, costs and support masks."""

from typing import Iterable, Optional, Sequence

import numpy as np

from src.exceptions import LogValidationError
from src.schemas.bandit_record import ActionSpace, BanditRecord, LogViolation

NO_HUMAN = -1


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


class BanditLog:
    """
    Logged bandit feedback stored column-wise.

    Columns are immutable numpy arrays. `humans` uses NO_HUMAN (-1) for a
    record without a human id; `propensities` uses NaN for a record without
    a logged propensity. `instance_ids` index rows of the dataset the log was
    drawn from (counterfactual tables, annotation lists, cost tables).
    """

    def __init__(
            self,
            features: np.ndarray,
            actions: np.ndarray,
            rewards: np.ndarray,
            num_actions: int,
            humans: Optional[np.ndarray] = None,
            propensities: Optional[np.ndarray] = None,
            num_humans: int = 1,
            instance_ids: Optional[np.ndarray] = None,
            binary_rewards: bool = False,
            validate: bool = True,
    ):
        """
        Initialize a log.

        Args:
            features: N x d feature matrix
            actions: N logged action indices
            rewards: N observed rewards
            num_actions: Size k of the action space
            humans: Optional N human ids (NO_HUMAN for absent)
            propensities: Optional N logged propensities (NaN for absent)
            num_humans: Number K of human decision-makers
            instance_ids: Optional N row ids into the source dataset
            binary_rewards: Whether rewards must lie in {0, 1}
            validate: Raise LogValidationError when an invariant fails

        Raises:
            LogValidationError: If validate is set and the log is malformed
        """
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        n = features.shape[0]

        self.features = _frozen(features)
        self.actions = _frozen(np.asarray(actions, dtype=np.int64).reshape(-1))
        self.rewards = _frozen(np.asarray(rewards, dtype=float).reshape(-1))
        self.action_space = ActionSpace(k=int(num_actions))
        self.num_humans = int(num_humans)
        self.binary_rewards = bool(binary_rewards)
        self.humans = None if humans is None else _frozen(np.asarray(humans, dtype=np.int64).reshape(-1))
        self.propensities = None if propensities is None else _frozen(
            np.asarray(propensities, dtype=float).reshape(-1))
        self.instance_ids = _frozen(
            np.arange(n, dtype=np.int64) if instance_ids is None
            else np.asarray(instance_ids, dtype=np.int64).reshape(-1)
        )

        for name in ('actions', 'rewards', 'humans', 'propensities', 'instance_ids'):
            column = getattr(self, name)
            if column is not None and column.shape[0] != n:
                raise LogValidationError(f"Column '{name}' has {column.shape[0]} rows, expected {n}")
        if self.num_humans < 1:
            raise LogValidationError(f"num_humans must be >= 1, got {self.num_humans}")

        if validate:
            violations = validate_log(self)
            if violations:
                head = "; ".join(str(v) for v in violations[:5])
                raise LogValidationError(f"Invalid bandit log ({len(violations)} violations): {head}", violations)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def k(self) -> int:
        return self.action_space.k

    @property
    def has_humans(self) -> bool:
        return self.humans is not None and bool(np.all(self.humans >= 0))

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"<BanditLog(n={self.n}, d={self.dim}, k={self.k}, K={self.num_humans})>"

    def take(self, indices: Sequence[int]) -> 'BanditLog':
        """Return the sub-log made of the given record indices (in that order)."""
        idx = np.asarray(indices, dtype=np.int64)
        return BanditLog(
            features=self.features[idx],
            actions=self.actions[idx],
            rewards=self.rewards[idx],
            num_actions=self.k,
            humans=None if self.humans is None else self.humans[idx],
            propensities=None if self.propensities is None else self.propensities[idx],
            num_humans=self.num_humans,
            instance_ids=self.instance_ids[idx],
            binary_rewards=self.binary_rewards,
            validate=False,
        )

    def records(self) -> list[BanditRecord]:
        """Materialize the log as validated record objects."""
        out = []
        for i in range(self.n):
            h = None
            if self.humans is not None and self.humans[i] != NO_HUMAN:
                h = int(self.humans[i])
            p = None
            if self.propensities is not None and not np.isnan(self.propensities[i]):
                p = float(self.propensities[i])
            out.append(BanditRecord(
                x=self.features[i].tolist(), a=int(self.actions[i]), r=float(self.rewards[i]),
                h=h, logged_propensity=p,
            ))
        return out

    @classmethod
    def from_records(
            cls,
            records: Iterable[BanditRecord],
            num_actions: int,
            num_humans: int = 1,
            binary_rewards: bool = False,
    ) -> 'BanditLog':
        """Build a log from record objects; missing ids/propensities become sentinels."""
        records = list(records)
        if not records:
            raise LogValidationError("Cannot build a log from zero records")
        dims = {len(r.x) for r in records}
        if len(dims) != 1:
            raise LogValidationError(f"Records disagree on feature dimension: {sorted(dims)}")
        has_h = any(r.h is not None for r in records)
        has_p = any(r.logged_propensity is not None for r in records)
        return cls(
            features=np.array([r.x for r in records], dtype=float),
            actions=np.array([r.a for r in records]),
            rewards=np.array([r.r for r in records]),
            num_actions=num_actions,
            humans=np.array([NO_HUMAN if r.h is None else r.h for r in records]) if has_h else None,
            propensities=np.array([np.nan if r.logged_propensity is None else r.logged_propensity
                                   for r in records]) if has_p else None,
            num_humans=num_humans,
            binary_rewards=binary_rewards,
        )


def validate_log(log: BanditLog) -> list[LogViolation]:
    """
    Check every BanditLog invariant and report each violation.

    Args:
        log: Log to check (may have been built with validate=False)

    Returns:
        List of violations; empty iff the log is well-formed
    """
    violations: list[LogViolation] = []
    k = log.k

    bad_features = ~np.all(np.isfinite(log.features), axis=1)
    for i in np.flatnonzero(bad_features):
        violations.append(LogViolation(index=int(i), invariant="non-finite feature"))

    out_of_range = (log.actions < 0) | (log.actions >= k)
    for i in np.flatnonzero(out_of_range):
        violations.append(LogViolation(
            index=int(i), invariant="action out of range", detail=f"a={int(log.actions[i])}, k={k}"))

    non_finite = ~np.isfinite(log.rewards)
    for i in np.flatnonzero(non_finite):
        violations.append(LogViolation(index=int(i), invariant="non-finite reward"))

    if log.binary_rewards:
        not_binary = np.isfinite(log.rewards) & ~np.isin(log.rewards, (0.0, 1.0))
        for i in np.flatnonzero(not_binary):
            violations.append(LogViolation(
                index=int(i), invariant="non-binary reward", detail=f"r={float(log.rewards[i])}"))

    if log.humans is not None:
        bad_h = (log.humans != NO_HUMAN) & ((log.humans < 0) | (log.humans >= log.num_humans))
        for i in np.flatnonzero(bad_h):
            violations.append(LogViolation(
                index=int(i), invariant="human id out of range",
                detail=f"h={int(log.humans[i])}, K={log.num_humans}"))

    if log.propensities is not None:
        p = log.propensities
        present = ~np.isnan(p)
        bad_p = present & ~((p > 0.0) & (p <= 1.0))
        for i in np.flatnonzero(bad_p):
            violations.append(LogViolation(
                index=int(i), invariant="logged propensity outside (0,1]", detail=f"p={float(p[i])}"))

    violations.sort(key=lambda v: v.index)
    return violations


class CounterfactualTable:
    """Full potential rewards r(x_i, a) for every instance and action."""

    def __init__(self, rewards: np.ndarray):
        rewards = np.asarray(rewards, dtype=float)
        if rewards.ndim != 2 or rewards.shape[1] < 2:
            raise LogValidationError(f"Counterfactual table must be N x k with k >= 2, got shape {rewards.shape}")
        if not np.all(np.isfinite(rewards)):
            raise LogValidationError("Counterfactual table contains non-finite entries")
        self.values = _frozen(rewards)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.n

    def reward(self, row: int, action: int) -> float:
        """Potential reward of one action on one row."""
        return float(self.values[row, action])

    def row_max(self) -> np.ndarray:
        return self.values.max(axis=1)

    def optimal_actions(self, row: int, atol: float = 1e-12) -> np.ndarray:
        """All actions attaining the row maximum."""
        values = self.values[row]
        return np.flatnonzero(values >= values.max() - atol)

    def take(self, rows: Sequence[int]) -> 'CounterfactualTable':
        return CounterfactualTable(self.values[np.asarray(rows, dtype=np.int64)])


class AuditedCounterfactuals(CounterfactualTable):
    """Counterfactual table that records every (row, action) it is asked for."""

    def __init__(self, table: CounterfactualTable):
        super().__init__(table.values)
        self.accesses: list[tuple[int, int]] = []

    def reward(self, row: int, action: int) -> float:
        self.accesses.append((int(row), int(action)))
        return super().reward(row, action)


class CostFunction:
    """
    Human decision cost C(x), in one of three modes.

    - constant: one value for every human and instance
    - per_human: one value per human id
    - per_instance: a table indexed by dataset row (N, or N x K)
    """

    def __init__(self, mode: str, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if mode not in ('constant', 'per_human', 'per_instance'):
            raise ValueError(f"Unknown cost mode '{mode}'")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("Costs must be finite and non-negative")
        self.mode = mode
        self.values = _frozen(values)

    @classmethod
    def constant(cls, cost: float) -> 'CostFunction':
        return cls('constant', np.array(float(cost)))

    @classmethod
    def per_human(cls, costs: Sequence[float]) -> 'CostFunction':
        return cls('per_human', np.asarray(costs, dtype=float))

    @classmethod
    def per_instance(cls, table: np.ndarray) -> 'CostFunction':
        return cls('per_instance', np.asarray(table, dtype=float))

    def vector(self, humans: Optional[np.ndarray], rows: np.ndarray) -> np.ndarray:
        """
        Cost of each (human, dataset row) pair.

        Args:
            humans: Human ids (None or NO_HUMAN entries use human 0)
            rows: Dataset row ids (instance_ids of a log)

        Returns:
            Array of costs aligned with rows
        """
        rows = np.asarray(rows, dtype=np.int64)
        h = np.zeros_like(rows) if humans is None else np.maximum(np.asarray(humans, dtype=np.int64), 0)
        if self.mode == 'constant':
            return np.full(rows.shape[0], float(self.values))
        if self.mode == 'per_human':
            return self.values[h]
        if self.values.ndim == 1:
            return self.values[rows]
        return self.values[rows, h]

    def value(self, human: Optional[int], row: int) -> float:
        return float(self.vector(None if human is None else np.array([human]), np.array([row]))[0])

    def to_dict(self) -> dict:
        return {'mode': self.mode, 'values': self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> 'CostFunction':
        return cls(data['mode'], np.asarray(data['values'], dtype=float))


class DeterministicSupportMask:
    """Per-record membership in the deterministic set and the unseen complementary action."""

    def __init__(self, in_s: np.ndarray, complement: np.ndarray):
        in_s = np.asarray(in_s, dtype=bool).reshape(-1)
        complement = np.asarray(complement, dtype=np.int64).reshape(-1)
        if in_s.shape != complement.shape:
            raise ValueError("Mask columns must have the same length")
        if np.any(complement[in_s] < 0):
            raise ValueError("Every flagged record needs a complementary action")
        self.in_s = _frozen(in_s)
        self.complement = _frozen(np.where(in_s, complement, NO_HUMAN))

    @classmethod
    def empty(cls, n: int) -> 'DeterministicSupportMask':
        return cls(np.zeros(n, dtype=bool), np.full(n, NO_HUMAN))

    @classmethod
    def from_actions(cls, in_s: np.ndarray, actions: np.ndarray) -> 'DeterministicSupportMask':
        """Binary-action mask whose complement is the other action."""
        actions = np.asarray(actions, dtype=np.int64)
        return cls(in_s, 1 - actions)

    @property
    def n(self) -> int:
        return self.in_s.shape[0]

    @property
    def is_empty(self) -> bool:
        return not bool(self.in_s.any())

    @property
    def fraction(self) -> float:
        return float(self.in_s.mean()) if self.n else 0.0

    def take(self, rows: Sequence[int]) -> 'DeterministicSupportMask':
        rows = np.asarray(rows, dtype=np.int64)
        return DeterministicSupportMask(self.in_s[rows], self.complement[rows])

    def check_against(self, log: BanditLog):
        """Raise if the mask does not fit the log (length, binary actions, a^c != a)."""
        if self.n != log.n:
            raise ValueError(f"Mask has {self.n} rows, log has {log.n}")
        if self.is_empty:
            return
        if log.k != 2:
            raise ValueError("A non-empty deterministic mask requires a binary action space")
        if np.any(self.complement[self.in_s] == log.actions[self.in_s]):
            raise ValueError("Complementary action must differ from the logged action")
