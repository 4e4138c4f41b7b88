"""Simulated and replayed human decision-makers, and pools of them with costs."""

from abc import ABC, abstractmethod
from typing import Callable, Optional, Sequence

import numpy as np

from src.exceptions import HBMError
from src.models.bandit_log import CostFunction
from src.models.propensity_model import PropensityModel

OPTIMAL_ATOL = 1e-12


def sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one index per row of a row-stochastic matrix (inverse CDF, one uniform per row)."""
    probs = np.asarray(probs, dtype=float)
    cumulative = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cumulative[:, -1]
    return np.minimum((cumulative <= u[:, None]).sum(axis=1), probs.shape[1] - 1).astype(np.int64)


class HumanBehaviorModel(ABC):
    """
    A decision-maker that can be queried for an action on an instance.

    Implementations expose the full action distribution so logs can record
    the exact propensity of the sampled action.
    """

    def __init__(self, num_actions: int):
        if num_actions < 2:
            raise HBMError(f"Need at least two actions, got {num_actions}")
        self.num_actions = int(num_actions)

    @abstractmethod
    def probabilities(
            self,
            features: np.ndarray,
            rewards: Optional[np.ndarray] = None,
            instance_ids: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """
        Action distribution for each instance.

        Args:
            features: N x d features
            rewards: N x k counterfactual rows (needed by oracle-based models)
            instance_ids: N dataset row ids (needed by replay/tabular models)

        Returns:
            N x k row-stochastic matrix
        """

    def query_many(
            self,
            features: np.ndarray,
            rng: np.random.Generator,
            rewards: Optional[np.ndarray] = None,
            instance_ids: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        return sample_rows(self.probabilities(features, rewards, instance_ids), rng)

    def query(
            self,
            x: np.ndarray,
            rng: np.random.Generator,
            rewards_row: Optional[np.ndarray] = None,
            instance_id: Optional[int] = None,
    ) -> int:
        """Sample one action for one instance."""
        features = np.asarray(x, dtype=float).reshape(1, -1)
        rewards = None if rewards_row is None else np.asarray(rewards_row, dtype=float).reshape(1, -1)
        ids = None if instance_id is None else np.array([instance_id], dtype=np.int64)
        return int(self.query_many(features, rng, rewards, ids)[0])


class NoiseHBM(HumanBehaviorModel):
    """
    Uniform decision accuracy rho: optimal actions share rho, the rest share 1 - rho.

    Optimal actions are read from the counterfactual row (ties within
    OPTIMAL_ATOL). A row where every action is optimal gives a uniform choice.
    """

    def __init__(self, rho: float, num_actions: int):
        super().__init__(num_actions)
        if not 0.0 < rho <= 1.0:
            raise HBMError(f"Decision accuracy must lie in (0, 1], got {rho}")
        self.rho = float(rho)

    def __repr__(self):
        return f"<NoiseHBM(rho={self.rho}, k={self.num_actions})>"

    def probabilities(self, features, rewards=None, instance_ids=None) -> np.ndarray:
        if rewards is None:
            raise HBMError("NoiseHBM needs the counterfactual reward rows to know the optimal actions")
        rewards = np.asarray(rewards, dtype=float)
        optimal = rewards >= rewards.max(axis=1, keepdims=True) - OPTIMAL_ATOL
        n_optimal = optimal.sum(axis=1, keepdims=True)
        n_other = self.num_actions - n_optimal
        probs = np.where(
            optimal,
            self.rho / n_optimal,
            (1.0 - self.rho) / np.maximum(n_other, 1),
        )
        all_optimal = (n_other == 0).reshape(-1)
        probs[all_optimal] = 1.0 / self.num_actions
        return probs


class BlackBoxHBM(HumanBehaviorModel):
    """Classifier-driven human: P(a|x) proportional to exp(T * s_a(x)), s = classifier class probabilities."""

    def __init__(self, classifier: PropensityModel, temperature: float):
        super().__init__(classifier.num_classes)
        if not np.isfinite(temperature) or temperature <= 0:
            raise HBMError(f"Temperature must be positive and finite, got {temperature}")
        self.classifier = classifier
        self.temperature = float(temperature)

    def __repr__(self):
        return f"<BlackBoxHBM(T={self.temperature}, classifier={self.classifier!r})>"

    def probabilities(self, features, rewards=None, instance_ids=None) -> np.ndarray:
        logits = self.temperature * self.classifier.predict_raw(features)
        logits = logits - logits.max(axis=1, keepdims=True)
        weights = np.exp(logits)
        return weights / weights.sum(axis=1, keepdims=True)


class ReplayHBM(HumanBehaviorModel):
    """Replays recorded annotations: a random annotator of the instance answers with their recorded action."""

    def __init__(
            self,
            annotations: dict[int, tuple[np.ndarray, np.ndarray]],
            num_actions: int,
            num_annotators: int,
    ):
        super().__init__(num_actions)
        self.annotations = {
            int(i): (np.asarray(who, dtype=np.int64), np.asarray(what, dtype=np.int64))
            for i, (who, what) in annotations.items()
        }
        self.num_annotators = int(num_annotators)

    @classmethod
    def from_annotations(
            cls,
            instance_ids: Sequence[int],
            annotator_ids: Sequence,
            actions: Sequence[int],
            num_actions: Optional[int] = None,
    ) -> 'ReplayHBM':
        """
        Build from flat (instance_id, annotator_id, action) triples.

        Annotator ids of any hashable type are re-indexed densely in order of
        first appearance.
        """
        instance_ids = np.asarray(instance_ids, dtype=np.int64)
        actions = np.asarray(actions, dtype=np.int64)
        if instance_ids.size == 0:
            raise HBMError("No annotations to replay")
        if np.any(actions < 0):
            raise HBMError("Annotated actions must be non-negative")
        dense: dict = {}
        annotators = np.array([dense.setdefault(a, len(dense)) for a in annotator_ids], dtype=np.int64)
        grouped: dict[int, tuple[list, list]] = {}
        for i, who, what in zip(instance_ids, annotators, actions):
            grouped.setdefault(int(i), ([], []))
            grouped[int(i)][0].append(who)
            grouped[int(i)][1].append(what)
        k = int(actions.max()) + 1 if num_actions is None else int(num_actions)
        return cls({i: (np.array(w), np.array(a)) for i, (w, a) in grouped.items()}, max(k, 2), len(dense))

    def __repr__(self):
        return f"<ReplayHBM(instances={len(self.annotations)}, annotators={self.num_annotators})>"

    def _entry(self, instance_id: int) -> tuple[np.ndarray, np.ndarray]:
        entry = self.annotations.get(int(instance_id))
        if entry is None or entry[0].size == 0:
            raise HBMError(f"Instance {instance_id} has no recorded annotations")
        return entry

    def probabilities(self, features, rewards=None, instance_ids=None) -> np.ndarray:
        if instance_ids is None:
            raise HBMError("ReplayHBM is queried by instance id")
        probs = np.zeros((len(instance_ids), self.num_actions))
        for row, instance_id in enumerate(instance_ids):
            _, actions = self._entry(instance_id)
            probs[row] = np.bincount(actions, minlength=self.num_actions) / actions.size
        return probs

    def annotator(self, annotator: int) -> 'AnnotatorHBM':
        return AnnotatorHBM(self, annotator)


class AnnotatorHBM(HumanBehaviorModel):
    """One annotator of a ReplayHBM, answering only on the instances they labelled."""

    def __init__(self, replay: ReplayHBM, annotator: int):
        super().__init__(replay.num_actions)
        if not 0 <= annotator < replay.num_annotators:
            raise HBMError(f"Annotator {annotator} outside 0..{replay.num_annotators - 1}")
        self.replay = replay
        self.annotator_id = int(annotator)

    def probabilities(self, features, rewards=None, instance_ids=None) -> np.ndarray:
        if instance_ids is None:
            raise HBMError("AnnotatorHBM is queried by instance id")
        probs = np.zeros((len(instance_ids), self.num_actions))
        for row, instance_id in enumerate(instance_ids):
            who, actions = self.replay._entry(instance_id)
            mine = actions[who == self.annotator_id]
            if mine.size == 0:
                raise HBMError(f"Annotator {self.annotator_id} did not label instance {instance_id}")
            probs[row] = np.bincount(mine, minlength=self.num_actions) / mine.size
        return probs


class TabularHBM(HumanBehaviorModel):
    """Closed-form human policy stored as one action distribution per dataset row."""

    def __init__(self, table: np.ndarray):
        table = np.asarray(table, dtype=float)
        if table.ndim != 2:
            raise HBMError("Tabular human policy must be an N x k matrix")
        super().__init__(table.shape[1])
        if np.any(table < 0) or not np.allclose(table.sum(axis=1), 1.0, atol=1e-9):
            raise HBMError("Every row of a tabular human policy must be a distribution")
        self.table = table

    def __repr__(self):
        return f"<TabularHBM(rows={self.table.shape[0]}, k={self.num_actions})>"

    def probabilities(self, features, rewards=None, instance_ids=None) -> np.ndarray:
        if instance_ids is None:
            raise HBMError("TabularHBM is queried by instance id")
        instance_ids = np.asarray(instance_ids, dtype=np.int64)
        if np.any(instance_ids < 0) or np.any(instance_ids >= self.table.shape[0]):
            raise HBMError("Instance id outside the tabulated range")
        return self.table[instance_ids]


AssignmentRule = Callable[[np.ndarray], np.ndarray]


class WorkerPool:
    """
    K human decision-makers with per-human costs.

    Log generation assigns each instance to a worker uniformly at random,
    unless `assignment` maps features to an N x K matrix of assignment
    probabilities.
    """

    def __init__(
            self,
            workers: Sequence[HumanBehaviorModel],
            costs: Sequence[float],
            assignment: Optional[AssignmentRule] = None,
    ):
        if not workers:
            raise HBMError("Worker pool is empty")
        if len(costs) != len(workers):
            raise HBMError(f"{len(workers)} workers but {len(costs)} costs")
        if any((not np.isfinite(c)) or c < 0 for c in costs):
            raise HBMError("Worker costs must be finite and non-negative")
        if len({w.num_actions for w in workers}) != 1:
            raise HBMError("All workers must share one action space")
        self.workers = list(workers)
        self.costs = [float(c) for c in costs]
        self.assignment = assignment

    @property
    def size(self) -> int:
        return len(self.workers)

    @property
    def num_actions(self) -> int:
        return self.workers[0].num_actions

    def __repr__(self):
        return f"<WorkerPool(K={self.size}, costs={self.costs})>"

    def cost_function(self) -> CostFunction:
        if self.size == 1:
            return CostFunction.constant(self.costs[0])
        return CostFunction.per_human(self.costs)

    def assignment_probabilities(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if self.assignment is None:
            return np.full((features.shape[0], self.size), 1.0 / self.size)
        probs = np.asarray(self.assignment(features), dtype=float)
        if probs.shape != (features.shape[0], self.size):
            raise HBMError(f"Assignment rule returned shape {probs.shape}")
        return probs

    def assign(self, features: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw a worker id per instance."""
        features = np.asarray(features, dtype=float)
        if self.assignment is None:
            return rng.integers(self.size, size=features.shape[0]).astype(np.int64)
        return sample_rows(self.assignment_probabilities(features), rng)
