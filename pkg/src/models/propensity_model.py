"""Fitted estimators of the historical policy pi0(a|x[,h]) and the assignment model d0(h|x)."""

from typing import Optional

import numpy as np
from sklearn.neighbors import NearestNeighbors

from src.enums.EPropensityKind import EPropensityKind
from src.exceptions import PropensityError
from src.models.softmax_model import SoftmaxModel
from utils.helpers import PROPENSITY_FLOOR, floor_probabilities

DEFAULT_NEIGHBORS = 25


def _knn_index(points: np.ndarray, n_neighbors: int) -> NearestNeighbors:
    return NearestNeighbors(n_neighbors=min(n_neighbors, points.shape[0])).fit(points)


class PropensityModel:
    """
    Classifier of a discrete target (action or human id) given features.

    The estimator is one of:
      - a SoftmaxModel (linear or mlp) fitted by maximum likelihood
      - a knn class-frequency table over a stored reference set
      - a constant class, when the training log contained a single class

    When `num_humans` > 0 the model is conditioned on the human id through
    one-hot columns appended to the features; a conditioned knn model keeps
    one index per human, so neighbours never cross humans. Predictions are
    always floored.
    """

    def __init__(
            self,
            kind: EPropensityKind,
            num_classes: int,
            input_dim: int,
            num_humans: int = 0,
            floor: float = PROPENSITY_FLOOR,
            estimator: Optional[SoftmaxModel] = None,
            reference_features: Optional[np.ndarray] = None,
            reference_targets: Optional[np.ndarray] = None,
            n_neighbors: int = DEFAULT_NEIGHBORS,
            constant_class: Optional[int] = None,
    ):
        self.kind = EPropensityKind(kind)
        self.num_classes = int(num_classes)
        self.input_dim = int(input_dim)
        self.num_humans = int(num_humans)
        self.floor = float(floor)
        self.estimator = estimator
        self.n_neighbors = int(n_neighbors)
        self.constant_class = None if constant_class is None else int(constant_class)
        self.reference_features = None if reference_features is None else np.asarray(reference_features, dtype=float)
        self.reference_targets = None if reference_targets is None else np.asarray(reference_targets, dtype=np.int64)
        # Out-of-fold predictions for the training log, set by cross-fitting;
        # the fingerprint identifies that log
        self.training_predictions: Optional[np.ndarray] = None
        self.training_folds: Optional[np.ndarray] = None
        self.training_fingerprint: Optional[str] = None

        self._index = None
        self._human_indexes: dict[int, tuple[NearestNeighbors, np.ndarray]] = {}
        if self.constant_class is None:
            if self.kind is EPropensityKind.KNN:
                if self.reference_features is None or self.reference_targets is None:
                    raise PropensityError("knn propensity model needs a reference set")
                self._build_knn()
            elif self.estimator is None:
                raise PropensityError(f"{self.kind.value} propensity model needs a fitted softmax estimator")

    def _build_knn(self):
        if not self.per_human:
            self._index = _knn_index(self.reference_features, self.n_neighbors)
            return
        features = self.reference_features[:, :self.input_dim]
        owners = self.reference_features[:, self.input_dim:].argmax(axis=1)
        # Pooled index for humans absent from the reference set
        self._index = _knn_index(features, self.n_neighbors)
        for h in np.unique(owners):
            rows = owners == h
            self._human_indexes[int(h)] = (_knn_index(features[rows], self.n_neighbors), self.reference_targets[rows])

    def _knn_frequencies(self, design: np.ndarray) -> np.ndarray:
        one_hot = np.eye(self.num_classes)
        if not self.per_human:
            neighbours = self._index.kneighbors(design, return_distance=False)
            return one_hot[self.reference_targets[neighbours]].mean(axis=1)
        features = design[:, :self.input_dim]
        humans = design[:, self.input_dim:].argmax(axis=1)
        probs = np.empty((design.shape[0], self.num_classes))
        for h in np.unique(humans):
            rows = humans == h
            index, targets = self._human_indexes.get(int(h), (self._index, self.reference_targets))
            neighbours = index.kneighbors(features[rows], return_distance=False)
            probs[rows] = one_hot[targets[neighbours]].mean(axis=1)
        return probs

    @property
    def per_human(self) -> bool:
        return self.num_humans > 0

    def __repr__(self):
        return (f"<PropensityModel(kind={self.kind.value}, classes={self.num_classes}, "
                f"per_human={self.per_human}, constant={self.constant_class})>")

    def design_matrix(self, features: np.ndarray, humans: Optional[np.ndarray] = None) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(1, -1)
        if features.shape[1] != self.input_dim:
            raise PropensityError(f"Feature dimension {features.shape[1]} != fitted dimension {self.input_dim}")
        return design_matrix(features, humans, self.num_humans, self.kind)

    def predict_raw(self, features: np.ndarray, humans: Optional[np.ndarray] = None) -> np.ndarray:
        """Unfloored class probabilities, N x m."""
        design = self.design_matrix(features, humans)
        if self.constant_class is not None:
            return np.tile(np.eye(self.num_classes)[self.constant_class], (design.shape[0], 1))
        if self.kind is EPropensityKind.KNN:
            return self._knn_frequencies(design)
        return self.estimator.predict_proba(design)

    def predict(self, features: np.ndarray, humans: Optional[np.ndarray] = None) -> np.ndarray:
        """Floored class probabilities, N x m; every entry >= floor and rows sum to 1."""
        return floor_probabilities(self.predict_raw(features, humans), self.floor)

    def to_dict(self) -> dict:
        return {
            'kind': 'propensity_model',
            'estimator_kind': self.kind.value,
            'num_classes': self.num_classes,
            'input_dim': self.input_dim,
            'num_humans': self.num_humans,
            'floor': self.floor,
            'n_neighbors': self.n_neighbors,
            'constant_class': self.constant_class,
            'estimator': None if self.estimator is None else self.estimator.to_dict(),
            'reference_features': None if self.reference_features is None else self.reference_features.tolist(),
            'reference_targets': None if self.reference_targets is None else self.reference_targets.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'PropensityModel':
        if data.get('kind') != 'propensity_model':
            raise PropensityError(f"Not a serialized propensity model: kind={data.get('kind')}")
        return cls(
            kind=EPropensityKind(data['estimator_kind']),
            num_classes=data['num_classes'],
            input_dim=data['input_dim'],
            num_humans=data['num_humans'],
            floor=data['floor'],
            estimator=None if data['estimator'] is None else SoftmaxModel.from_dict(data['estimator']),
            reference_features=data['reference_features'],
            reference_targets=data['reference_targets'],
            n_neighbors=data['n_neighbors'],
            constant_class=data['constant_class'],
        )


class AssignmentModel:
    """Historical assignment d0(h|x): the constant 1/K model or a fitted classifier over human ids."""

    def __init__(self, num_humans: int, classifier: Optional[PropensityModel] = None):
        if num_humans < 1:
            raise PropensityError(f"num_humans must be >= 1, got {num_humans}")
        self.num_humans = int(num_humans)
        self.classifier = classifier

    @classmethod
    def randomized(cls, num_humans: int) -> 'AssignmentModel':
        return cls(num_humans)

    @property
    def is_randomized(self) -> bool:
        return self.classifier is None

    def __repr__(self):
        return f"<AssignmentModel(K={self.num_humans}, randomized={self.is_randomized})>"

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        n = 1 if features.ndim == 1 else features.shape[0]
        if self.is_randomized or self.num_humans == 1:
            return np.full((n, self.num_humans), 1.0 / self.num_humans)
        return self.classifier.predict(features)

    def to_dict(self) -> dict:
        return {
            'kind': 'assignment_model',
            'num_humans': self.num_humans,
            'classifier': None if self.classifier is None else self.classifier.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'AssignmentModel':
        if data.get('kind') != 'assignment_model':
            raise PropensityError(f"Not a serialized assignment model: kind={data.get('kind')}")
        classifier = data.get('classifier')
        return cls(data['num_humans'], None if classifier is None else PropensityModel.from_dict(classifier))


def design_matrix(
        features: np.ndarray,
        humans: Optional[np.ndarray],
        num_humans: int,
        kind: EPropensityKind,
) -> np.ndarray:
    """
    Features, with one-hot human columns appended when num_humans > 0.

    Raises:
        PropensityError: If a conditioned model gets no (or out-of-range) human ids
    """
    features = np.asarray(features, dtype=float)
    if num_humans <= 0:
        return features
    if humans is None:
        raise PropensityError("Per-human propensity model requires human ids")
    humans = np.asarray(humans, dtype=np.int64).reshape(-1)
    if np.any(humans < 0) or np.any(humans >= num_humans):
        raise PropensityError(f"Human ids must lie in 0..{num_humans - 1}")
    return np.hstack([features, np.eye(num_humans)[humans]])
