"""Novelty detectors that gate instances away from the learned system."""

from typing import Optional

import numpy as np
from sklearn.neighbors import NearestNeighbors

from src.enums.EOODKind import EOODKind
from src.exceptions import OODError

RIDGE_SCALE = 1e-6


class OODDetector:
    """
    Score-and-threshold detector fitted on training covariates.

    score(x) is the squared Mahalanobis distance to the training mean
    (ridge-regularised covariance) or the distance to the k-th nearest
    training point. The threshold is the (1 - p) quantile of the training
    scores and flag(x) = score(x) > threshold.
    """

    def __init__(
            self,
            kind: EOODKind,
            p: float,
            training_scores: np.ndarray,
            mean: Optional[np.ndarray] = None,
            precision: Optional[np.ndarray] = None,
            reference: Optional[np.ndarray] = None,
            n_neighbors: int = 5,
    ):
        if not 0.0 < p < 1.0:
            raise OODError(f"Contamination p must lie in (0, 1), got {p}")
        self.kind = EOODKind(kind)
        self.p = float(p)
        self.training_scores = np.asarray(training_scores, dtype=float)
        self.mean = None if mean is None else np.asarray(mean, dtype=float)
        self.precision = None if precision is None else np.asarray(precision, dtype=float)
        self.reference = None if reference is None else np.asarray(reference, dtype=float)
        self.n_neighbors = int(n_neighbors)
        self.threshold = float(np.quantile(self.training_scores, 1.0 - self.p))

        self._index = None
        if self.kind is EOODKind.KNN_DISTANCE:
            if self.reference is None:
                raise OODError("knn-distance detector needs its reference set")
            self._index = NearestNeighbors(n_neighbors=min(self.n_neighbors, self.reference.shape[0]))
            self._index.fit(self.reference)
        elif self.mean is None or self.precision is None:
            raise OODError("Mahalanobis detector needs mean and precision")

    def __repr__(self):
        return f"<OODDetector(kind={self.kind.value}, p={self.p}, threshold={self.threshold:.4g})>"

    def score(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(1, -1)
        if self.kind is EOODKind.MAHALANOBIS:
            centered = features - self.mean
            return np.einsum('ij,jk,ik->i', centered, self.precision, centered)
        distances, _ = self._index.kneighbors(features)
        return distances[:, -1]

    def flag(self, features: np.ndarray) -> np.ndarray:
        """Boolean flags, True for out-of-distribution."""
        return self.score(features) > self.threshold

    def with_contamination(self, p: float) -> 'OODDetector':
        """Same fitted state, re-thresholded at contamination p."""
        return OODDetector(self.kind, p, self.training_scores, self.mean, self.precision,
                           self.reference, self.n_neighbors)

    def to_dict(self) -> dict:
        return {
            'kind': 'ood_detector',
            'detector_kind': self.kind.value,
            'p': self.p,
            'training_scores': self.training_scores.tolist(),
            'mean': None if self.mean is None else self.mean.tolist(),
            'precision': None if self.precision is None else self.precision.tolist(),
            'reference': None if self.reference is None else self.reference.tolist(),
            'n_neighbors': self.n_neighbors,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'OODDetector':
        if data.get('kind') != 'ood_detector':
            raise OODError(f"Not a serialized OOD detector: kind={data.get('kind')}")
        return cls(
            kind=EOODKind(data['detector_kind']),
            p=data['p'],
            training_scores=data['training_scores'],
            mean=data['mean'],
            precision=data['precision'],
            reference=data['reference'],
            n_neighbors=data['n_neighbors'],
        )


def fit_mahalanobis(features: np.ndarray, p: float) -> OODDetector:
    n, d = features.shape
    if n < d + 2:
        raise OODError(f"Mahalanobis detector needs n >= d + 2 training points, got n={n}, d={d}")
    mean = features.mean(axis=0)
    covariance = np.atleast_2d(np.cov(features, rowvar=False))
    ridge = RIDGE_SCALE * np.trace(covariance) / d
    if ridge <= 0:
        raise OODError("Training covariance is degenerate (zero variance in every direction)")
    precision = np.linalg.inv(covariance + ridge * np.eye(d))
    centered = features - mean
    scores = np.einsum('ij,jk,ik->i', centered, precision, centered)
    return OODDetector(EOODKind.MAHALANOBIS, p, scores, mean=mean, precision=precision)


def fit_knn_distance(features: np.ndarray, p: float, n_neighbors: int) -> OODDetector:
    n = features.shape[0]
    if n < 2:
        raise OODError("knn-distance detector needs at least two training points")
    k = min(n_neighbors, n - 1)
    # k+1 neighbours: the nearest one of a training point is itself
    index = NearestNeighbors(n_neighbors=k + 1).fit(features)
    distances, _ = index.kneighbors(features)
    return OODDetector(EOODKind.KNN_DISTANCE, p, distances[:, -1], reference=features, n_neighbors=k)
