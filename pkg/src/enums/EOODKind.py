from enum import Enum


class EOODKind(Enum):
    MAHALANOBIS = "mahalanobis"
    KNN_DISTANCE = "knn-distance"
