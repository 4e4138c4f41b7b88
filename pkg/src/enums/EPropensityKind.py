from enum import Enum


class EPropensityKind(Enum):
    SOFTMAX_LINEAR = "softmax-linear"
    SOFTMAX_MLP = "softmax-mlp"
    KNN = "knn"
