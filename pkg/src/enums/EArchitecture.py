from enum import Enum


class EArchitecture(Enum):
    LINEAR = "linear"
    MLP = "mlp"


class EActivation(Enum):
    TANH = "tanh"
    RELU = "relu"
