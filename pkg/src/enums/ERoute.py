from enum import Enum


class ERoute(Enum):
    HUMAN = "human"
    ALGORITHM = "algorithm"


class EMaskSource(Enum):
    ORACLE = "oracle"
    ESTIMATED = "estimated"
