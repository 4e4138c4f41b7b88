from enum import Enum


class EHumanKind(Enum):
    NOISE = "noise"
    TABULAR = "tabular"
    REPLAY = "replay"
