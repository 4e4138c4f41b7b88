from enum import Enum


class EWorld(Enum):
    DETERMINISTIC = "deterministic"
    COVSHIFT = "covshift"
    MULTILABEL = "multilabel"
    RESPONDER = "responder"
    WORKERS = "workers"


class ESweepAxis(Enum):
    COST = "cost"
    S = "s"
    ALPHA = "alpha"
    MU = "mu"
    N_TRAIN = "n_train"
