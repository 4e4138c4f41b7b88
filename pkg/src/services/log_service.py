"""Log-level operations: validation reports and seeded train/test splits."""

import numpy as np

from src.exceptions import LogValidationError
from src.models.bandit_log import BanditLog, CounterfactualTable, validate_log
from src.schemas.bandit_record import LogViolation
from utils.helpers import rng_stream


def check_log(log: BanditLog) -> list[LogViolation]:
    """Validation report for a log (empty iff all invariants hold)."""
    return validate_log(log)


def split_indices(n: int, ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Shuffle 0..n-1 under `seed` and cut off round(ratio * n) test indices.

    Args:
        n: Number of records
        ratio: Test fraction in (0, 1)
        seed: Run seed

    Returns:
        (train indices, test indices), each in shuffled order
    """
    if not 0.0 < ratio < 1.0:
        raise LogValidationError(f"Split ratio must lie in (0, 1), got {ratio}")
    if n < 1:
        raise LogValidationError("Cannot split an empty log")
    order = rng_stream(seed, "shuffle").permutation(n)
    n_test = int(round(ratio * n))
    return order[n_test:], order[:n_test]


def split(log: BanditLog, ratio: float, seed: int) -> tuple[BanditLog, BanditLog]:
    """
    Partition a log into disjoint train/test logs by a seeded uniform shuffle.

    Args:
        log: Non-empty log
        ratio: Test fraction in (0, 1)
        seed: Run seed

    Returns:
        (train log, test log) with |test| = round(ratio * N)
    """
    train_idx, test_idx = split_indices(log.n, ratio, seed)
    return log.take(train_idx), log.take(test_idx)


def split_with_counterfactuals(
        log: BanditLog,
        counterfactuals: CounterfactualTable,
        ratio: float,
        seed: int,
) -> tuple[BanditLog, BanditLog, CounterfactualTable, CounterfactualTable]:
    """Split a log and its row-aligned counterfactual table identically."""
    if counterfactuals.n != log.n:
        raise LogValidationError(
            f"Counterfactual table has {counterfactuals.n} rows, log has {log.n}")
    train_idx, test_idx = split_indices(log.n, ratio, seed)
    return (
        log.take(train_idx),
        log.take(test_idx),
        counterfactuals.take(train_idx),
        counterfactuals.take(test_idx),
    )
