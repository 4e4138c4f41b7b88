"""Shared numeric helpers: seeded RNG streams and probability flooring."""

import zlib

import numpy as np
from scipy.stats import norm

PROPENSITY_FLOOR = 0.01
SEED_MAX = 2 ** 64 - 1


def component_code(name: str) -> int:
    """Stable integer code for a component name (independent of PYTHONHASHSEED)."""
    return zlib.crc32(name.encode('utf-8'))


def rng_stream(seed: int, component: str, *path: int) -> np.random.Generator:
    """
    Build an independent generator for one component of a run.

    Streams are keyed by (seed, component, *path), so adding a new component
    never shifts the draws of an existing one.

    Args:
        seed: 64-bit unsigned run seed
        component: Component name ("datagen", "hbm", "init", "shuffle", ...)
        *path: Optional extra integers (repetition index, worker index, ...)

    Returns:
        numpy Generator backed by PCG64
    """
    if not 0 <= int(seed) <= SEED_MAX:
        raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    sequence = np.random.SeedSequence(
        entropy=int(seed),
        spawn_key=(component_code(component), *(int(p) for p in path)),
    )
    return np.random.Generator(np.random.PCG64(sequence))


def floor_probabilities(probs: np.ndarray, floor: float = PROPENSITY_FLOOR) -> np.ndarray:
    """
    Floor a row-stochastic matrix so every entry is at least `floor`.

    Uses the affine map p -> floor + (1 - m * floor) * p, which keeps rows on
    the simplex and never changes the order of entries within a row.
    """
    probs = np.asarray(probs, dtype=float)
    m = probs.shape[-1]
    if floor <= 0:
        return probs
    if m * floor >= 1:
        raise ValueError(f"Floor {floor} is too large for {m} outcomes")
    return floor + (1.0 - m * floor) * probs


def normal_cdf(values: np.ndarray) -> np.ndarray:
    """Standard normal CDF, elementwise."""
    return norm.cdf(values)
