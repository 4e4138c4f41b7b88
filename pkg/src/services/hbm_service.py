"""Log generation from worker pools and fitting of black-box human models."""

from typing import Optional, Sequence

import numpy as np
from loguru import logger

from src.enums.EPropensityKind import EPropensityKind
from src.exceptions import HBMError
from src.models.bandit_log import BanditLog, CounterfactualTable
from src.models.human_behavior import BlackBoxHBM, HumanBehaviorModel, WorkerPool, sample_rows
from src.schemas.train_config import PropensityConfig
from src.services.propensity_service import fit_classifier
from utils.helpers import rng_stream

BLACKBOX_FRACTION = 0.3


def query(
        hbm: HumanBehaviorModel,
        x: np.ndarray,
        rng: np.random.Generator,
        rewards_row: Optional[np.ndarray] = None,
        instance_id: Optional[int] = None,
) -> int:
    """Sample one action from a human model under the caller's stream."""
    return hbm.query(x, rng, rewards_row, instance_id)


def generate_log(
        pool: Optional[WorkerPool],
        features: np.ndarray,
        counterfactuals: CounterfactualTable,
        seed: int,
        instance_ids: Optional[np.ndarray] = None,
        binary_rewards: bool = False,
        component: str = "hbm",
) -> BanditLog:
    """
    Simulate historical human decisions over a set of instances.

    Each instance gets a worker from the pool's assignment rule, the worker
    picks an action, and the reward is read from the counterfactual table.
    The logged propensity is the chosen worker's probability of that action.

    Args:
        pool: Worker pool
        features: N x d features
        counterfactuals: N x k potential rewards aligned with features
        seed: Run seed
        instance_ids: Dataset row ids (default 0..N-1)
        binary_rewards: Mark the log as a binary-reward log
        component: RNG component name

    Returns:
        BanditLog with human ids

    Raises:
        HBMError: If the pool is empty or shapes mismatch
    """
    if pool is None or pool.size == 0:
        raise HBMError("Cannot generate a log from an empty worker pool")
    features = np.asarray(features, dtype=float)
    n = features.shape[0]
    if counterfactuals.n != n:
        raise HBMError(f"Counterfactual table has {counterfactuals.n} rows for {n} instances")
    if counterfactuals.k != pool.num_actions:
        raise HBMError(f"Pool acts over {pool.num_actions} actions, table has {counterfactuals.k}")
    ids = np.arange(n, dtype=np.int64) if instance_ids is None else np.asarray(instance_ids, dtype=np.int64)

    humans = pool.assign(features, rng_stream(seed, component))
    actions = np.zeros(n, dtype=np.int64)
    propensities = np.zeros(n)
    for h, worker in enumerate(pool.workers):
        rows = np.flatnonzero(humans == h)
        if rows.size == 0:
            continue
        probs = worker.probabilities(features[rows], counterfactuals.values[rows], ids[rows])
        chosen = sample_rows(probs, rng_stream(seed, component, h + 1))
        actions[rows] = chosen
        propensities[rows] = probs[np.arange(rows.size), chosen]

    rewards = counterfactuals.values[np.arange(n), actions]
    logger.debug(f"Generated log of {n} decisions from {pool.size} workers")
    return BanditLog(
        features=features,
        actions=actions,
        rewards=rewards,
        num_actions=counterfactuals.k,
        humans=humans,
        propensities=propensities,
        num_humans=pool.size,
        instance_ids=ids,
        binary_rewards=binary_rewards,
    )


def fit_blackbox_hbm(
        features: np.ndarray,
        label_sets: Sequence[Sequence[int]],
        num_actions: int,
        temperature: float,
        seed: int,
        fraction: float = BLACKBOX_FRACTION,
        config: Optional[PropensityConfig] = None,
) -> BlackBoxHBM:
    """
    Fit a black-box human on a random fraction of the ground-truth-labelled instances.

    Instances with several labels contribute one training row per label.

    Args:
        features: N x d features
        label_sets: Correct labels per instance
        num_actions: Label universe size
        temperature: Sharpness T (larger T concentrates on high-score classes)
        seed: Run seed
        fraction: Share of instances used for fitting
        config: Classifier settings (knn by default)

    Raises:
        HBMError: If the chosen subset holds no labels
    """
    features = np.asarray(features, dtype=float)
    config = config or PropensityConfig(kind=EPropensityKind.KNN, cross_fit=False)
    rng = rng_stream(seed, "blackbox")
    n_subset = int(round(fraction * features.shape[0]))
    subset = rng.permutation(features.shape[0])[:n_subset]

    rows, targets = [], []
    for i in subset:
        for label in label_sets[i]:
            rows.append(i)
            targets.append(int(label))
    if not rows:
        raise HBMError("Black-box human subset is empty")
    classifier = fit_classifier(features[rows], np.array(targets), num_actions, config, rng)
    logger.info(f"Fitted black-box human on {len(subset)} instances ({len(rows)} labelled rows), T={temperature}")
    return BlackBoxHBM(classifier, temperature)
