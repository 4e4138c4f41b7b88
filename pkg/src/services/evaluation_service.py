"""Test-time evaluation of a human-AI team against full counterfactuals."""

from typing import Optional

import numpy as np
from loguru import logger

from src.exceptions import LogValidationError
from src.models.bandit_log import CostFunction, CounterfactualTable, NO_HUMAN
from src.models.deferral_system import DeferralSystem
from src.models.human_behavior import WorkerPool, sample_rows
from src.schemas.experiment import TeamEvaluation
from utils.helpers import rng_stream


def evaluate_team(
        system: DeferralSystem,
        features: np.ndarray,
        counterfactuals: CounterfactualTable,
        pool: WorkerPool,
        seed: int,
        cost: Optional[CostFunction] = None,
        instance_ids: Optional[np.ndarray] = None,
) -> TeamEvaluation:
    """
    Total realised reward of a deployed system on test instances.

    Algorithm-routed instances earn the counterfactual reward of the chosen
    action. Human-routed instances are answered by the pool (the routed human,
    or one assigned by the pool when the system names none) and earn the
    reward of the sampled action minus that human's cost. Rewards are read
    through counterfactuals.reward() for the realised action only.

    Args:
        system: Trained system
        features: N x d test features
        counterfactuals: Row-aligned potential rewards
        pool: Human workers answering routed instances
        seed: Seed for human sampling
        cost: Human cost (defaults to the pool's costs)
        instance_ids: Row ids for table-backed humans and per-instance costs

    Returns:
        TeamEvaluation

    Raises:
        LogValidationError: If the table does not cover every instance
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    n = features.shape[0]
    if counterfactuals.n < n:
        raise LogValidationError(f"Counterfactual table has {counterfactuals.n} rows for {n} test instances")
    ids = np.arange(n, dtype=np.int64) if instance_ids is None else np.asarray(instance_ids, dtype=np.int64)
    cost = cost or pool.cost_function()

    to_human, humans, actions = system.decide_batch(features)
    unassigned = to_human & (humans == NO_HUMAN)
    if unassigned.any():
        humans = humans.copy()
        humans[unassigned] = pool.assign(features[unassigned], rng_stream(seed, "eval-assign"))
    if np.any(humans[to_human] >= pool.size):
        raise LogValidationError(f"System routed to a human outside the pool of {pool.size}")

    human_actions = np.full(n, -1, dtype=np.int64)
    for h, worker in enumerate(pool.workers):
        rows = np.flatnonzero(to_human & (humans == h))
        if rows.size == 0:
            continue
        probs = worker.probabilities(features[rows], counterfactuals.values[rows], ids[rows])
        human_actions[rows] = sample_rows(probs, rng_stream(seed, "eval", h + 1))

    algorithm_reward = 0.0
    human_reward = 0.0
    for i in range(n):
        if to_human[i]:
            human_reward += counterfactuals.reward(i, int(human_actions[i])) - cost.value(int(humans[i]), int(ids[i]))
        else:
            algorithm_reward += counterfactuals.reward(i, int(actions[i]))

    counts = np.bincount(humans[to_human], minlength=pool.size) if to_human.any() else np.zeros(pool.size)
    evaluation = TeamEvaluation(
        total_reward=algorithm_reward + human_reward,
        algorithm_reward=algorithm_reward,
        human_reward=human_reward,
        human_fraction=float(to_human.mean()) if n else 0.0,
        human_counts=[int(c) for c in counts],
        n=n,
    )
    logger.debug(f"{system.method.value}: total={evaluation.total_reward:.4f}, "
                 f"human share={evaluation.human_fraction:.2%}")
    return evaluation
