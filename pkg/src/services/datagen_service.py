"""Synthetic worlds and the multi-label to bandit conversion."""

import math
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from src.exceptions import DataGenError
from src.models.bandit_log import BanditLog, CounterfactualTable, DeterministicSupportMask
from src.models.dataset import Dataset
from src.models.human_behavior import NoiseHBM, WorkerPool
from src.services.hbm_service import generate_log
from utils.helpers import normal_cdf, rng_stream

MAX_SHIFT_COORDINATES = 200


def deterministic_rewards(features: np.ndarray) -> np.ndarray:
    """N x 2 rewards: r1 = +0.5 when x0 * x1 > 0 else -0.5, and r0 = -r1 (indicator 0 on the boundary)."""
    features = np.asarray(features, dtype=float)
    sign = 2.0 * (features[:, 0] * features[:, 1] > 0).astype(float) - 1.0
    return np.column_stack([-0.5 * sign, 0.5 * sign])


def deterministic_set(x0: np.ndarray, s: float) -> np.ndarray:
    """Flags for the ceil(s * n) largest x0 values, ties broken by index."""
    n = x0.shape[0]
    count = int(math.ceil(s * n))
    order = np.lexsort((np.arange(n), -x0))
    in_s = np.zeros(n, dtype=bool)
    in_s[order[:count]] = True
    return in_s


def gen_deterministic_world(
        s: float,
        alpha: float,
        n: int,
        seed: int,
        strict_ec: bool = False,
) -> Dataset:
    """
    Two-action world where experts act deterministically on the top s-quantile of x0.

    x ~ N(0, I2), pi0(a=1|x) = Phi(x0). Deterministic instances take the
    Phi-preferred action (or, with strict_ec, the reward-optimal action),
    flipped to the other action with probability alpha.

    Args:
        s: Deterministic quantile in [0, 1)
        alpha: Flip probability in [0, 1]
        n: Number of instances
        seed: Run seed
        strict_ec: Deterministic actions are the reward-optimal ones

    Returns:
        Dataset with log, exact human policy and oracle mask

    Raises:
        DataGenError: For s outside [0, 1), alpha outside [0, 1] or n < 1
    """
    if not 0.0 <= s < 1.0:
        raise DataGenError(f"s must lie in [0, 1), got {s}")
    if not 0.0 <= alpha <= 1.0:
        raise DataGenError(f"alpha must lie in [0, 1], got {alpha}")
    if n < 1:
        raise DataGenError(f"n must be >= 1, got {n}")

    rng = rng_stream(seed, "datagen", 0)
    features = rng.standard_normal((n, 2))
    rewards = deterministic_rewards(features)
    p1 = normal_cdf(features[:, 0])

    in_s = deterministic_set(features[:, 0], s)
    preferred = np.argmax(rewards, axis=1) if strict_ec else (p1 > 0.5).astype(np.int64)
    flipped = rng.random(n) < alpha
    deterministic_action = np.where(flipped, 1 - preferred, preferred)
    sampled_action = (rng.random(n) < p1).astype(np.int64)
    actions = np.where(in_s, deterministic_action, sampled_action)

    human_policy = np.column_stack([1.0 - p1, p1])
    human_policy[in_s] = np.eye(2)[deterministic_action[in_s]]
    logged = human_policy[np.arange(n), actions]

    log = BanditLog(
        features=features, actions=actions, rewards=rewards[np.arange(n), actions], num_actions=2,
        humans=np.zeros(n, dtype=np.int64), propensities=logged,
    )
    logger.debug(f"Deterministic world: n={n}, s={s}, alpha={alpha}, |S|={int(in_s.sum())}")
    return Dataset(
        features=features,
        counterfactuals=CounterfactualTable(rewards),
        log=log,
        human_policy=human_policy,
        oracle_mask=DeterministicSupportMask.from_actions(in_s, actions),
        metadata={'world': 'deterministic', 's': s, 'alpha': alpha, 'strict_ec': strict_ec,
                  'biased': flipped & in_s},
    )


def covshift_rewards(features: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """r0 = x0 + e0, r1 = 2 x0 + x1 + e1 with e ~ N(0, 1) frozen per (instance, action)."""
    noise = rng.standard_normal((features.shape[0], 2))
    return np.column_stack([features[:, 0] + noise[:, 0], 2.0 * features[:, 0] + features[:, 1] + noise[:, 1]])


def _covshift_dataset(features: np.ndarray, seed: int, part: int, with_log: bool) -> Dataset:
    n = features.shape[0]
    rng = rng_stream(seed, "datagen", part)
    rewards = covshift_rewards(features, rng)
    p1 = normal_cdf(0.5 * features[:, 0])
    human_policy = np.column_stack([1.0 - p1, p1])
    log = None
    if with_log:
        actions = (rng.random(n) < p1).astype(np.int64)
        log = BanditLog(
            features=features, actions=actions, rewards=rewards[np.arange(n), actions], num_actions=2,
            humans=np.zeros(n, dtype=np.int64), propensities=human_policy[np.arange(n), actions],
        )
    return Dataset(
        features=features, counterfactuals=CounterfactualTable(rewards), log=log,
        human_policy=human_policy, metadata={'world': 'covshift'},
    )


def gen_covshift_world(
        mu: float,
        n_train: int,
        n_test: int,
        seed: int,
        n_tune: int = 0,
) -> tuple[Dataset, Dataset, Optional[Dataset]]:
    """
    Covariate-shift world: training x1 ~ N(mu, 1), test (and tuning) x ~ N(0, I2).

    pi0(a=1|x) = Phi(0.5 x0) for the logging humans everywhere.

    Returns:
        (train dataset with log, test dataset, tuning dataset with a post-shift log or None)
    """
    if n_train < 1 or n_test < 1:
        raise DataGenError(f"n_train and n_test must be >= 1, got {n_train}, {n_test}")
    if n_tune < 0:
        raise DataGenError(f"n_tune must be >= 0, got {n_tune}")
    rng = rng_stream(seed, "datagen", 0)
    train_x = np.column_stack([rng.standard_normal(n_train), mu + rng.standard_normal(n_train)])
    test_x = rng.standard_normal((n_test, 2))

    train = _covshift_dataset(train_x, seed, 1, with_log=True)
    test = _covshift_dataset(test_x, seed, 2, with_log=False)
    tune = None
    if n_tune:
        tune = _covshift_dataset(rng_stream(seed, "datagen", 3).standard_normal((n_tune, 2)), seed, 4, with_log=True)
    for dataset in (train, test, tune):
        if dataset is not None:
            dataset.metadata['mu'] = mu
    return train, test, tune


def gen_responder_world(n: int, seed: int, rho: float = 0.9) -> Dataset:
    """
    Responder band world: x ~ U[-1, 1]^2, responders are |x0| < 0.5.

    Treating (a=1) earns +1 on responders and -1 elsewhere; not treating earns
    0. No single hyperplane separates the band, so a linear policy cannot
    match it alone. The log comes from one NoiseHBM human of accuracy rho.
    """
    if n < 1:
        raise DataGenError(f"n must be >= 1, got {n}")
    rng = rng_stream(seed, "datagen", 0)
    features = rng.uniform(-1.0, 1.0, size=(n, 2))
    responder = np.abs(features[:, 0]) < 0.5
    rewards = np.column_stack([np.zeros(n), np.where(responder, 1.0, -1.0)])
    table = CounterfactualTable(rewards)
    pool = WorkerPool([NoiseHBM(rho, 2)], [0.0])
    log = generate_log(pool, features, table, seed)
    return Dataset(features=features, counterfactuals=table, log=log,
                   human_policy=pool.workers[0].probabilities(features, rewards),
                   metadata={'world': 'responder', 'rho': rho})


def gen_multilabel_world(n: int, d: int, n_labels: int, seed: int) -> tuple[np.ndarray, list[list[int]]]:
    """
    Scene-like multi-label data: label j is present iff x.w_j + noise > 0.5 |w_j|.

    The highest-scoring label is always present, so no instance is unlabelled.
    """
    if n < 1 or d < 1 or n_labels < 2:
        raise DataGenError(f"Need n >= 1, d >= 1 and n_labels >= 2, got {n}, {d}, {n_labels}")
    rng = rng_stream(seed, "datagen", 0)
    weights = rng.standard_normal((d, n_labels))
    features = rng.standard_normal((n, d))
    scores = features @ weights + 0.5 * rng.standard_normal((n, n_labels))
    present = scores > 0.5 * np.linalg.norm(weights, axis=0)
    present[np.arange(n), np.argmax(scores, axis=1)] = True
    return features, [np.flatnonzero(row).tolist() for row in present]


def multilabel_rewards(label_sets: Sequence[Sequence[int]], num_labels: int) -> np.ndarray:
    """r(x, a) = 1 iff a is one of x's labels."""
    rewards = np.zeros((len(label_sets), num_labels))
    for i, labels in enumerate(label_sets):
        labels = list(labels)
        if labels:
            rewards[i, labels] = 1.0
    return rewards


def multilabel_to_bandit(
        features: np.ndarray,
        label_sets: Sequence[Sequence[int]],
        pool: WorkerPool,
        seed: int,
        num_labels: Optional[int] = None,
) -> tuple[BanditLog, CounterfactualTable]:
    """
    Turn a multi-label dataset into bandit feedback logged by a worker pool.

    Raises:
        DataGenError: If the label universe is empty or a label is out of range
    """
    if num_labels is None:
        seen = [label for labels in label_sets for label in labels]
        if not seen:
            raise DataGenError("Label universe is empty")
        num_labels = max(seen) + 1
    if num_labels < 1:
        raise DataGenError("Label universe is empty")
    if any(label < 0 or label >= num_labels for labels in label_sets for label in labels):
        raise DataGenError(f"Labels must lie in 0..{num_labels - 1}")
    if num_labels < 2:
        raise DataGenError("A bandit needs at least two actions")
    table = CounterfactualTable(multilabel_rewards(label_sets, num_labels))
    log = generate_log(pool, features, table, seed, binary_rewards=True)
    return log, table


def gen_multilabel_dataset(
        n: int,
        d: int,
        n_labels: int,
        pool: WorkerPool,
        seed: int,
) -> Dataset:
    """Synthetic multi-label features converted to a logged bandit dataset."""
    features, label_sets = gen_multilabel_world(n, d, n_labels, seed)
    log, table = multilabel_to_bandit(features, label_sets, pool, seed, n_labels)
    return Dataset(features=features, counterfactuals=table, log=log, label_sets=label_sets,
                   metadata={'world': 'multilabel'})


def train_probability(gamma: np.ndarray, epsilon: np.ndarray) -> np.ndarray:
    """P(train | x) = 1 / (2 (1 + exp(-gamma + epsilon)))."""
    return 0.5 / (1.0 + np.exp(-np.asarray(gamma, dtype=float) + np.asarray(epsilon, dtype=float)))


def covshift_split_by_score(
        features: np.ndarray,
        seed: int,
        gamma_weights: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Biased train/test split: gamma(x) sums the first min(d, 200) (weighted) coordinates.

    Returns:
        (train indices, test indices) in ascending order
    """
    features = np.asarray(features, dtype=float)
    used = min(features.shape[1], MAX_SHIFT_COORDINATES)
    weights = np.ones(used) if gamma_weights is None else np.asarray(gamma_weights, dtype=float)[:used]
    gamma = features[:, :used] @ weights
    rng = rng_stream(seed, "shift-split")
    epsilon = rng.standard_normal(features.shape[0])
    to_train = rng.random(features.shape[0]) < train_probability(gamma, epsilon)
    return np.flatnonzero(to_train), np.flatnonzero(~to_train)
