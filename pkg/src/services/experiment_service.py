"""
Experiment protocol: build a world per repetition, train every method on its
log, evaluate each on the test instances and aggregate across repetitions.

Repetitions are independent given their derived seed, so they run in worker
processes; run_repetition and run_worker_repetition are the module-level
entry points those processes call.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from loguru import logger
from pydantic import ValidationError

from src.config.settings import get_config
from src.enums.EMethod import EMethod
from src.enums.ERoute import EMaskSource
from src.enums.EWorld import ESweepAxis, EWorld
from src.exceptions import ConfigError, LCPError
from src.models.bandit_log import CostFunction
from src.models.dataset import Dataset
from src.models.deferral_system import DeferralSystem
from src.models.human_behavior import NoiseHBM, TabularHBM, WorkerPool
from src.models.propensity_model import PropensityModel
from src.schemas.experiment import ExperimentConfig, ExperimentResult, RepetitionRow, WorkerProtocolResult, WorkerStat
from src.schemas.train_config import PropensityConfig, TrainConfig
from src.services.config_service import ConfigService
from src.services.datagen_service import (
    gen_covshift_world, gen_deterministic_world, gen_multilabel_dataset, gen_responder_world,
)
from src.services.evaluation_service import evaluate_team
from src.services.log_service import split_indices
from src.services.ood_service import tune_system
from src.services.propensity_service import fit_propensity
from src.services.stats_service import pairwise_significance, spearman, summarize
from src.services.training_service import train_system
from utils.helpers import rng_stream
from workers.repetition_worker import RepetitionWorker

WORKER_PROTOCOL_SIZE = 5


@dataclass
class World:
    """One repetition's data: a logged training set, a test set and the humans answering test queries."""

    train: Dataset
    test: Dataset
    pool: WorkerPool
    tune: Optional[Dataset] = None
    accuracies: Optional[list[float]] = None


def repetition_seed(seed: int, repetition: int) -> int:
    return int(rng_stream(seed, "repetition", repetition).integers(0, 2 ** 63 - 1))


def apply_sweep(config: ExperimentConfig, value: float) -> ExperimentConfig:
    """Config with the sweep axis set to `value`."""
    if config.sweep is None:
        return config
    data = config.model_dump(mode='json')
    axis = config.sweep.axis
    if axis is ESweepAxis.COST:
        data['train']['cost'] = float(value)
        data['world_params']['worker_costs'] = None
    elif axis is ESweepAxis.N_TRAIN:
        data['world_params']['n_train'] = int(value)
    else:
        data['world_params'][axis.value] = float(value)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Sweep value {value} for {axis.value} is invalid: {e}")


def _pool_costs(config: ExperimentConfig, size: int) -> list[float]:
    params = config.world_params
    if params.worker_costs is not None:
        return list(params.worker_costs)
    cost = config.train.cost
    if isinstance(cost, list):
        if len(cost) != size:
            raise ConfigError(f"{len(cost)} costs configured for {size} workers")
        return list(cost)
    return [float(cost)] * size


def _split(dataset: Dataset, n_train: int) -> tuple[Dataset, Dataset]:
    rows = np.arange(dataset.n)
    return dataset.take(rows[:n_train]), dataset.take(rows[n_train:])


def _multilabel_world(config: ExperimentConfig, seed: int, accuracies: list[float], costs: list[float]) -> World:
    params = config.world_params
    pool = WorkerPool([NoiseHBM(a, params.n_labels) for a in accuracies], costs)
    dataset = gen_multilabel_dataset(params.n_train, params.dim, params.n_labels, pool, seed)
    train_idx, test_idx = split_indices(dataset.n, params.test_ratio, seed)
    return World(dataset.take(np.sort(train_idx)), dataset.take(np.sort(test_idx)), pool, accuracies=accuracies)


def build_world(config: ExperimentConfig, seed: int) -> World:
    """
    Generate one repetition's data for the configured world.

    deterministic/covshift: test humans replay the generator's exact policy.
    responder: one NoiseHBM human of accuracy rho.
    multilabel: NoiseHBM workers at worker_accuracies (or rho).
    workers: num_workers NoiseHBM workers with accuracy and cost drawn
    uniformly from accuracy_range and cost_range.

    Raises:
        DataGenError: For invalid world parameters
        ConfigError: If costs do not match the number of workers
    """
    params = config.world_params
    world = config.world
    if world is EWorld.DETERMINISTIC:
        full = gen_deterministic_world(params.s, params.alpha, params.n_train + params.n_test, seed,
                                       strict_ec=params.strict_ec)
        train, test = _split(full, params.n_train)
        return World(train, test, WorkerPool([TabularHBM(test.human_policy)], _pool_costs(config, 1)))
    if world is EWorld.COVSHIFT:
        train, test, tune = gen_covshift_world(params.mu, params.n_train, params.n_test, seed, params.n_tune)
        return World(train, test, WorkerPool([TabularHBM(test.human_policy)], _pool_costs(config, 1)), tune=tune)
    if world is EWorld.RESPONDER:
        full = gen_responder_world(params.n_train + params.n_test, seed, params.rho)
        train, test = _split(full, params.n_train)
        return World(train, test, WorkerPool([NoiseHBM(params.rho, 2)], _pool_costs(config, 1)))
    if world is EWorld.MULTILABEL:
        accuracies = params.worker_accuracies or [params.rho] * params.num_workers
        return _multilabel_world(config, seed, list(accuracies), _pool_costs(config, params.num_workers))

    rng = rng_stream(seed, "workers")
    accuracies = rng.uniform(*params.accuracy_range, size=params.num_workers).tolist()
    costs = rng.uniform(*params.cost_range, size=params.num_workers).tolist()
    return _multilabel_world(config, seed, accuracies, costs)


class _SharedPropensity:
    """pi0 fitted once per repetition and reused by every method."""

    def __init__(self, world: World, config: PropensityConfig, seed: int):
        self.world = world
        self.config = config
        self.seed = seed

    @cached_property
    def model(self) -> PropensityModel:
        return fit_propensity(self.world.train.log, self.config, self.seed)


def train_method(
        method: EMethod,
        config: ExperimentConfig,
        world: World,
        seed: int,
        cost: CostFunction,
        propensity: Optional[PropensityModel] = None,
) -> DeferralSystem:
    """Train one method on the world's log; JC-OD is tuned on the post-shift log when the world has one."""
    if method is EMethod.HUMAN:
        return DeferralSystem(policy=None, router=None, method=EMethod.HUMAN, cost=cost, seed=seed)

    train_config: TrainConfig = ConfigService().override(config.train, method=method, seed=seed)
    mask = None
    if method.is_ec and train_config.ec.mask_source is EMaskSource.ORACLE:
        mask = world.train.oracle_mask
    system = train_system(world.train.log, train_config, propensity, mask, cost)

    if method is EMethod.JC_OD and world.tune is not None and world.tune.log is not None:
        system, best, _ = tune_system(system, world.tune.log, train_config, cost)
        logger.info(f"JC-OD contamination tuned to p={best}")
    return system


def _failure(method: EMethod, repetition: int, seed: int, sweep_value: Optional[float], error: Exception):
    return RepetitionRow(method=method.value, repetition=repetition, seed=seed, sweep_value=sweep_value,
                         failed=True, error=f"{type(error).__name__}: {error}")


def run_repetition(config: ExperimentConfig, repetition: int, sweep_value: Optional[float] = None
                   ) -> list[RepetitionRow]:
    """
    One repetition of every configured method.

    Any LCPError is recorded as a failed row for the affected method (or all
    methods, if the world itself could not be generated).
    """
    seed = repetition_seed(config.seed, repetition)
    try:
        world = build_world(config, seed)
    except LCPError as e:
        logger.error(f"Repetition {repetition}: world generation failed: {e}")
        return [_failure(m, repetition, seed, sweep_value, e) for m in config.methods]

    cost = world.pool.cost_function()
    shared = _SharedPropensity(world, config.train.propensity, seed)
    rows = []
    for method in config.methods:
        try:
            propensity = shared.model if method.is_trainable else None
            system = train_method(method, config, world, seed, cost, propensity)
            evaluation = evaluate_team(system, world.test.features, world.test.counterfactuals, world.pool, seed, cost)
        except LCPError as e:
            logger.error(f"Repetition {repetition}, {method.value} failed: {e}")
            rows.append(_failure(method, repetition, seed, sweep_value, e))
            continue
        rows.append(RepetitionRow(
            method=method.value, repetition=repetition, total_reward=evaluation.total_reward,
            human_fraction=evaluation.human_fraction, seed=seed, sweep_value=sweep_value,
            human_counts=evaluation.human_counts,
        ))
    logger.info(f"Repetition {repetition} finished ({sum(not r.failed for r in rows)}/{len(rows)} methods)")
    return rows


def run_worker_repetition(config: ExperimentConfig, repetition: int) -> list[WorkerStat]:
    """Draw random workers, train the personalized team and report how often each worker is queried."""
    seed = repetition_seed(config.seed, repetition)
    world = build_world(config, seed)
    cost = world.pool.cost_function()
    system = train_method(EMethod.JCP, config, world, seed, cost)
    evaluation = evaluate_team(system, world.test.features, world.test.counterfactuals, world.pool, seed, cost)
    stats = []
    for h in range(world.pool.size):
        accuracy = float(world.accuracies[h])
        stats.append(WorkerStat(
            repetition=repetition, worker=h, accuracy=accuracy, cost=world.pool.costs[h],
            net_reward=accuracy - world.pool.costs[h],
            query_frequency=evaluation.human_counts[h] / evaluation.n,
        ))
    logger.info(f"Worker repetition {repetition}: frequencies "
                f"{[round(s.query_frequency, 3) for s in stats]}")
    return stats


class ExperimentService:
    """Service for running experiments over repetitions and sweep values."""

    def __init__(self, workers: Optional[int] = None):
        self.workers = workers

    def _workers(self, config: ExperimentConfig) -> int:
        return self.workers or config.workers or get_config().workers

    @staticmethod
    def sweep_values(config: ExperimentConfig) -> list[Optional[float]]:
        return [None] if config.sweep is None else list(config.sweep.values)

    def run_experiment(self, config: ExperimentConfig) -> list[ExperimentResult]:
        """
        Run every repetition of every method, once per sweep value.

        Returns:
            One ExperimentResult per sweep value (a single one without a sweep)

        Raises:
            ConfigError: If a sweep value produces an invalid config
        """
        results = []
        for value in self.sweep_values(config):
            swept = config if value is None else apply_sweep(config, value)
            label = "" if value is None else f" ({config.sweep.axis.value}={value})"
            logger.info(f"Experiment '{config.name}'{label}: {config.repetitions} repetitions of "
                        f"{[m.value for m in config.methods]}")
            jobs = [(swept, r, value) for r in range(config.repetitions)]
            per_repetition = RepetitionWorker(run_repetition, jobs, self._workers(config)).run()
            rows = [row for rows in per_repetition for row in rows]
            results.append(ExperimentResult(
                name=config.name, sweep_value=value, rows=rows,
                summary=summarize(rows, value), significance=pairwise_significance(rows, value),
            ))
            for row in results[-1].summary:
                logger.info(f"{row.method}: mean={row.mean:.4f} stderr={row.stderr:.4f} (n={row.n})")
        return results

    def run_worker_protocol(self, config: ExperimentConfig) -> WorkerProtocolResult:
        """
        Random-worker personalization protocol.

        Each repetition draws workers (world 'workers', five by default when the
        config asks for one), trains JCP and records per-worker query
        frequencies; the result carries the Spearman correlation between net
        reward (accuracy - cost) and frequency pooled over all repetitions.
        """
        data = config.model_dump(mode='json')
        data['world'] = EWorld.WORKERS.value
        if config.world_params.num_workers == 1:
            data['world_params']['num_workers'] = WORKER_PROTOCOL_SIZE
        data['world_params']['worker_costs'] = None
        data['world_params']['worker_accuracies'] = None
        protocol = ConfigService().validate(data, ExperimentConfig, source="worker protocol")

        jobs = [(protocol, r) for r in range(protocol.repetitions)]
        per_repetition = RepetitionWorker(run_worker_repetition, jobs, self._workers(protocol)).run()
        workers = [stat for stats in per_repetition for stat in stats]
        rho, p = spearman([w.net_reward for w in workers], [w.query_frequency for w in workers])
        logger.info(f"Worker protocol: Spearman rho={rho:.3f} (p={p:.3g}) over {len(workers)} workers")
        return WorkerProtocolResult(workers=workers, spearman=rho, spearman_p=p)
