"""
Training of policies and routers for every method.

All methods share one Adam ascent loop over a list of parameter blocks
(policy, then router). Objectives are the Sigma-form team values from the
estimator service; the trace records the full-data objective at the start of
every epoch.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from loguru import logger

from src.enums.EMethod import EMethod
from src.enums.ERoute import EMaskSource
from src.exceptions import LCPError, TrainingError
from src.models.adam import AdamState, adam_step
from src.models.bandit_log import BanditLog, CostFunction, DeterministicSupportMask
from src.models.deferral_system import DeferralSystem
from src.models.propensity_model import AssignmentModel, PropensityModel
from src.models.softmax_model import SoftmaxModel
from src.schemas.train_config import ECConfig, TrainConfig
from src.services.config_service import config_hash
from src.services.estimator_service import (
    ec_reward_matrix, human_net_rewards, ipw_reward_matrix, personalized_reward_matrices, team_objective,
)
from src.services.ood_service import fit_ood
from src.services.propensity_service import (
    detect_deterministic_support, fit_assignment, fit_per_human_propensity, fit_propensity, logged_propensity_matrix,
    training_assignment, training_propensities,
)
from utils.helpers import rng_stream

POLICY, ROUTER = 0, 1

# objective(params, rows or None, active blocks) -> (value, gradient per block or None)
Objective = Callable[[list[np.ndarray], Optional[np.ndarray], tuple[bool, ...]], tuple[float, list]]


@dataclass
class AscentResult:
    parameters: list[np.ndarray]
    trace: list[float]
    stopped_epoch: Optional[int]


def build_cost(config: TrainConfig, num_humans: Optional[int] = None) -> CostFunction:
    """Cost function from the config's scalar or per-human costs (length checked when num_humans is given)."""
    if isinstance(config.cost, list):
        if num_humans is not None and len(config.cost) != num_humans:
            raise TrainingError(f"{len(config.cost)} costs configured for {num_humans} humans")
        return CostFunction.per_human(config.cost)
    return CostFunction.constant(config.cost)


def gradient_ascent(
        objective: Objective,
        initial: list[np.ndarray],
        config: TrainConfig,
        n: int,
        frozen: tuple[bool, ...] = (),
) -> AscentResult:
    """
    Adam ascent with early stopping.

    Stops once the epoch-start objective has failed to beat the best value so
    far by more than `tolerance` for `patience` consecutive epochs.

    Args:
        objective: Value/gradient callback
        initial: Initial parameter blocks
        config: Optimizer, batching and stopping settings
        n: Number of records (for minibatching)
        frozen: Per-block flags for blocks that never move

    Returns:
        AscentResult

    Raises:
        TrainingError: If the objective becomes non-finite
    """
    blocks = len(initial)
    frozen = tuple(frozen) + (False,) * (blocks - len(frozen))
    params = [np.array(p, dtype=float) for p in initial]
    states = [
        AdamState(p.size, config.learning_rate, config.beta1, config.beta2, config.epsilon) for p in params
    ]
    batch_rng = rng_stream(config.seed, "batches")
    minibatch = config.batch_size is not None and config.batch_size < n

    trace: list[float] = []
    best = -np.inf
    stall = 0
    stopped_epoch = None
    for epoch in range(config.max_epochs):
        active = tuple(not frozen[b] for b in range(blocks))
        if config.alternate and blocks > 1 and not any(frozen):
            active = tuple(b == epoch % blocks for b in range(blocks))

        value, grads = objective(params, None, () if minibatch else active)
        if not np.isfinite(value):
            raise TrainingError(f"Objective became non-finite at epoch {epoch}")
        trace.append(value)

        if minibatch:
            order = batch_rng.permutation(n)
            for start in range(0, n, config.batch_size):
                _, grads = objective(params, order[start:start + config.batch_size], active)
                params, states = _apply(params, grads, states, active)
        else:
            params, states = _apply(params, grads, states, active)

        if value > best + config.tolerance:
            best = value
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                stopped_epoch = epoch
                break
        logger.trace(f"epoch {epoch}: objective={value:.8g}")

    logger.debug(f"Ascent finished after {len(trace)} epochs (early stop: {stopped_epoch is not None})")
    return AscentResult(params, trace, stopped_epoch)


def _apply(params, grads, states, active):
    new_params, new_states = list(params), list(states)
    for b, is_active in enumerate(active):
        if is_active and grads[b] is not None:
            new_params[b], new_states[b] = adam_step(params[b], grads[b], states[b])
    return new_params, new_states


def _init_policy(log: BanditLog, config: TrainConfig) -> SoftmaxModel:
    return SoftmaxModel.initialize(
        log.dim, log.k, rng_stream(config.seed, "init", POLICY),
        config.policy_architecture, config.hidden, config.activation,
    )


def _init_router(log: BanditLog, config: TrainConfig, num_humans: int) -> SoftmaxModel:
    return SoftmaxModel.initialize(
        log.dim, num_humans + 1, rng_stream(config.seed, "init", ROUTER),
        config.router_architecture, config.hidden, config.activation,
    )


def _team_ascent(
        policy: SoftmaxModel,
        router: Optional[SoftmaxModel],
        features: np.ndarray,
        human_rewards: Optional[np.ndarray],
        algorithm_rewards: np.ndarray,
        config: TrainConfig,
        freeze_policy: bool = False,
) -> tuple[SoftmaxModel, Optional[SoftmaxModel], AscentResult]:
    """Maximise the team objective over the policy and (if given) the router."""

    def objective(params, rows, active):
        pol = policy.with_parameters(params[POLICY])
        rout = None if router is None else router.with_parameters(params[ROUTER])
        x, a, q = features, human_rewards, algorithm_rewards
        if rows is not None:
            x, q = features[rows], algorithm_rewards[rows]
            a = None if human_rewards is None else human_rewards[rows]
        want_policy = bool(active) and active[POLICY]
        want_router = bool(active) and rout is not None and active[ROUTER]
        try:
            value, g_policy, g_router = team_objective(pol, rout, x, a, q, want_policy, want_router)
        except LCPError as e:
            raise TrainingError(str(e)) from e
        return value, [g_policy, g_router][:len(params)]

    initial = [policy.parameters] if router is None else [policy.parameters, router.parameters]
    frozen = (freeze_policy, False) if router is not None else (freeze_policy,)
    result = gradient_ascent(objective, initial, config, features.shape[0], frozen)
    trained_policy = policy.with_parameters(result.parameters[POLICY])
    trained_router = None if router is None else router.with_parameters(result.parameters[ROUTER])
    return trained_policy, trained_router, result


class _Nuisance:
    """
    Propensity-side inputs shared by the training branches.

    `matrix` holds the propensities recorded in the log when every record has
    one (and the config allows it), else the fitted model's out-of-fold
    estimates. The fitted model is kept either way for the deployed system.
    """

    def __init__(self, log: BanditLog, config: TrainConfig, propensity: Optional[PropensityModel]):
        self.model = propensity or fit_propensity(log, config.propensity, config.seed)
        logged = logged_propensity_matrix(log) if config.propensity.use_logged else None
        self.logged = logged is not None
        self.matrix = training_propensities(self.model, log) if logged is None else logged
        logger.debug(f"Training weights from {'logged' if self.logged else 'estimated'} propensities")


def _ec_mask(
        log: BanditLog,
        config: TrainConfig,
        nuisance: _Nuisance,
        mask: Optional[DeterministicSupportMask],
) -> DeterministicSupportMask:
    if log.k != 2:
        raise TrainingError("Expert-consistency variants require a binary action space")
    if config.ec.mask_source is EMaskSource.ORACLE:
        if mask is None:
            raise TrainingError("Oracle mask requested but none was supplied")
        return mask
    if mask is not None:
        return mask
    detected = detect_deterministic_support(log, nuisance.matrix, config.ec.tau_det)
    logger.info(f"Detected deterministic support on {detected.fraction:.1%} of records")
    return detected


def imputed_reward_range(log: BanditLog, config: ECConfig) -> tuple[float, float]:
    """
    (r_subopt, r_opt) for expert-consistency imputation.

    Unset values come from the smallest and largest logged reward; a log
    with fewer than two distinct rewards falls back to (0, 1).
    """
    observed = np.unique(log.rewards)
    low, high = (float(observed[0]), float(observed[-1])) if observed.size > 1 else (0.0, 1.0)
    r_subopt = low if config.r_subopt is None else float(config.r_subopt)
    r_opt = high if config.r_opt is None else float(config.r_opt)
    return r_subopt, r_opt


def _algorithm_rewards(
        log: BanditLog,
        config: TrainConfig,
        nuisance: _Nuisance,
        mask: Optional[DeterministicSupportMask],
) -> np.ndarray:
    if config.method.is_ec:
        r_subopt, _ = imputed_reward_range(log, config.ec)
        logger.debug(f"Imputing r_subopt={r_subopt:g} for unseen complementary actions")
        return ec_reward_matrix(log, nuisance.matrix, _ec_mask(log, config, nuisance, mask), r_subopt)
    return ipw_reward_matrix(log, nuisance.matrix)


def _starting_policy(log: BanditLog, config: TrainConfig, algorithm_rewards: np.ndarray) -> SoftmaxModel:
    """Fresh policy, advanced by a policy-only ascent on the same rewards when warm_start is set."""
    policy = _init_policy(log, config)
    if not config.warm_start:
        return policy
    policy, _, result = _team_ascent(policy, None, log.features, None, algorithm_rewards, config)
    logger.debug(f"Warm start: policy-only ascent ran {len(result.trace)} epochs")
    return policy


def _system(config: TrainConfig, policy, router, cost, nuisance, result: AscentResult, **extra) -> DeferralSystem:
    return DeferralSystem(
        policy=policy, router=router, method=config.method, cost=cost, propensity=nuisance.model,
        trace=result.trace, stopped_epoch=result.stopped_epoch, seed=config.seed,
        config_hash=config_hash(config), **extra,
    )


def train_ao(
        log: BanditLog,
        config: TrainConfig,
        propensity: Optional[PropensityModel] = None,
        mask: Optional[DeterministicSupportMask] = None,
) -> DeferralSystem:
    """
    Policy-only training (AO, or AO-EC when config.method is an EC method).

    Returns:
        DeferralSystem without a router
    """
    nuisance = _Nuisance(log, config, propensity)
    q = _algorithm_rewards(log, config, nuisance, mask)
    policy, _, result = _team_ascent(_init_policy(log, config), None, log.features, None, q, config)
    logger.info(f"Trained {config.method.value} policy in {len(result.trace)} epochs")
    return _system(config, policy, None, build_cost(config), nuisance, result)


def train_two_stage(
        log: BanditLog,
        config: TrainConfig,
        propensity: Optional[PropensityModel] = None,
        mask: Optional[DeterministicSupportMask] = None,
        cost: Optional[CostFunction] = None,
) -> DeferralSystem:
    """Stage 1 trains the policy alone; stage 2 trains the router with that policy frozen."""
    nuisance = _Nuisance(log, config, propensity)
    cost = cost or build_cost(config)
    q = _algorithm_rewards(log, config, nuisance, mask)

    policy, _, stage_one = _team_ascent(_init_policy(log, config), None, log.features, None, q, config)
    logger.info(f"Two-stage: policy trained in {len(stage_one.trace)} epochs")
    a = human_net_rewards(log, cost)[:, None]
    _, router, stage_two = _team_ascent(
        policy, _init_router(log, config, 1), log.features, a, q, config, freeze_policy=True)
    logger.info(f"Two-stage: router trained in {len(stage_two.trace)} epochs")
    return _system(config, policy, router, cost, nuisance, stage_two)


def train_joint(
        log: BanditLog,
        config: TrainConfig,
        propensity: Optional[PropensityModel] = None,
        mask: Optional[DeterministicSupportMask] = None,
        cost: Optional[CostFunction] = None,
) -> DeferralSystem:
    """
    Simultaneous ascent over policy and router.

    With config.warm_start the joint ascent starts from the policy-only
    solution; the returned trace covers the joint ascent.
    """
    nuisance = _Nuisance(log, config, propensity)
    cost = cost or build_cost(config)
    q = _algorithm_rewards(log, config, nuisance, mask)
    a = human_net_rewards(log, cost)[:, None]
    policy, router, result = _team_ascent(
        _starting_policy(log, config, q), _init_router(log, config, 1), log.features, a, q, config)
    logger.info(f"Joint training finished in {len(result.trace)} epochs")
    return _system(config, policy, router, cost, nuisance, result)


def train_joint_personalized(
        log: BanditLog,
        config: TrainConfig,
        propensity: Optional[PropensityModel] = None,
        cost: Optional[CostFunction] = None,
        per_human_propensity: Optional[PropensityModel] = None,
        assignment: Optional[AssignmentModel] = None,
) -> DeferralSystem:
    """Joint ascent with a router over K humans and the algorithm."""
    if not log.has_humans:
        raise TrainingError("Personalized training needs a human id on every record")
    nuisance = _Nuisance(log, config, propensity)
    per_human = per_human_propensity or fit_per_human_propensity(log, config.propensity, config.seed)
    assignment = assignment or fit_assignment(
        log, config.propensity, config.seed, randomized=config.randomized_assignment)
    cost = cost or build_cost(config, log.num_humans)

    # A logged propensity is already the chosen human's pi0(a|x,h)
    per_human_weights = nuisance.matrix if nuisance.logged else training_propensities(per_human, log)
    try:
        a, q = personalized_reward_matrices(
            log, nuisance.matrix, per_human_weights, training_assignment(assignment, log), cost,
            config.propensity.floor, assignment_weighted=config.assignment_weighted_algorithm,
        )
    except LCPError as e:
        raise TrainingError(str(e)) from e
    policy, router, result = _team_ascent(
        _starting_policy(log, config, q), _init_router(log, config, log.num_humans), log.features, a, q, config)
    logger.info(f"Personalized training over {log.num_humans} humans finished in {len(result.trace)} epochs")
    return _system(config, policy, router, cost, nuisance, result, num_humans=log.num_humans,
                   per_human_propensity=per_human, assignment=assignment)


def train_ec_variant(
        log: BanditLog,
        config: TrainConfig,
        mask: Optional[DeterministicSupportMask] = None,
        propensity: Optional[PropensityModel] = None,
        cost: Optional[CostFunction] = None,
) -> DeferralSystem:
    """AO-EC, TS-EC or JC-EC with an oracle or detected deterministic mask."""
    if not config.method.is_ec:
        raise TrainingError(f"{config.method.value} is not an expert-consistency method")
    if log.k != 2:
        raise TrainingError("Expert-consistency variants require a binary action space")
    if config.method is EMethod.AO_EC:
        return train_ao(log, config, propensity, mask)
    if config.method is EMethod.TS_EC:
        return train_two_stage(log, config, propensity, mask, cost)
    return train_joint(log, config, propensity, mask, cost)


def train_system(
        log: BanditLog,
        config: TrainConfig,
        propensity: Optional[PropensityModel] = None,
        mask: Optional[DeterministicSupportMask] = None,
        cost: Optional[CostFunction] = None,
) -> DeferralSystem:
    """
    Train whatever config.method names.

    JC-OD is joint training plus an OOD detector fitted on the training
    covariates at config.ood.p; its contamination is tuned separately.
    """
    method = config.method
    logger.info(f"Training {method.value} on {log.n} records (seed={config.seed})")
    if method is EMethod.AO:
        return train_ao(log, config, propensity)
    if method is EMethod.TS:
        return train_two_stage(log, config, propensity, cost=cost)
    if method is EMethod.JC:
        return train_joint(log, config, propensity, cost=cost)
    if method is EMethod.JCP:
        return train_joint_personalized(log, config, propensity, cost)
    if method.is_ec:
        return train_ec_variant(log, config, mask, propensity, cost)
    if method is EMethod.JC_OD:
        system = train_joint(log, config, propensity, cost=cost)
        return system.with_ood(fit_ood(log.features, config.ood.kind, config.ood.p, config.ood.n_neighbors))
    raise TrainingError(f"Method {method.value} is not trainable")
