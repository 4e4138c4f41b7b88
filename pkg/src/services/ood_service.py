"""Fitting, tuning and applying the out-of-distribution gate."""

from typing import Optional, Sequence

import numpy as np
from loguru import logger

from src.enums.EOODKind import EOODKind
from src.exceptions import OODError
from src.models.bandit_log import BanditLog, CostFunction, NO_HUMAN
from src.models.deferral_system import DeferralSystem
from src.models.ood_detector import OODDetector, fit_knn_distance, fit_mahalanobis
from src.schemas.decision import Decision
from src.schemas.train_config import TrainConfig
from src.services.estimator_service import human_net_rewards, logged_propensities
from src.services.propensity_service import fit_propensity, logged_propensity_matrix, training_propensities


def fit_ood(train_features: np.ndarray, kind: EOODKind, p: float, n_neighbors: int = 5) -> OODDetector:
    """
    Fit a detector on training covariates with contamination p.

    Raises:
        OODError: For n < d + 2 (mahalanobis), degenerate covariance or p outside (0, 1)
    """
    features = np.asarray(train_features, dtype=float)
    if features.ndim != 2 or features.shape[0] == 0:
        raise OODError("OOD detector needs a non-empty N x d training matrix")
    if not 0.0 < p < 1.0:
        raise OODError(f"Contamination p must lie in (0, 1), got {p}")
    if EOODKind(kind) is EOODKind.MAHALANOBIS:
        detector = fit_mahalanobis(features, p)
    else:
        detector = fit_knn_distance(features, p, n_neighbors)
    logger.info(f"Fitted {detector.kind.value} OOD detector on {features.shape[0]} points, p={p}")
    return detector


def gated_objective_terms(
        system: DeferralSystem,
        tuning_log: BanditLog,
        propensity: np.ndarray,
        cost: CostFunction,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Per-record values of the two branches of the gated objective.

    Returns:
        (in-distribution value d_h (r - C) + (1 - d_h) (pi/pi0) r,
         flagged value r - C, NaN for records not generated by a human)
    """
    d_h = system.human_mass(tuning_log.features)
    net = human_net_rewards(tuning_log, cost)
    rows = np.arange(tuning_log.n)
    pi = system.policy.predict_proba(tuning_log.features)[rows, tuning_log.actions]
    weights = pi / logged_propensities(tuning_log, propensity)
    in_distribution = d_h * net + (1.0 - d_h) * weights * tuning_log.rewards

    flagged = net.copy()
    if tuning_log.humans is not None:
        flagged[tuning_log.humans == NO_HUMAN] = np.nan
    return in_distribution, flagged


def gated_objective(
        system: DeferralSystem,
        detector: OODDetector,
        tuning_log: BanditLog,
        propensity: np.ndarray,
        cost: CostFunction,
) -> float:
    """Sum over the tuning log of the in-distribution branch when unflagged and r - C when flagged."""
    in_distribution, flagged = gated_objective_terms(system, tuning_log, propensity, cost)
    flags = detector.flag(tuning_log.features)
    skipped = flags & np.isnan(flagged)
    if skipped.any():
        logger.warning(f"{int(skipped.sum())} flagged tuning records were not human-generated; excluded")
    return float(np.sum(in_distribution[~flags]) + np.sum(flagged[flags & ~skipped]))


def tune_ood(
        p_grid: Sequence[float],
        tuning_log: BanditLog,
        system: DeferralSystem,
        propensity: np.ndarray,
        cost: Optional[CostFunction] = None,
        detector: Optional[OODDetector] = None,
) -> tuple[float, dict[float, float]]:
    """
    Pick the contamination p that maximises the gated objective on a post-shift log.

    Policy and router stay frozen; ties go to the smaller p.

    Args:
        p_grid: Candidate contaminations
        tuning_log: Post-shift log with rewards
        system: Trained system
        propensity: pi0 for the tuning log (vector or N x k matrix)
        cost: Cost function (defaults to the system's)
        detector: Fitted detector (defaults to the system's)

    Returns:
        (best p, objective per grid value)

    Raises:
        OODError: For an empty grid, an empty tuning log or no detector
    """
    if not p_grid:
        raise OODError("p_grid is empty")
    if tuning_log.n == 0:
        raise OODError("Tuning log is empty")
    detector = detector or system.ood
    if detector is None:
        raise OODError("No fitted OOD detector to tune")
    cost = cost or system.cost

    scores = {}
    for p in sorted(float(p) for p in p_grid):
        scores[p] = gated_objective(system, detector.with_contamination(p), tuning_log, propensity, cost)
        logger.debug(f"OOD tuning p={p}: objective={scores[p]:.6g}")
    best = max(scores, key=lambda p: (scores[p], -p))
    logger.info(f"Selected OOD contamination p={best}")
    return best, scores


def gated_decide(system: DeferralSystem, x: np.ndarray) -> Decision:
    """OOD gate first, then the router rule, then the policy argmax."""
    return system.decide(x, gated=True)


def tune_system(
        system: DeferralSystem,
        tuning_log: BanditLog,
        config: TrainConfig,
        cost: Optional[CostFunction] = None,
) -> tuple[DeferralSystem, float, dict[float, float]]:
    """
    Tune a gated system's contamination on a post-shift log and return the re-gated system.

    pi0 on the tuning log is the propensity recorded in it when every record
    has one and config.propensity.use_logged is set; otherwise it comes from
    a model refitted on the tuning log (config.ood.refit_propensity) or the
    training-time model. The system must already carry a detector.

    Raises:
        OODError: If the system has no detector or propensity model
    """
    if system.ood is None:
        raise OODError("System has no OOD detector to tune")
    logged = logged_propensity_matrix(tuning_log) if config.propensity.use_logged else None
    if logged is not None:
        propensity = logged
    elif config.ood.refit_propensity:
        model = fit_propensity(tuning_log, config.propensity, config.seed)
        propensity = training_propensities(model, tuning_log)
    elif system.propensity is not None:
        propensity = system.propensity.predict(tuning_log.features)
    else:
        raise OODError("System carries no propensity model for the tuning log")
    best, scores = tune_ood(config.ood.p_grid, tuning_log, system, propensity, cost)
    return system.with_ood(system.ood.with_contamination(best)), best, scores
