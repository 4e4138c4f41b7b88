"""Fitting pi0(a|x), pi0(a|x,h) and d0(h|x); detecting the deterministic-support set."""

import hashlib
from typing import Optional, Union

import numpy as np
from loguru import logger
from sklearn.model_selection import KFold

from src.enums.EArchitecture import EArchitecture
from src.enums.EPropensityKind import EPropensityKind
from src.exceptions import PropensityError
from src.models.adam import AdamState, adam_step
from src.models.bandit_log import BanditLog, DeterministicSupportMask, NO_HUMAN
from src.models.propensity_model import AssignmentModel, PropensityModel, design_matrix
from src.models.softmax_model import SoftmaxModel
from src.schemas.train_config import PropensityConfig
from utils.helpers import floor_probabilities, rng_stream

DEFAULT_TAU_DET = 0.99
# Floored maxima such as 0.01 + 0.98 land one ulp below 0.99
THRESHOLD_SLACK = 1e-12


def log_fingerprint(features: np.ndarray, targets: np.ndarray, humans: Optional[np.ndarray] = None) -> str:
    """Content hash of the (features, targets[, humans]) a model is fitted on."""
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(features, dtype=float).tobytes())
    digest.update(str(np.shape(features)).encode())
    for ids in (targets, humans):
        if ids is not None:
            digest.update(b'|')
            digest.update(np.ascontiguousarray(ids, dtype=np.int64).tobytes())
    return digest.hexdigest()


def fit_classifier(
        features: np.ndarray,
        targets: np.ndarray,
        num_classes: int,
        config: PropensityConfig,
        rng: np.random.Generator,
        humans: Optional[np.ndarray] = None,
        num_humans: int = 0,
) -> PropensityModel:
    """
    Fit one classifier of `targets` given features (and human ids when num_humans > 0).

    Args:
        features: N x d features
        targets: N class indices in 0..num_classes-1
        num_classes: Output size m
        config: Estimator settings
        rng: Generator for softmax initialisation
        humans: Human ids for conditioned models
        num_humans: K for conditioned models, 0 otherwise

    Returns:
        Fitted PropensityModel (not floored internally; predict() floors)
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=np.int64)
    if features.shape[0] == 0:
        raise PropensityError("Cannot fit a propensity model on an empty log")
    if np.any(targets < 0) or np.any(targets >= num_classes):
        raise PropensityError(f"Targets must lie in 0..{num_classes - 1}")

    common = dict(
        kind=config.kind, num_classes=num_classes, input_dim=features.shape[1],
        num_humans=num_humans, floor=config.floor, n_neighbors=config.n_neighbors,
    )
    classes = np.unique(targets)
    if classes.size == 1:
        logger.warning(f"Single-class propensity fit: every record has class {int(classes[0])}")
        return PropensityModel(**common, constant_class=int(classes[0]))

    design = design_matrix(features, humans, num_humans, config.kind)
    if config.kind is EPropensityKind.KNN:
        return PropensityModel(**common, reference_features=design, reference_targets=targets)

    architecture = EArchitecture.MLP if config.kind is EPropensityKind.SOFTMAX_MLP else EArchitecture.LINEAR
    model = SoftmaxModel.initialize(design.shape[1], num_classes, rng, architecture, config.hidden)
    state = AdamState(model.num_parameters, learning_rate=config.learning_rate)
    n = design.shape[0]
    for _ in range(config.epochs):
        _, grad = model.log_likelihood_grad(design, targets)
        params, state = adam_step(model.parameters, grad / n, state)
        model = model.with_parameters(params)
    return PropensityModel(**common, estimator=model)


def _fit_with_cross_fitting(
        features: np.ndarray,
        targets: np.ndarray,
        num_classes: int,
        config: PropensityConfig,
        seed: int,
        component: str,
        humans: Optional[np.ndarray] = None,
        num_humans: int = 0,
) -> PropensityModel:
    rng = rng_stream(seed, component)
    model = fit_classifier(features, targets, num_classes, config, rng, humans, num_humans)
    n = features.shape[0]
    if not config.cross_fit or n < config.folds:
        return model

    folds = np.zeros(n, dtype=np.int64)
    predictions = np.zeros((n, num_classes))
    splitter = KFold(n_splits=config.folds, shuffle=True, random_state=int(rng.integers(2 ** 31 - 1)))
    for fold, (train_idx, held_idx) in enumerate(splitter.split(features)):
        fold_model = fit_classifier(
            features[train_idx], targets[train_idx], num_classes, config,
            rng_stream(seed, component, fold + 1),
            None if humans is None else humans[train_idx], num_humans,
        )
        predictions[held_idx] = fold_model.predict_raw(
            features[held_idx], None if humans is None else humans[held_idx])
        folds[held_idx] = fold

    model.training_predictions = floor_probabilities(predictions, config.floor)
    model.training_folds = folds
    model.training_fingerprint = log_fingerprint(features, targets, humans)
    return model


def fit_propensity(log: BanditLog, config: PropensityConfig, seed: int) -> PropensityModel:
    """
    Fit pi0(a|x) on a log.

    With cross-fitting enabled, `training_predictions` holds out-of-fold
    predictions for every record of `log`.

    Raises:
        PropensityError: If the log is empty
    """
    if log.n == 0:
        raise PropensityError("Cannot fit a propensity model on an empty log")
    model = _fit_with_cross_fitting(log.features, log.actions, log.k, config, seed, "propensity")
    logger.info(f"Fitted {config.kind.value} propensity model on {log.n} records")
    return model


def _require_humans(log: BanditLog):
    if log.humans is None or np.any(log.humans == NO_HUMAN):
        raise PropensityError("Every record needs a human id")


def fit_per_human_propensity(log: BanditLog, config: PropensityConfig, seed: int) -> PropensityModel:
    """Fit pi0(a|x,h) as one model over features plus one-hot(h)."""
    _require_humans(log)
    model = _fit_with_cross_fitting(
        log.features, log.actions, log.k, config, seed, "propensity-human",
        humans=log.humans, num_humans=log.num_humans,
    )
    logger.info(f"Fitted per-human {config.kind.value} propensity model over {log.num_humans} humans")
    return model


def fit_assignment(
        log: BanditLog,
        config: PropensityConfig,
        seed: int,
        randomized: bool = True,
) -> AssignmentModel:
    """
    Historical assignment model d0(h|x).

    The fitted classifier is cross-fitted like the propensity model, so
    `training_assignment` gives out-of-fold d0 on the log it was fitted on.

    Args:
        log: Log with human ids
        config: Estimator settings for the fitted case
        seed: Run seed
        randomized: Assignment was uniform at random, so d0 = 1/K

    Returns:
        AssignmentModel
    """
    _require_humans(log)
    if randomized or log.num_humans == 1:
        return AssignmentModel.randomized(log.num_humans)
    classifier = _fit_with_cross_fitting(
        log.features, log.humans, log.num_humans, config, seed, "assignment")
    return AssignmentModel(log.num_humans, classifier)


def _cached(model: PropensityModel, fingerprint: str) -> Optional[np.ndarray]:
    if model.training_predictions is not None and model.training_fingerprint == fingerprint:
        return model.training_predictions
    return None


def training_propensities(model: PropensityModel, log: BanditLog) -> np.ndarray:
    """N x k propensities for a log: out-of-fold when `log` is the one the model was cross-fitted on."""
    humans = log.humans if model.per_human else None
    cached = _cached(model, log_fingerprint(log.features, log.actions, humans))
    if cached is not None:
        return cached
    return model.predict(log.features, humans)


def training_assignment(assignment: AssignmentModel, log: BanditLog) -> np.ndarray:
    """N x K assignment probabilities d0(h|x_i), out-of-fold on the log the classifier was fitted on."""
    if not assignment.is_randomized and log.humans is not None:
        cached = _cached(assignment.classifier, log_fingerprint(log.features, log.humans))
        if cached is not None:
            return cached
    return assignment.predict(log.features)


def logged_propensity_matrix(log: BanditLog) -> Optional[np.ndarray]:
    """
    Propensities recorded in the log, or None when any record lacks one.

    A binary log gives an N x 2 matrix (the unlogged action gets 1 - p);
    otherwise the N vector of pi0(a_i|x_i) is returned.
    """
    if log.propensities is None or log.n == 0 or np.any(np.isnan(log.propensities)):
        return None
    p = np.asarray(log.propensities, dtype=float)
    if log.k != 2:
        return p
    matrix = np.empty((log.n, 2))
    rows = np.arange(log.n)
    matrix[rows, log.actions] = p
    matrix[rows, 1 - log.actions] = 1.0 - p
    return matrix


def detect_deterministic_support(
        log: BanditLog,
        propensity: Union[PropensityModel, np.ndarray],
        tau_det: float = DEFAULT_TAU_DET,
) -> DeterministicSupportMask:
    """
    Flag records whose logged action is (estimated to be) deterministic.

    A record is in S iff max_a pi0(a|x_i) >= tau_det and the logged action
    attains that maximum; its complementary action is the other one.

    Args:
        log: Binary-action log
        propensity: Fitted model, or an N x 2 matrix of estimated propensities
        tau_det: Threshold in (0, 1]

    Raises:
        PropensityError: For non-binary action spaces
    """
    if log.k != 2:
        raise PropensityError("Deterministic support is only defined for binary action spaces")
    if isinstance(propensity, PropensityModel):
        probs = training_propensities(propensity, log)
    else:
        probs = np.asarray(propensity, dtype=float)
    if probs.shape != (log.n, 2):
        raise PropensityError(f"Propensity matrix has shape {probs.shape}, expected ({log.n}, 2)")

    rows = np.arange(log.n)
    top = probs.max(axis=1)
    in_s = (top >= tau_det - THRESHOLD_SLACK) & (probs[rows, log.actions] >= top)
    return DeterministicSupportMask.from_actions(in_s, log.actions)
