"""
Counterfactual objectives for policies and routers, with analytic gradients.

Every objective here has the shape

    V = sum_i [ sum_h d(h|x_i) A_ih + d(bot|x_i) sum_a Q_ia pi(a|x_i) ]

where A holds the (reweighted) human net rewards and Q is the algorithm
branch reward matrix (IPW weights, or the imputed EC rewards). Without a
router the human term vanishes and d(bot|x) = 1.

Router outputs are ordered humans 0..K-1 then the algorithm (bot) at index K,
so a binary router is [human, algorithm].
"""

from typing import Optional

import numpy as np

from src.exceptions import EstimatorError
from src.models.bandit_log import BanditLog, CostFunction, DeterministicSupportMask, NO_HUMAN
from src.models.softmax_model import SoftmaxModel
from src.schemas.objective import ImputationBias, ObjectiveValue
from utils.helpers import PROPENSITY_FLOOR


def logged_propensities(log: BanditLog, propensity: np.ndarray, floor: float = PROPENSITY_FLOOR) -> np.ndarray:
    """
    Propensity of each logged action, floored at `floor`.

    Args:
        log: Bandit log
        propensity: N vector of pi0(a_i|x_i), or N x k matrix of pi0(.|x_i)
        floor: Lower clip applied before division

    Returns:
        N vector of floored propensities

    Raises:
        EstimatorError: If shapes mismatch or a value is non-finite / non-positive after flooring
    """
    propensity = np.asarray(propensity, dtype=float)
    if propensity.ndim == 2:
        if propensity.shape != (log.n, log.k):
            raise EstimatorError(f"Propensity matrix shape {propensity.shape} != ({log.n}, {log.k})")
        propensity = propensity[np.arange(log.n), log.actions]
    if propensity.shape != (log.n,):
        raise EstimatorError(f"Propensity vector has shape {propensity.shape}, log has {log.n} records")
    clipped = np.maximum(propensity, floor)
    if not np.all(np.isfinite(clipped)) or np.any(clipped <= 0):
        raise EstimatorError("Propensities must be finite and positive after flooring")
    return clipped


def ipw_reward_matrix(log: BanditLog, propensity: np.ndarray) -> np.ndarray:
    """Q with Q[i, a_i] = r_i / pi0(a_i|x_i) and zeros elsewhere."""
    p = logged_propensities(log, propensity)
    q = np.zeros((log.n, log.k))
    q[np.arange(log.n), log.actions] = log.rewards / p
    return q


def ec_reward_matrix(
        log: BanditLog,
        propensity: np.ndarray,
        mask: DeterministicSupportMask,
        r_subopt: float = 0.0,
) -> np.ndarray:
    """
    Algorithm-branch reward matrix with expert-consistency imputation.

    Records in the deterministic set keep their observed reward unweighted and
    impute r_subopt for the unseen complementary action; the rest use IPW.
    """
    _check_mask(log, mask)
    q = ipw_reward_matrix(log, propensity)
    rows = np.flatnonzero(mask.in_s)
    if rows.size:
        q[rows, :] = 0.0
        q[rows, log.actions[rows]] = log.rewards[rows]
        q[rows, mask.complement[rows]] = r_subopt
    return q


def _check_mask(log: BanditLog, mask: DeterministicSupportMask):
    if mask.n != log.n:
        raise EstimatorError(f"Mask has {mask.n} rows, log has {log.n}")
    if mask.is_empty:
        return
    if log.k != 2:
        raise EstimatorError("Expert-consistency imputation requires a binary action space")
    if np.any(mask.complement[mask.in_s] == log.actions[mask.in_s]):
        raise EstimatorError("Complementary action must differ from the logged action")


def human_net_rewards(log: BanditLog, cost: CostFunction) -> np.ndarray:
    """r_i - C_{h_i}(x_i) for every record."""
    return log.rewards - cost.vector(log.humans, log.instance_ids)


def team_objective(
        policy: SoftmaxModel,
        router: Optional[SoftmaxModel],
        features: np.ndarray,
        human_rewards: Optional[np.ndarray],
        algorithm_rewards: np.ndarray,
        with_policy_grad: bool = True,
        with_router_grad: bool = True,
) -> tuple[float, Optional[np.ndarray], Optional[np.ndarray]]:
    """
    Evaluate V = sum_i [sum_h d_ih A_ih + d_i,bot sum_a Q_ia pi_ia] and its gradients.

    Args:
        policy: Algorithmic policy pi_theta
        router: Router d_phi with K+1 outputs, or None for a policy-only objective
        features: N x d features
        human_rewards: N x K matrix A (ignored without router)
        algorithm_rewards: N x k matrix Q
        with_policy_grad: Compute grad_theta
        with_router_grad: Compute grad_phi

    Returns:
        (total value, grad_theta or None, grad_phi or None)
    """
    if router is None:
        if with_policy_grad:
            values, grad_theta = policy.expectation_grad(features, algorithm_rewards)
        else:
            values = np.sum(algorithm_rewards * policy.predict_proba(features), axis=1)
            grad_theta = None
        return float(np.sum(values)), grad_theta, None

    human_rewards = np.asarray(human_rewards, dtype=float)
    if human_rewards.ndim == 1:
        human_rewards = human_rewards[:, None]
    num_humans = human_rewards.shape[1]
    if router.output_dim != num_humans + 1:
        raise EstimatorError(f"Router has {router.output_dim} outputs, expected {num_humans + 1}")

    pi = policy.predict_proba(features)
    algorithm_values = np.sum(algorithm_rewards * pi, axis=1)
    d = router.predict_proba(features)
    d_bot = d[:, num_humans]
    row_values = np.sum(d[:, :num_humans] * human_rewards, axis=1) + d_bot * algorithm_values
    total = float(np.sum(row_values))
    if not np.isfinite(total):
        raise EstimatorError("Objective is not finite")

    grad_theta = None
    if with_policy_grad:
        _, grad_theta = policy.expectation_grad(features, d_bot[:, None] * algorithm_rewards)
    grad_phi = None
    if with_router_grad:
        router_coefficients = np.column_stack([human_rewards, algorithm_values])
        _, grad_phi = router.expectation_grad(features, router_coefficients)
    return total, grad_theta, grad_phi


def _single_human_matrix(log: BanditLog, cost: CostFunction) -> np.ndarray:
    return human_net_rewards(log, cost)[:, None]


def ipw_value(policy: SoftmaxModel, log: BanditLog, propensity: np.ndarray) -> ObjectiveValue:
    """(1/N) sum_i r_i pi_theta(a_i|x_i) / pi0(a_i|x_i)."""
    q = ipw_reward_matrix(log, propensity)
    total, _, _ = team_objective(policy, None, log.features, None, q, with_policy_grad=False)
    return ObjectiveValue.from_total(total, log.n)


def ipw_grad(policy: SoftmaxModel, log: BanditLog, propensity: np.ndarray) -> np.ndarray:
    """Gradient of ipw_value's mean w.r.t. the policy parameters."""
    q = ipw_reward_matrix(log, propensity)
    _, grad_theta, _ = team_objective(policy, None, log.features, None, q)
    return grad_theta / log.n


def two_stage_value(
        router: SoftmaxModel,
        policy: SoftmaxModel,
        log: BanditLog,
        propensity: np.ndarray,
        cost: CostFunction,
) -> ObjectiveValue:
    """sum_i d(h|x_i)(r_i - C(x_i)) + (1 - d(h|x_i)) pi_theta(a_i|x_i)/pi0(a_i|x_i) r_i."""
    total, _, _ = team_objective(
        policy, router, log.features, _single_human_matrix(log, cost), ipw_reward_matrix(log, propensity),
        with_policy_grad=False, with_router_grad=False,
    )
    return ObjectiveValue.from_total(total, log.n)


def joint_value_and_grads(
        policy: SoftmaxModel,
        router: SoftmaxModel,
        log: BanditLog,
        propensity: np.ndarray,
        cost: CostFunction,
) -> tuple[ObjectiveValue, np.ndarray, np.ndarray]:
    """Joint collaboration objective (same form as two_stage_value) with grad_theta and grad_phi."""
    total, grad_theta, grad_phi = team_objective(
        policy, router, log.features, _single_human_matrix(log, cost), ipw_reward_matrix(log, propensity),
    )
    return ObjectiveValue.from_total(total, log.n), grad_theta, grad_phi


def personalized_reward_matrices(
        log: BanditLog,
        propensity: np.ndarray,
        per_human_propensity: Optional[np.ndarray],
        assignment: np.ndarray,
        cost: CostFunction,
        floor: float = PROPENSITY_FLOOR,
        assignment_weighted: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """
    (A, Q) for the personalized objective.

    A[i, h_i] = (r_i - C_{h_i}(x_i)) / d0(h_i|x_i);
    Q[i, a_i] = r_i / (d0(h_i|x_i) pi0(a_i|x_i, h_i)).

    With assignment_weighted=False the algorithm branch drops d0:
    Q[i, a_i] = r_i / pi0(a_i|x_i, h_i). Over a log whose humans were drawn
    from d0 the weighted branch sums to K times the policy value in
    expectation; the unweighted one sums to the value itself.
    """
    if log.humans is None or np.any(log.humans == NO_HUMAN):
        raise EstimatorError("Personalized objective needs a human id on every record")
    assignment = np.asarray(assignment, dtype=float)
    if assignment.ndim == 2:
        assignment = assignment[np.arange(log.n), log.humans]
    if assignment.shape != (log.n,):
        raise EstimatorError(f"Assignment propensities have shape {assignment.shape}, expected ({log.n},)")
    d0 = np.maximum(assignment, floor)
    if not np.all(np.isfinite(d0)):
        raise EstimatorError("Assignment propensities must be finite")

    p = logged_propensities(log, propensity if per_human_propensity is None else per_human_propensity, floor)
    rows = np.arange(log.n)
    human_rewards = np.zeros((log.n, log.num_humans))
    human_rewards[rows, log.humans] = human_net_rewards(log, cost) / d0
    algorithm_rewards = np.zeros((log.n, log.k))
    algorithm_rewards[rows, log.actions] = log.rewards / (d0 * p if assignment_weighted else p)
    return human_rewards, algorithm_rewards


def personalized_value_and_grads(
        policy: SoftmaxModel,
        router: SoftmaxModel,
        log: BanditLog,
        propensity: np.ndarray,
        per_human_propensity: Optional[np.ndarray],
        assignment: np.ndarray,
        cost: CostFunction,
) -> tuple[ObjectiveValue, np.ndarray, np.ndarray]:
    """
    Personalized routing objective over K humans and the algorithm.

    Args:
        policy: pi_theta
        router: d_phi with K+1 outputs
        log: Log whose records all carry human ids
        propensity: Pooled pi0(a_i|x_i), used when per_human_propensity is None
        per_human_propensity: pi0(a_i|x_i, h_i)
        assignment: d0(h_i|x_i) (vector) or N x K matrix
        cost: Per-human cost function

    Returns:
        (objective, grad_theta, grad_phi)
    """
    human_rewards, algorithm_rewards = personalized_reward_matrices(
        log, propensity, per_human_propensity, assignment, cost)
    total, grad_theta, grad_phi = team_objective(policy, router, log.features, human_rewards, algorithm_rewards)
    return ObjectiveValue.from_total(total, log.n), grad_theta, grad_phi


def ec_ipw_value(
        policy: SoftmaxModel,
        log: BanditLog,
        propensity: np.ndarray,
        mask: DeterministicSupportMask,
        r_subopt: float = 0.0,
) -> ObjectiveValue:
    """Expert-consistency IPS: imputed rewards on the deterministic set, IPW elsewhere (mean form)."""
    q = ec_reward_matrix(log, propensity, mask, r_subopt)
    total, _, _ = team_objective(policy, None, log.features, None, q, with_policy_grad=False)
    return ObjectiveValue.from_total(total, log.n)


def ec_ipw_grad(
        policy: SoftmaxModel,
        log: BanditLog,
        propensity: np.ndarray,
        mask: DeterministicSupportMask,
        r_subopt: float = 0.0,
) -> np.ndarray:
    q = ec_reward_matrix(log, propensity, mask, r_subopt)
    _, grad_theta, _ = team_objective(policy, None, log.features, None, q)
    return grad_theta / log.n


def ec_joint_value_and_grads(
        policy: SoftmaxModel,
        router: SoftmaxModel,
        log: BanditLog,
        propensity: np.ndarray,
        mask: DeterministicSupportMask,
        r_subopt: float,
        cost: CostFunction,
) -> tuple[ObjectiveValue, np.ndarray, np.ndarray]:
    """Collaboration objective with expert-consistency imputation on the deterministic set."""
    q = ec_reward_matrix(log, propensity, mask, r_subopt)
    total, grad_theta, grad_phi = team_objective(
        policy, router, log.features, _single_human_matrix(log, cost), q)
    return ObjectiveValue.from_total(total, log.n), grad_theta, grad_phi


def deterministic_bias_oracle(
        policy_probs: np.ndarray,
        logging_probs: np.ndarray,
        rewards: np.ndarray,
        weights: Optional[np.ndarray] = None,
) -> float:
    """
    Bias of IPW under zero-support logging: E_x[-sum_{a: pi0(a|x)=0} pi(a|x) r(x,a)].

    Args:
        policy_probs: N x k target policy probabilities
        logging_probs: N x k exact logging probabilities
        rewards: N x k potential rewards
        weights: Optional instance probabilities (uniform when omitted)

    Returns:
        The bias as a weighted mean over the supplied instances
    """
    policy_probs = np.asarray(policy_probs, dtype=float)
    logging_probs = np.asarray(logging_probs, dtype=float)
    rewards = np.asarray(getattr(rewards, 'values', rewards), dtype=float)
    zero_support = logging_probs == 0.0
    per_instance = -np.sum(np.where(zero_support, policy_probs * rewards, 0.0), axis=1)
    if weights is None:
        return float(np.mean(per_instance))
    weights = np.asarray(weights, dtype=float)
    return float(np.sum(weights * per_instance) / np.sum(weights))


def imputation_bias_oracle(
        policy_probs: np.ndarray,
        mask: DeterministicSupportMask,
        in_b: np.ndarray,
        r_subopt: float = 0.0,
        r_opt: float = 1.0,
        human_probs: Optional[np.ndarray] = None,
) -> ImputationBias:
    """
    Asymptotic bias of the imputed estimator when humans err on a subset B of the deterministic set.

    delta' = (r_s - r_o) E_x[1(x in S) 1(x in B) E_{a~h(.|x)} pi(a^c|x)]
    delta  = (r_s - r_o) E_x[1(x in B)]

    Args:
        policy_probs: N x 2 target policy probabilities
        mask: Deterministic set with complementary actions
        in_b: N flags for the biased subset B (must lie inside S)
        r_subopt: Imputed suboptimal reward
        r_opt: Optimal reward
        human_probs: Optional N x 2 human action distribution; defaults to the mask's a^c

    Returns:
        ImputationBias(delta_prime, delta)
    """
    policy_probs = np.asarray(policy_probs, dtype=float)
    in_b = np.asarray(in_b, dtype=bool)
    if policy_probs.shape[1] != 2:
        raise EstimatorError("Imputation bias is defined for binary actions only")
    if np.any(in_b & ~mask.in_s):
        raise EstimatorError("The biased subset must be contained in the deterministic set")

    rows = np.arange(policy_probs.shape[0])
    if human_probs is None:
        complement_mass = np.where(mask.in_s, policy_probs[rows, np.maximum(mask.complement, 0)], 0.0)
    else:
        human_probs = np.asarray(human_probs, dtype=float)
        # a ~ h, a^c = 1 - a
        complement_mass = human_probs[:, 0] * policy_probs[:, 1] + human_probs[:, 1] * policy_probs[:, 0]

    gap = r_subopt - r_opt
    delta_prime = gap * float(np.mean(np.where(mask.in_s & in_b, complement_mass, 0.0)))
    delta = gap * float(np.mean(in_b))
    if abs(delta_prime) > abs(delta) + 1e-12:
        raise EstimatorError(f"|delta'|={abs(delta_prime)} exceeds |delta|={abs(delta)}")
    return ImputationBias(delta_prime=delta_prime, delta=delta)
