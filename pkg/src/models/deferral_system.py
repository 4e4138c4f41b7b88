"""The deployed human-AI team: policy, router, fitted nuisance models and an optional OOD gate."""

import copy
from typing import Optional

import numpy as np

from src.enums.EMethod import EMethod
from src.models.bandit_log import CostFunction, NO_HUMAN
from src.models.ood_detector import OODDetector
from src.models.propensity_model import AssignmentModel, PropensityModel
from src.models.softmax_model import SoftmaxModel
from src.schemas.decision import Decision

ROUTING_THRESHOLD = 0.5


class DeferralSystem:
    """
    Trained bundle with a deterministic test-time rule.

    Router outputs are [human_0, ..., human_{K-1}, algorithm]. The rule is:
      1. an OOD-flagged instance goes to a human
      2. single human: human iff d(human|x) > 0.5 (strict)
      3. K humans: algorithm iff d(algorithm|x) > max_h d(h|x), else argmax_h
      4. the algorithm plays argmax_a pi(a|x), smallest index on ties
    """

    def __init__(
            self,
            policy: Optional[SoftmaxModel],
            router: Optional[SoftmaxModel],
            method: EMethod,
            cost: CostFunction,
            num_humans: int = 1,
            propensity: Optional[PropensityModel] = None,
            per_human_propensity: Optional[PropensityModel] = None,
            assignment: Optional[AssignmentModel] = None,
            ood: Optional[OODDetector] = None,
            trace: Optional[list[float]] = None,
            stopped_epoch: Optional[int] = None,
            seed: int = 0,
            config_hash: str = "",
    ):
        self.policy = policy
        self.router = router
        self.method = EMethod(method)
        self.cost = cost
        self.num_humans = int(num_humans)
        self.propensity = propensity
        self.per_human_propensity = per_human_propensity
        self.assignment = assignment
        self.ood = ood
        self.trace = list(trace or [])
        self.stopped_epoch = stopped_epoch
        self.seed = int(seed)
        self.config_hash = config_hash
        if router is not None and router.output_dim != self.num_humans + 1:
            raise ValueError(f"Router has {router.output_dim} outputs for {self.num_humans} humans")
        if policy is None and self.method is not EMethod.HUMAN:
            raise ValueError(f"Method {self.method.value} needs a policy")

    def __repr__(self):
        return (f"<DeferralSystem(method={self.method.value}, K={self.num_humans}, "
                f"router={self.router is not None}, ood={self.ood is not None})>")

    @property
    def is_personalized(self) -> bool:
        return self.num_humans > 1

    def with_ood(self, detector: Optional[OODDetector]) -> 'DeferralSystem':
        gated = copy.copy(self)
        gated.ood = detector
        return gated

    def human_mass(self, features: np.ndarray) -> np.ndarray:
        """Total router probability of deferring to any human (0 without a router)."""
        features = np.atleast_2d(np.asarray(features, dtype=float))
        if self.router is None:
            return np.full(features.shape[0], 1.0 if self.method is EMethod.HUMAN else 0.0)
        return 1.0 - self.router.predict_proba(features)[:, -1]

    def decide_batch(self, features: np.ndarray, gated: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Vectorised decision rule.

        Returns:
            (to_human flags, human ids with NO_HUMAN when unspecified or
            algorithm-routed, actions with -1 for human-routed instances)
        """
        features = np.atleast_2d(np.asarray(features, dtype=float))
        n = features.shape[0]
        humans = np.full(n, NO_HUMAN, dtype=np.int64)

        if self.method is EMethod.HUMAN:
            to_human = np.ones(n, dtype=bool)
        elif self.router is None:
            to_human = np.zeros(n, dtype=bool)
        else:
            d = self.router.predict_proba(features)
            if self.is_personalized:
                human_part = d[:, :self.num_humans]
                to_human = ~(d[:, -1] > human_part.max(axis=1))
                humans = np.argmax(human_part, axis=1).astype(np.int64)
            else:
                to_human = d[:, 0] > ROUTING_THRESHOLD

        if gated and self.ood is not None:
            to_human = to_human | self.ood.flag(features)

        if not self.is_personalized:
            humans = np.full(n, NO_HUMAN, dtype=np.int64)
        humans = np.where(to_human, humans, NO_HUMAN)

        actions = np.full(n, -1, dtype=np.int64)
        if self.policy is not None and not to_human.all():
            chosen = np.argmax(self.policy.predict_proba(features[~to_human]), axis=1)
            actions[~to_human] = chosen
        return to_human, humans, actions

    def decide(self, x: np.ndarray, gated: bool = True) -> Decision:
        """Route a single instance."""
        to_human, humans, actions = self.decide_batch(np.asarray(x, dtype=float).reshape(1, -1), gated)
        if to_human[0]:
            return Decision.to_human(None if humans[0] == NO_HUMAN else int(humans[0]))
        return Decision.to_algorithm(int(actions[0]))
