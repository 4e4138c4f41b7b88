import unittest

import numpy as np

from src.enums.EMethod import EMethod
from src.enums.EOODKind import EOODKind
from src.exceptions import OODError
from src.models.bandit_log import BanditLog, CostFunction
from src.models.deferral_system import DeferralSystem
from src.models.ood_detector import OODDetector
from src.models.softmax_model import SoftmaxModel
from src.schemas.train_config import OODConfig, PropensityConfig, TrainConfig
from src.services.datagen_service import gen_covshift_world
from src.services.ood_service import fit_ood, gated_decide, gated_objective, tune_ood, tune_system
from src.services.propensity_service import fit_propensity


def bias_only(model: SoftmaxModel, probs) -> SoftmaxModel:
    params = np.zeros(model.num_parameters)
    params[-model.output_dim:] = np.log(probs)
    return model.with_parameters(params)


class TestDetectors(unittest.TestCase):

    def setUp(self):
        self.train = np.random.default_rng(0).normal(size=(2000, 3))

    def test_training_flag_rate_matches_contamination(self):
        detector = fit_ood(self.train, EOODKind.MAHALANOBIS, p=0.1)
        self.assertAlmostEqual(float(detector.flag(self.train).mean()), 0.1, delta=0.01)
        # A training point is its own nearest neighbour at query time
        detector = fit_ood(self.train, EOODKind.KNN_DISTANCE, p=0.1)
        self.assertLessEqual(float(detector.flag(self.train).mean()), 0.11)
        self.assertAlmostEqual(float(np.mean(detector.training_scores > detector.threshold)), 0.1, delta=0.01)

    def test_far_points_are_flagged(self):
        for kind in EOODKind:
            detector = fit_ood(self.train, kind, p=0.05)
            flags = detector.flag(np.array([[0.0, 0.0, 0.0], [8.0, -8.0, 8.0]]))
            with self.subTest(kind=kind):
                np.testing.assert_array_equal(flags, [False, True])

    def test_shifted_test_set_is_flagged(self):
        train, test, _ = gen_covshift_world(mu=9.0, n_train=5000, n_test=5000, seed=3)
        detector = fit_ood(train.features, EOODKind.MAHALANOBIS, p=0.05)
        train_rate = float(detector.flag(train.features).mean())
        self.assertGreaterEqual(float(detector.flag(test.features).mean()), 10 * train_rate)

    def test_flags_grow_with_contamination(self):
        detector = fit_ood(self.train, EOODKind.MAHALANOBIS, p=0.01)
        query = np.random.default_rng(1).normal(scale=1.5, size=(500, 3))
        previous = detector.flag(query)
        for p in (0.02, 0.05, 0.1, 0.5, 0.99):
            flags = detector.with_contamination(p).flag(query)
            self.assertTrue(np.all(flags[previous]))
            previous = flags

    def test_mahalanobis_scores_match_numpy(self):
        detector = fit_ood(self.train, EOODKind.MAHALANOBIS, p=0.05)
        covariance = np.cov(self.train, rowvar=False)
        covariance += 1e-6 * np.trace(covariance) / 3 * np.eye(3)
        centered = self.train[:5] - self.train.mean(axis=0)
        expected = np.sum(centered @ np.linalg.inv(covariance) * centered, axis=1)
        np.testing.assert_allclose(detector.score(self.train[:5]), expected, rtol=1e-8)

    def test_invalid_inputs(self):
        with self.assertRaises(OODError):
            fit_ood(self.train[:4], EOODKind.MAHALANOBIS, p=0.05)
        with self.assertRaises(OODError):
            fit_ood(np.zeros((20, 2)), EOODKind.MAHALANOBIS, p=0.05)
        with self.assertRaises(OODError):
            fit_ood(self.train, EOODKind.MAHALANOBIS, p=1.0)
        with self.assertRaises(OODError):
            fit_ood(self.train[:1], EOODKind.KNN_DISTANCE, p=0.05)

    def test_serialization(self):
        for kind in EOODKind:
            detector = fit_ood(self.train[:200], kind, p=0.05)
            restored = OODDetector.from_dict(detector.to_dict())
            with self.subTest(kind=kind):
                self.assertEqual(restored.threshold, detector.threshold)
                np.testing.assert_array_equal(restored.score(self.train[:20]), detector.score(self.train[:20]))


class TestGate(unittest.TestCase):

    def setUp(self):
        self.train = np.random.default_rng(2).normal(size=(500, 2))
        policy = SoftmaxModel(2, 2).with_parameters(np.array([1.0, -1.0, 0.0, 0.0, 0.0, 0.0]))
        self.system = DeferralSystem(policy, bias_only(SoftmaxModel(2, 2), [0.1, 0.9]), EMethod.JC_OD,
                                     CostFunction.constant(0.0))

    def test_gate_is_inert_on_unflagged_instances(self):
        gated = self.system.with_ood(fit_ood(self.train, EOODKind.MAHALANOBIS, p=0.05))
        query = np.random.default_rng(3).normal(scale=2.0, size=(300, 2))
        flags = gated.ood.flag(query)
        self.assertTrue(flags.any() and not flags.all())
        plain = self.system.decide_batch(query)
        routed = gated.decide_batch(query)
        np.testing.assert_array_equal(routed[0][~flags], plain[0][~flags])
        np.testing.assert_array_equal(routed[2][~flags], plain[2][~flags])
        self.assertTrue(routed[0][flags].all())

    def test_gated_decide(self):
        gated = self.system.with_ood(fit_ood(self.train, EOODKind.MAHALANOBIS, p=0.05))
        self.assertTrue(gated_decide(gated, np.array([9.0, 9.0])).is_human)
        self.assertFalse(gated_decide(gated, np.array([0.1, 0.0])).is_human)
        self.assertIsNone(self.system.ood)


class TestTuning(unittest.TestCase):
    """Tuning log where humans always play action 1 with reward 1 and the policy avoids action 1."""

    def setUp(self):
        rng = np.random.default_rng(4)
        self.train = rng.normal(size=(500, 2))
        tuning_x = np.vstack([rng.normal(size=(100, 2)), rng.normal(loc=4.0, size=(100, 2))])
        self.tuning = BanditLog(tuning_x, np.ones(200), np.ones(200), num_actions=2, humans=np.zeros(200))
        self.propensity = np.full(200, 0.5)
        policy = bias_only(SoftmaxModel(2, 2), [1.0 - 1e-9, 1e-9])
        router = bias_only(SoftmaxModel(2, 2), [1e-9, 1.0 - 1e-9])
        self.system = DeferralSystem(policy, router, EMethod.JC_OD, CostFunction.constant(0.0),
                                     ood=fit_ood(self.train, EOODKind.MAHALANOBIS, p=0.05))
        self.grid = [0.01, 0.05, 0.2, 0.5]

    def test_scores_match_brute_force(self):
        best, scores = tune_ood(self.grid, self.tuning, self.system, self.propensity)
        for p in self.grid:
            expected = gated_objective(self.system, self.system.ood.with_contamination(p), self.tuning,
                                       self.propensity, self.system.cost)
            self.assertEqual(scores[p], expected)
        self.assertEqual(best, max(self.grid, key=lambda p: (scores[p], -p)))

    def test_useful_humans_push_contamination_up(self):
        best, scores = tune_ood(self.grid, self.tuning, self.system, self.propensity)
        self.assertEqual(best, 0.5)
        self.assertEqual(list(scores), sorted(self.grid))

    def test_expensive_humans_push_contamination_down(self):
        best, _ = tune_ood(self.grid, self.tuning, self.system, self.propensity, cost=CostFunction.constant(2.0))
        self.assertEqual(best, 0.01)

    def test_ties_go_to_the_smaller_p(self):
        centred = BanditLog(np.zeros((5, 2)), np.ones(5), np.ones(5), num_actions=2, humans=np.zeros(5))
        best, scores = tune_ood([0.3, 0.2], centred, self.system, np.full(5, 0.5))
        self.assertEqual(scores[0.2], scores[0.3])
        self.assertEqual(best, 0.2)

    def test_errors(self):
        with self.assertRaises(OODError):
            tune_ood([], self.tuning, self.system, self.propensity)
        with self.assertRaises(OODError):
            tune_ood(self.grid, self.tuning, self.system.with_ood(None), self.propensity)

    def test_tune_system_regates(self):
        propensity = fit_propensity(self.tuning.take(np.arange(50)), PropensityConfig(cross_fit=False), seed=0)
        system = DeferralSystem(self.system.policy, self.system.router, EMethod.JC_OD, self.system.cost,
                                propensity=propensity, ood=self.system.ood)
        config = TrainConfig(method=EMethod.JC_OD, ood=OODConfig(p_grid=self.grid))
        tuned, best, scores = tune_system(system, self.tuning, config)
        self.assertEqual(tuned.ood.p, best)
        self.assertEqual(system.ood.p, 0.05)
        self.assertEqual(set(scores), set(self.grid))
        with self.assertRaises(OODError):
            tune_system(system.with_ood(None), self.tuning, config)


if __name__ == '__main__':
    unittest.main()
