import math
import unittest

import numpy as np
from scipy.stats import norm

from src.exceptions import DataGenError
from src.models.human_behavior import NoiseHBM, WorkerPool
from src.services.datagen_service import (
    covshift_split_by_score, deterministic_rewards, gen_covshift_world, gen_deterministic_world,
    gen_multilabel_dataset, gen_multilabel_world, gen_responder_world, multilabel_to_bandit, train_probability,
)


class TestDeterministicWorld(unittest.TestCase):

    def test_rewards(self):
        rewards = deterministic_rewards(np.array([[1.0, 2.0], [-1.0, -1.0], [1.0, -1.0], [0.0, 3.0]]))
        np.testing.assert_array_equal(rewards, [[-0.5, 0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, -0.5]])

    def test_deterministic_set_is_the_top_quantile(self):
        world = gen_deterministic_world(s=0.3, alpha=0.0, n=1000, seed=1)
        in_s = world.oracle_mask.in_s
        self.assertEqual(int(in_s.sum()), math.ceil(0.3 * 1000))
        self.assertGreater(world.features[in_s, 0].min(), world.features[~in_s, 0].max())

    def test_logged_propensities_follow_the_human_policy(self):
        world = gen_deterministic_world(s=0.3, alpha=0.0, n=500, seed=2)
        log = world.log
        in_s = world.oracle_mask.in_s
        np.testing.assert_array_equal(log.propensities[in_s], 1.0)
        p1 = norm.cdf(world.features[~in_s, 0])
        expected = np.where(log.actions[~in_s] == 1, p1, 1.0 - p1)
        np.testing.assert_allclose(log.propensities[~in_s], expected)
        np.testing.assert_allclose(world.human_policy.sum(axis=1), 1.0)
        np.testing.assert_array_equal(log.rewards, world.counterfactuals.values[np.arange(500), log.actions])

    def test_strict_experts_are_optimal(self):
        world = gen_deterministic_world(s=0.4, alpha=0.0, n=500, seed=3, strict_ec=True)
        in_s = world.oracle_mask.in_s
        optimal = world.counterfactuals.values.argmax(axis=1)
        np.testing.assert_array_equal(world.log.actions[in_s], optimal[in_s])
        self.assertFalse(world.metadata['biased'].any())

    def test_alpha_flips_deterministic_actions(self):
        clean = gen_deterministic_world(s=0.4, alpha=0.0, n=300, seed=4, strict_ec=True)
        flipped = gen_deterministic_world(s=0.4, alpha=1.0, n=300, seed=4, strict_ec=True)
        in_s = clean.oracle_mask.in_s
        np.testing.assert_array_equal(flipped.log.actions[in_s], 1 - clean.log.actions[in_s])
        np.testing.assert_array_equal(flipped.metadata['biased'], in_s)

    def test_seeded(self):
        a = gen_deterministic_world(0.2, 0.1, 100, seed=5)
        b = gen_deterministic_world(0.2, 0.1, 100, seed=5)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.log.actions, b.log.actions)

    def test_zero_s_has_no_deterministic_set(self):
        self.assertTrue(gen_deterministic_world(0.0, 0.0, 50, seed=6).oracle_mask.is_empty)

    def test_invalid_parameters(self):
        for kwargs in ({'s': 1.0, 'alpha': 0.0, 'n': 10}, {'s': 0.2, 'alpha': 1.5, 'n': 10},
                       {'s': 0.2, 'alpha': 0.0, 'n': 0}):
            with self.subTest(kwargs=kwargs), self.assertRaises(DataGenError):
                gen_deterministic_world(seed=0, **kwargs)


class TestCovariateShiftWorld(unittest.TestCase):

    def test_shift_and_rewards(self):
        train, test, tune = gen_covshift_world(mu=3.0, n_train=4000, n_test=4000, seed=1, n_tune=500)
        self.assertAlmostEqual(float(train.features[:, 1].mean()), 3.0, delta=0.1)
        self.assertAlmostEqual(float(test.features[:, 1].mean()), 0.0, delta=0.1)
        self.assertIsNone(test.log)
        self.assertEqual(tune.log.n, 500)

        residual = test.counterfactuals.values[:, 1] - (2 * test.features[:, 0] + test.features[:, 1])
        self.assertAlmostEqual(float(residual.std()), 1.0, delta=0.05)
        residual = test.counterfactuals.values[:, 0] - test.features[:, 0]
        self.assertAlmostEqual(float(residual.mean()), 0.0, delta=0.05)

    def test_logging_policy(self):
        train, _, _ = gen_covshift_world(mu=0.0, n_train=300, n_test=10, seed=2)
        p1 = norm.cdf(0.5 * train.features[:, 0])
        expected = np.where(train.log.actions == 1, p1, 1.0 - p1)
        np.testing.assert_allclose(train.log.propensities, expected)

    def test_oracle_value_of_the_test_distribution(self):
        # E[max(x0 + x1, 0)] = 1 / sqrt(pi) for x ~ N(0, I2)
        _, test, _ = gen_covshift_world(mu=1.0, n_train=10, n_test=100000, seed=4)
        self.assertAlmostEqual(float(np.maximum(test.features.sum(axis=1), 0.0).mean()), 0.5642, delta=0.01)

    def test_no_tuning_set_by_default(self):
        self.assertIsNone(gen_covshift_world(1.0, 10, 10, seed=3)[2])

    def test_invalid_sizes(self):
        with self.assertRaises(DataGenError):
            gen_covshift_world(1.0, 0, 10, seed=0)
        with self.assertRaises(DataGenError):
            gen_covshift_world(1.0, 10, 10, seed=0, n_tune=-1)


class TestResponderWorld(unittest.TestCase):

    def test_band_rewards_and_log(self):
        world = gen_responder_world(n=2000, seed=1, rho=0.9)
        responder = np.abs(world.features[:, 0]) < 0.5
        np.testing.assert_array_equal(world.counterfactuals.values[:, 1], np.where(responder, 1.0, -1.0))
        np.testing.assert_array_equal(world.counterfactuals.values[:, 0], 0.0)
        optimal = world.counterfactuals.values.argmax(axis=1)
        self.assertAlmostEqual(float(np.mean(world.log.actions == optimal)), 0.9, delta=0.03)


class TestMultilabel(unittest.TestCase):

    def test_every_instance_has_a_label(self):
        features, label_sets = gen_multilabel_world(n=500, d=5, n_labels=6, seed=1)
        self.assertEqual(features.shape, (500, 5))
        self.assertTrue(all(len(labels) >= 1 for labels in label_sets))
        self.assertTrue(all(0 <= label < 6 for labels in label_sets for label in labels))

    def test_bandit_conversion(self):
        features = np.zeros((3, 1))
        label_sets = [[0], [1, 2], [2]]
        pool = WorkerPool([NoiseHBM(1.0, 3)], [0.0])
        log, table = multilabel_to_bandit(features, label_sets, pool, seed=0)
        np.testing.assert_array_equal(table.values, [[1, 0, 0], [0, 1, 1], [0, 0, 1]])
        np.testing.assert_array_equal(log.rewards, 1.0)
        self.assertTrue(log.binary_rewards)

    def test_dataset(self):
        pool = WorkerPool([NoiseHBM(0.7, 4), NoiseHBM(0.9, 4)], [0.0, 0.1])
        dataset = gen_multilabel_dataset(n=200, d=3, n_labels=4, pool=pool, seed=2)
        self.assertEqual(dataset.k, 4)
        self.assertEqual(dataset.log.num_humans, 2)
        self.assertEqual(len(dataset.label_sets), 200)

    def test_invalid_labels(self):
        pool = WorkerPool([NoiseHBM(1.0, 2)], [0.0])
        with self.assertRaises(DataGenError):
            multilabel_to_bandit(np.zeros((2, 1)), [[], []], pool, seed=0)
        with self.assertRaises(DataGenError):
            multilabel_to_bandit(np.zeros((2, 1)), [[0], [3]], pool, seed=0, num_labels=2)
        with self.assertRaises(DataGenError):
            gen_multilabel_world(n=10, d=2, n_labels=1, seed=0)


class TestShiftSplit(unittest.TestCase):

    def test_train_probability(self):
        self.assertAlmostEqual(float(train_probability(0.0, 0.0)), 0.25)
        self.assertLess(float(train_probability(5.0, 0.0)), 0.5)
        self.assertGreater(float(train_probability(-50.0, 0.0)), 0.0)

    def test_split_partitions_the_rows(self):
        features = np.random.default_rng(3).normal(size=(1000, 4))
        train, test = covshift_split_by_score(features, seed=1)
        self.assertEqual(sorted(np.r_[train, test].tolist()), list(range(1000)))
        self.assertTrue(np.all(np.diff(train) > 0))
        # Instances with a large score are more likely to be in training
        score = features.sum(axis=1)
        self.assertGreater(score[train].mean(), score[test].mean())


if __name__ == '__main__':
    unittest.main()
