import unittest

import numpy as np

from src.enums.EPropensityKind import EPropensityKind
from src.exceptions import PropensityError
from src.models.bandit_log import BanditLog
from src.models.propensity_model import AssignmentModel, PropensityModel
from src.schemas.train_config import PropensityConfig
from src.services.datagen_service import gen_deterministic_world
from src.services.propensity_service import (
    detect_deterministic_support, fit_assignment, fit_per_human_propensity, fit_propensity, logged_propensity_matrix,
    training_assignment, training_propensities,
)


def logged(features, probs_one, seed, humans=None, num_humans=1):
    """Log whose action 1 is taken with probability probs_one."""
    rng = np.random.default_rng(seed)
    actions = (rng.random(len(probs_one)) < probs_one).astype(int)
    return BanditLog(features, actions, np.zeros(len(actions)), num_actions=2,
                     humans=humans, num_humans=num_humans)


class TestFitPropensity(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(0)
        self.x = rng.uniform(-1, 1, size=(2000, 1))
        self.query = np.array([[-0.5], [0.5]])

    def test_knn_recovers_a_step_policy(self):
        log = logged(self.x, np.where(self.x[:, 0] < 0, 0.2, 0.8), seed=1)
        model = fit_propensity(log, PropensityConfig(kind=EPropensityKind.KNN, n_neighbors=200), seed=0)
        np.testing.assert_allclose(model.predict(self.query)[:, 1], [0.2, 0.8], atol=0.1)

    def test_logistic_recovers_a_smooth_policy(self):
        x = np.random.default_rng(2).uniform(-1, 1, size=(4000, 1))
        truth = 1.0 / (1.0 + np.exp(-2.0 * x[:, 0]))
        log = logged(x, truth, seed=3)
        config = PropensityConfig(kind=EPropensityKind.SOFTMAX_LINEAR, epochs=500, cross_fit=False)
        model = fit_propensity(log, config, seed=0)
        expected = 1.0 / (1.0 + np.exp(-2.0 * np.array([-1.0, 0.0, 1.0])))
        np.testing.assert_allclose(model.predict(np.array([[-1.0], [0.0], [1.0]]))[:, 1], expected, atol=0.08)

    def test_predictions_are_floored_rows_on_the_simplex(self):
        log = logged(self.x, np.where(self.x[:, 0] < 0, 0.0, 1.0), seed=4)
        for kind in (EPropensityKind.KNN, EPropensityKind.SOFTMAX_LINEAR):
            model = fit_propensity(log, PropensityConfig(kind=kind, epochs=50), seed=0)
            probs = model.predict(self.x[:100])
            with self.subTest(kind=kind):
                self.assertTrue(np.all(probs >= 0.01 - 1e-15))
                np.testing.assert_allclose(probs.sum(axis=1), 1.0)

    def test_cross_fitting_gives_out_of_fold_predictions(self):
        log = logged(self.x, np.full(2000, 0.5), seed=5)
        model = fit_propensity(log, PropensityConfig(folds=2), seed=0)
        self.assertEqual(model.training_predictions.shape, (2000, 2))
        self.assertEqual(set(np.unique(model.training_folds)), {0, 1})
        np.testing.assert_array_equal(training_propensities(model, log), model.training_predictions)
        other = log.take(np.arange(10))
        np.testing.assert_array_equal(training_propensities(model, other), model.predict(other.features))

    def test_cache_is_keyed_on_the_log_not_its_length(self):
        log = logged(self.x, np.full(2000, 0.5), seed=5)
        model = fit_propensity(log, PropensityConfig(folds=2), seed=0)
        flipped = BanditLog(log.features, 1 - log.actions, log.rewards, num_actions=2)
        np.testing.assert_array_equal(training_propensities(model, flipped), model.predict(flipped.features))

    def test_same_seed_same_model(self):
        log = logged(self.x, np.full(2000, 0.3), seed=6)
        config = PropensityConfig(kind=EPropensityKind.SOFTMAX_LINEAR, epochs=20)
        a = fit_propensity(log, config, seed=9)
        b = fit_propensity(log, config, seed=9)
        np.testing.assert_array_equal(a.training_predictions, b.training_predictions)
        np.testing.assert_array_equal(a.predict(self.query), b.predict(self.query))

    def test_single_class_log(self):
        log = BanditLog(self.x[:20], np.zeros(20), np.zeros(20), num_actions=2)
        model = fit_propensity(log, PropensityConfig(cross_fit=False), seed=0)
        self.assertEqual(model.constant_class, 0)
        np.testing.assert_allclose(model.predict(self.query), [[0.99, 0.01], [0.99, 0.01]])

    def test_serialization_preserves_predictions(self):
        log = logged(self.x, np.full(2000, 0.4), seed=7)
        for kind in (EPropensityKind.KNN, EPropensityKind.SOFTMAX_MLP):
            model = fit_propensity(log, PropensityConfig(kind=kind, epochs=10, hidden=(4, 4), cross_fit=False), 0)
            restored = PropensityModel.from_dict(model.to_dict())
            with self.subTest(kind=kind):
                np.testing.assert_array_equal(restored.predict(self.query), model.predict(self.query))

    def test_feature_dimension_is_checked(self):
        log = logged(self.x, np.full(2000, 0.4), seed=8)
        model = fit_propensity(log, PropensityConfig(cross_fit=False), seed=0)
        with self.assertRaises(PropensityError):
            model.predict(np.zeros((2, 3)))


class TestPerHumanAndAssignment(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(10)
        self.x = rng.uniform(-1, 1, size=(600, 1))
        self.humans = rng.integers(0, 2, size=600)

    def test_per_human_model_separates_humans(self):
        # Human 0 always plays 0, human 1 always plays 1
        log = BanditLog(self.x, self.humans, np.zeros(600), num_actions=2, humans=self.humans, num_humans=2)
        model = fit_per_human_propensity(log, PropensityConfig(cross_fit=False), seed=0)
        probs = model.predict(np.array([[0.1], [0.1]]), np.array([0, 1]))
        np.testing.assert_allclose(probs, [[0.99, 0.01], [0.01, 0.99]])

    def test_per_human_knn_caps_neighbours_at_the_human_record_count(self):
        # Human 1 has three records, all action 1; human 0 always plays 0
        humans = np.r_[np.zeros(200, dtype=int), np.ones(3, dtype=int)]
        x = np.random.default_rng(14).uniform(-1, 1, size=(203, 1))
        log = BanditLog(x, humans, np.zeros(203), num_actions=2, humans=humans, num_humans=2)
        config = PropensityConfig(kind=EPropensityKind.KNN, n_neighbors=25, cross_fit=False)
        model = fit_per_human_propensity(log, config, seed=0)
        np.testing.assert_allclose(model.predict(np.array([[0.0]]), np.array([1])), [[0.01, 0.99]])
        np.testing.assert_allclose(model.predict(np.array([[0.0]]), np.array([0])), [[0.99, 0.01]])

    def test_per_human_model_needs_ids(self):
        log = BanditLog(self.x, self.humans, np.zeros(600), num_actions=2)
        with self.assertRaises(PropensityError):
            fit_per_human_propensity(log, PropensityConfig(), seed=0)

    def test_randomized_assignment_is_uniform(self):
        log = BanditLog(self.x, self.humans, np.zeros(600), num_actions=2, humans=self.humans, num_humans=2)
        assignment = fit_assignment(log, PropensityConfig(), seed=0)
        self.assertTrue(assignment.is_randomized)
        np.testing.assert_array_equal(assignment.predict(self.x[:3]), np.full((3, 2), 0.5))

    def test_fitted_assignment_follows_features(self):
        humans = (self.x[:, 0] > 0).astype(int)
        log = BanditLog(self.x, np.zeros(600), np.zeros(600), num_actions=2, humans=humans, num_humans=2)
        assignment = fit_assignment(log, PropensityConfig(cross_fit=False), seed=0, randomized=False)
        probs = assignment.predict(np.array([[-0.5], [0.5]]))
        self.assertGreater(probs[0, 0], 0.9)
        self.assertGreater(probs[1, 1], 0.9)
        restored = AssignmentModel.from_dict(assignment.to_dict())
        np.testing.assert_array_equal(restored.predict(np.array([[0.5]])), assignment.predict(np.array([[0.5]])))

    def test_training_assignment_is_out_of_fold_on_its_own_log(self):
        humans = (self.x[:, 0] > 0).astype(int)
        log = BanditLog(self.x, np.zeros(600), np.zeros(600), num_actions=2, humans=humans, num_humans=2)
        assignment = fit_assignment(log, PropensityConfig(folds=2), seed=0, randomized=False)
        np.testing.assert_array_equal(training_assignment(assignment, log), assignment.classifier.training_predictions)
        other = log.take(np.arange(10))
        np.testing.assert_array_equal(training_assignment(assignment, other), assignment.predict(other.features))


class TestDeterministicSupport(unittest.TestCase):

    def test_from_matrix(self):
        log = BanditLog(np.zeros((4, 1)), [0, 1, 0, 1], np.zeros(4), num_actions=2)
        probs = np.array([[0.995, 0.005], [0.995, 0.005], [0.6, 0.4], [0.01, 0.99]])
        mask = detect_deterministic_support(log, probs, tau_det=0.99)
        np.testing.assert_array_equal(mask.in_s, [True, False, False, True])
        np.testing.assert_array_equal(mask.complement[mask.in_s], [1, 0])

    def test_from_fitted_model(self):
        x = np.random.default_rng(12).uniform(-1, 1, size=(2000, 1))
        log = logged(x, np.where(x[:, 0] < 0, 0.0, 0.5), seed=13)
        model = fit_propensity(log, PropensityConfig(kind=EPropensityKind.KNN, n_neighbors=25), seed=0)
        mask = detect_deterministic_support(log, model)
        self.assertTrue(mask.in_s[x[:, 0] < -0.2].all())
        self.assertFalse(mask.in_s[x[:, 0] > 0.2].any())

    def test_requires_binary_actions_and_matching_shape(self):
        log = BanditLog(np.zeros((2, 1)), [0, 2], np.zeros(2), num_actions=3)
        with self.assertRaises(PropensityError):
            detect_deterministic_support(log, np.full((2, 3), 1 / 3))
        binary = BanditLog(np.zeros((2, 1)), [0, 1], np.zeros(2), num_actions=2)
        with self.assertRaises(PropensityError):
            detect_deterministic_support(binary, np.full((3, 2), 0.5))

    def test_masks_shrink_as_the_threshold_rises(self):
        log = gen_deterministic_world(s=0.3, alpha=0.0, n=2000, seed=15).log
        probs = logged_propensity_matrix(log)
        masks = [detect_deterministic_support(log, probs, tau).in_s for tau in (0.5, 0.7, 0.9, 0.99, 1.0)]
        for looser, tighter in zip(masks, masks[1:]):
            self.assertFalse(np.any(tighter & ~looser))

    def test_flagged_fraction_tracks_the_deterministic_quantile(self):
        log = gen_deterministic_world(s=0.3, alpha=0.0, n=5000, seed=16).log
        from_log = detect_deterministic_support(log, logged_propensity_matrix(log))
        self.assertAlmostEqual(from_log.fraction, 0.3, delta=0.05)
        model = fit_propensity(log, PropensityConfig(kind=EPropensityKind.KNN, n_neighbors=10, cross_fit=False), 0)
        self.assertAlmostEqual(detect_deterministic_support(log, model).fraction, 0.3, delta=0.05)


class TestLoggedPropensities(unittest.TestCase):

    def test_binary_log_gives_both_columns(self):
        log = BanditLog(np.zeros((3, 1)), [0, 1, 1], np.zeros(3), num_actions=2, propensities=[0.8, 0.3, 1.0])
        np.testing.assert_allclose(logged_propensity_matrix(log), [[0.8, 0.2], [0.7, 0.3], [0.0, 1.0]])

    def test_multi_action_log_gives_the_vector(self):
        log = BanditLog(np.zeros((2, 1)), [0, 2], np.zeros(2), num_actions=3, propensities=[0.5, 0.25])
        np.testing.assert_allclose(logged_propensity_matrix(log), [0.5, 0.25])

    def test_missing_values_give_none(self):
        self.assertIsNone(logged_propensity_matrix(BanditLog(np.zeros((2, 1)), [0, 1], np.zeros(2), num_actions=2)))
        partial = BanditLog(np.zeros((2, 1)), [0, 1], np.zeros(2), num_actions=2, propensities=[0.5, np.nan])
        self.assertIsNone(logged_propensity_matrix(partial))


if __name__ == '__main__':
    unittest.main()
