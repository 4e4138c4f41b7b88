import unittest

import numpy as np

from src.enums.EMethod import EMethod
from src.enums.ERoute import EMaskSource
from src.exceptions import TrainingError
from src.models.bandit_log import BanditLog, CostFunction, DeterministicSupportMask
from src.models.softmax_model import SoftmaxModel
from src.schemas.train_config import ECConfig, TrainConfig
from src.services.datagen_service import gen_deterministic_world, gen_responder_world
from src.services.estimator_service import ipw_value, two_stage_value
from src.services.propensity_service import fit_propensity
from src.services.training_service import (
    build_cost, gradient_ascent, imputed_reward_range, train_ao, train_ec_variant, train_joint,
    train_joint_personalized, train_system, train_two_stage,
)
from utils.helpers import rng_stream


def quadratic(target):
    def objective(params, rows, active):
        value = -float(np.sum((params[0] - target) ** 2))
        return value, [-2.0 * (params[0] - target)]
    return objective


class TestGradientAscent(unittest.TestCase):

    def test_converges_on_a_concave_quadratic(self):
        config = TrainConfig(learning_rate=0.05, max_epochs=2000, patience=2000)
        result = gradient_ascent(quadratic(np.array([3.0, -1.0])), [np.zeros(2)], config, n=1)
        np.testing.assert_allclose(result.parameters[0], [3.0, -1.0], atol=0.1)
        self.assertIsNone(result.stopped_epoch)
        self.assertEqual(len(result.trace), 2000)
        self.assertGreater(result.trace[-1], result.trace[0])

    def test_stops_after_patience_epochs_without_improvement(self):
        flat = lambda params, rows, active: (1.0, [np.zeros_like(params[0])])
        result = gradient_ascent(flat, [np.zeros(3)], TrainConfig(patience=4), n=1)
        self.assertEqual(result.stopped_epoch, 4)
        self.assertEqual(result.trace, [1.0] * 5)

    def test_frozen_blocks_do_not_move(self):
        def objective(params, rows, active):
            return -float(np.sum(params[0] ** 2) + np.sum(params[1] ** 2)), [-2 * params[0], -2 * params[1]]

        config = TrainConfig(learning_rate=0.1, max_epochs=50)
        result = gradient_ascent(objective, [np.ones(2), np.ones(2)], config, n=1, frozen=(True, False))
        np.testing.assert_array_equal(result.parameters[0], np.ones(2))
        self.assertTrue(np.all(np.abs(result.parameters[1]) < 1.0))

    def test_non_finite_objective(self):
        broken = lambda params, rows, active: (float('nan'), [np.zeros(1)])
        with self.assertRaises(TrainingError):
            gradient_ascent(broken, [np.zeros(1)], TrainConfig(), n=1)

    def test_minibatches_cover_every_record(self):
        seen = []

        def objective(params, rows, active):
            if rows is not None:
                seen.extend(rows.tolist())
            return 0.0, [np.zeros(1)]

        gradient_ascent(objective, [np.zeros(1)], TrainConfig(batch_size=3, max_epochs=1), n=10)
        self.assertEqual(sorted(seen), list(range(10)))


class TestCost(unittest.TestCase):

    def test_build_cost(self):
        self.assertEqual(build_cost(TrainConfig(cost=0.2)).value(0, 5), 0.2)
        per_human = build_cost(TrainConfig(cost=[0.1, 0.3]), num_humans=2)
        self.assertEqual(per_human.value(1, 0), 0.3)
        with self.assertRaises(TrainingError):
            build_cost(TrainConfig(cost=[0.1, 0.3]), num_humans=3)


class TestMethods(unittest.TestCase):

    def setUp(self):
        self.world = gen_deterministic_world(s=0.3, alpha=0.0, n=400, seed=11)
        self.log = self.world.log
        self.propensity = fit_propensity(self.log, TrainConfig().propensity, seed=0)

    def test_empty_mask_reduces_ec_to_plain_ipw(self):
        ao = train_ao(self.log, TrainConfig(method=EMethod.AO, max_epochs=30), self.propensity)
        config = TrainConfig(method=EMethod.AO_EC, max_epochs=30, ec=ECConfig(mask_source=EMaskSource.ORACLE))
        ec = train_system(self.log, config, self.propensity, mask=DeterministicSupportMask.empty(self.log.n))
        np.testing.assert_array_equal(ec.policy.parameters, ao.policy.parameters)
        self.assertEqual(ec.trace, ao.trace)
        self.assertIsNone(ec.router)

    def test_oracle_mask_is_required_when_requested(self):
        config = TrainConfig(method=EMethod.JC_EC, max_epochs=5, ec=ECConfig(mask_source=EMaskSource.ORACLE))
        with self.assertRaises(TrainingError):
            train_system(self.log, config, self.propensity)

    def test_ec_needs_binary_actions(self):
        log = BanditLog(np.zeros((6, 1)), [0, 1, 2, 0, 1, 2], np.zeros(6), num_actions=3)
        with self.assertRaises(TrainingError):
            train_ec_variant(log, TrainConfig(method=EMethod.TS_EC, max_epochs=5))
        with self.assertRaises(TrainingError):
            train_ec_variant(self.log, TrainConfig(method=EMethod.JC, max_epochs=5))

    def test_router_methods_record_their_run(self):
        for method in (EMethod.TS, EMethod.JC, EMethod.TS_EC, EMethod.JC_EC):
            system = train_system(self.log, TrainConfig(method=method, max_epochs=20, seed=3), self.propensity)
            with self.subTest(method=method):
                self.assertEqual(system.method, method)
                self.assertEqual(system.router.output_dim, 2)
                self.assertTrue(0 < len(system.trace) <= 20)
                self.assertEqual(system.seed, 3)
                self.assertTrue(system.config_hash)
                self.assertIs(system.propensity, self.propensity)

    def test_jc_od_attaches_a_detector(self):
        config = TrainConfig(method=EMethod.JC_OD, max_epochs=5)
        system = train_system(self.log, config, self.propensity)
        self.assertIsNotNone(system.ood)
        self.assertEqual(system.ood.p, config.ood.p)

    def test_personalized_training_needs_human_ids(self):
        anonymous = BanditLog(self.log.features, self.log.actions, self.log.rewards, num_actions=2)
        with self.assertRaises(TrainingError):
            train_joint_personalized(anonymous, TrainConfig(method=EMethod.JCP, max_epochs=5), self.propensity)

    def test_same_seed_same_system(self):
        config = TrainConfig(method=EMethod.JC, max_epochs=15, seed=7)
        a = train_system(self.log, config, self.propensity)
        b = train_system(self.log, config, self.propensity)
        np.testing.assert_array_equal(a.router.parameters, b.router.parameters)
        self.assertEqual(a.config_hash, b.config_hash)


class TestPolicyOnly(unittest.TestCase):
    """Uniformly logged actions where only action 1 ever pays."""

    def setUp(self):
        rng = np.random.default_rng(17)
        actions = rng.integers(0, 2, size=400)
        self.log = BanditLog(rng.normal(size=(400, 2)), actions, actions.astype(float), num_actions=2,
                             propensities=np.full(400, 0.5))
        self.config = TrainConfig(method=EMethod.AO, learning_rate=0.05, max_epochs=300, patience=300, seed=2)

    def test_learns_the_paying_action(self):
        system = train_ao(self.log, self.config)
        self.assertGreater(float(system.policy.predict_proba(self.log.features)[:, 1].mean()), 0.9)

    def test_objective_trace_mostly_increases(self):
        trace = np.asarray(train_ao(self.log, self.config).trace)
        self.assertGreaterEqual(float(np.mean(np.diff(trace) >= -1e-6)), 0.95)

    def test_zero_rewards_leave_the_initial_policy(self):
        log = BanditLog(self.log.features, self.log.actions, np.zeros(400), num_actions=2,
                        propensities=np.full(400, 0.5))
        system = train_ao(log, self.config)
        initial = SoftmaxModel.initialize(2, 2, rng_stream(self.config.seed, "init", 0),
                                          self.config.policy_architecture, self.config.hidden, self.config.activation)
        np.testing.assert_array_equal(system.policy.parameters, initial.parameters)


class TestRouterTraining(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.world = gen_responder_world(n=2000, seed=9, rho=0.9)
        cls.log = cls.world.log
        cls.propensity = fit_propensity(cls.log, TrainConfig().propensity, seed=0)

    def test_two_stage_never_loses_to_its_own_policy(self):
        cost = CostFunction.constant(0.0)
        config = TrainConfig(method=EMethod.TS, learning_rate=0.05, max_epochs=200, patience=200)
        system = train_two_stage(self.log, config, self.propensity, cost=cost)
        team = two_stage_value(system.router, system.policy, self.log, self.log.propensities, cost)
        alone = ipw_value(system.policy, self.log, self.log.propensities)
        self.assertGreaterEqual(team.total, alone.total - 1e-6)

    def test_personalized_with_one_human_matches_joint(self):
        self.assertEqual(self.log.num_humans, 1)
        cost = CostFunction.constant(0.1)
        config = TrainConfig(method=EMethod.JCP, max_epochs=40, seed=4)
        joint = train_joint(self.log, config.model_copy(update={'method': EMethod.JC}), self.propensity, cost=cost)
        personalized = train_joint_personalized(self.log, config, self.propensity, cost)
        np.testing.assert_allclose(personalized.policy.parameters, joint.policy.parameters)
        np.testing.assert_allclose(personalized.router.parameters, joint.router.parameters)


class TestPerfectLoggedHuman(unittest.TestCase):
    """Humans who always pick the best action, logged with their exact propensities."""

    def setUp(self):
        rng = np.random.default_rng(21)
        self.x = rng.uniform(-1, 1, size=(600, 2))
        # No linear policy separates the quadrants
        self.best = (self.x[:, 0] * self.x[:, 1] > 0).astype(int)
        self.rng = rng
        self.free = CostFunction.constant(0.0)

    def test_joint_router_defers_to_a_free_perfect_human(self):
        log = BanditLog(self.x, self.best, np.ones(600), num_actions=2, humans=np.zeros(600, dtype=int),
                        propensities=np.ones(600))
        config = TrainConfig(method=EMethod.JC, learning_rate=0.05, max_epochs=200, patience=200)
        system = train_system(log, config, cost=self.free)
        self.assertGreater(float(system.decide_batch(self.x)[0].mean()), 0.9)

    def test_personalized_router_picks_the_perfect_human(self):
        humans = self.rng.integers(0, 2, size=600)
        guesses = self.rng.integers(0, 2, size=600)
        actions = np.where(humans == 0, self.best, guesses)
        log = BanditLog(self.x, actions, (actions == self.best).astype(float), num_actions=2, humans=humans,
                        num_humans=2, propensities=np.where(humans == 0, 1.0, 0.5))
        config = TrainConfig(method=EMethod.JCP, learning_rate=0.05, max_epochs=200, patience=200)
        to_human, chosen, _ = train_system(log, config, cost=self.free).decide_batch(self.x)
        self.assertGreater(float(np.mean(to_human & (chosen == 0))), 0.9)


class TestImputedRewardRange(unittest.TestCase):

    def test_range_comes_from_the_log(self):
        log = gen_deterministic_world(s=0.3, alpha=0.0, n=200, seed=1).log
        self.assertEqual(imputed_reward_range(log, ECConfig()), (-0.5, 0.5))

    def test_configured_values_win(self):
        log = gen_deterministic_world(s=0.3, alpha=0.0, n=200, seed=1).log
        self.assertEqual(imputed_reward_range(log, ECConfig(r_subopt=0.0)), (0.0, 0.5))

    def test_constant_rewards_fall_back_to_unit_range(self):
        log = BanditLog(np.zeros((3, 1)), [0, 1, 0], np.ones(3), num_actions=2)
        self.assertEqual(imputed_reward_range(log, ECConfig()), (0.0, 1.0))


class TestCostRouting(unittest.TestCase):
    """In the responder band a linear policy cannot match an accurate human."""

    def setUp(self):
        self.world = gen_responder_world(n=3000, seed=5, rho=0.9)
        self.propensity = fit_propensity(self.world.log, TrainConfig().propensity, seed=0)
        self.config = TrainConfig(method=EMethod.JC, learning_rate=0.05, max_epochs=300, patience=300)

    def human_share(self, cost: float) -> float:
        system = train_system(self.world.log, self.config, self.propensity, cost=CostFunction.constant(cost))
        return float(system.decide_batch(self.world.features)[0].mean())

    def test_free_humans_take_most_instances(self):
        self.assertGreater(self.human_share(0.0), 0.5)

    def test_expensive_humans_are_not_queried(self):
        self.assertLess(self.human_share(0.5), 0.1)


if __name__ == '__main__':
    unittest.main()
