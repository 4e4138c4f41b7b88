"""End-to-end experiment checks at full scale. Run with LCP_RUN_SLOW=1."""

import math
import unittest
from pathlib import Path

from src.enums.EMethod import EMethod
from src.enums.EWorld import ESweepAxis
from src.schemas.experiment import ExperimentConfig, ExperimentResult, SweepConfig
from src.services.config_service import ConfigService
from src.services.experiment_service import ExperimentService
from tests import slow

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def load(name: str) -> ExperimentConfig:
    return ConfigService().load_experiment_config(CONFIGS / name)


def by_method(result: ExperimentResult) -> dict:
    return {row.method: row for row in result.summary}


def pooled_stderr(a, b) -> float:
    return math.sqrt(a.stderr ** 2 + b.stderr ** 2)


def multilabel(methods, cost: float, accuracies=(1.0,), repetitions: int = 3) -> ExperimentConfig:
    return ExperimentConfig.model_validate({
        'name': "routing",
        'world': "multilabel",
        'world_params': {'n_train': 2000, 'dim': 10, 'n_labels': 6, 'num_workers': len(accuracies),
                         'worker_accuracies': list(accuracies)},
        'methods': methods,
        'repetitions': repetitions,
        'seed': 13,
        'train': {'learning_rate': 0.05, 'max_epochs': 300, 'patience': 30, 'cost': cost},
    })


class TestComplementarity(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.service = ExperimentService()

    @slow
    def test_expert_consistency_wins_on_the_deterministic_world(self):
        summary = by_method(self.service.run_experiment(load("deterministic.json"))[0])
        ec = summary['jc-ec']
        for other in ('human', 'ao', 'jc'):
            with self.subTest(other=other):
                self.assertGreater(ec.mean - summary[other].mean, 3 * pooled_stderr(ec, summary[other]))

    @slow
    def test_covariate_shift(self):
        mild, severe = self.service.run_experiment(load("covshift.json"))
        mild, severe = by_method(mild), by_method(severe)
        self.assertGreaterEqual(mild['jc'].mean, mild['ao'].mean)
        gap = severe['jc-od'].mean - severe['jc'].mean
        self.assertGreater(gap, pooled_stderr(severe['jc-od'], severe['jc']))

    @slow
    def test_joint_routing_keeps_up_with_two_stage(self):
        summary = by_method(self.service.run_experiment(load("responder.json"))[0])
        self.assertGreaterEqual(summary['jc'].mean, summary['ts'].mean - summary['ts'].stderr)

    @slow
    def test_expert_consistency_degrades_as_experts_err(self):
        config = load("deterministic.json").model_copy(update={
            'methods': [EMethod.JC_EC],
            'sweep': SweepConfig(axis=ESweepAxis.ALPHA, values=[0.0, 0.25, 0.5]),
        })
        values = [by_method(result)['jc-ec'] for result in self.service.run_experiment(config)]
        for lower, higher in zip(values, values[1:]):
            with self.subTest(alpha=higher):
                self.assertLessEqual(higher.mean, lower.mean + pooled_stderr(lower, higher))

    @slow
    def test_better_workers_are_queried_more(self):
        result = self.service.run_worker_protocol(load("workers.json"))
        self.assertEqual(len(result.workers), 500)
        self.assertGreater(result.spearman, 0.5)


class TestRoutingEconomics(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.service = ExperimentService()

    @slow
    def test_free_perfect_human_takes_almost_everything(self):
        summary = by_method(self.service.run_experiment(multilabel(["jc"], cost=0.0))[0])
        self.assertGreaterEqual(summary['jc'].mean_human_fraction, 0.9)

    @slow
    def test_human_priced_above_its_advantage_is_rarely_queried(self):
        summary = by_method(self.service.run_experiment(multilabel(["jc"], cost=1.0))[0])
        self.assertLessEqual(summary['jc'].mean_human_fraction, 0.1)

    @slow
    def test_personalized_router_prefers_the_perfect_human(self):
        result = self.service.run_experiment(multilabel(["jcp"], cost=0.0, accuracies=(1.0, 0.2)))[0]
        counts = [row.human_counts for row in result.rows if not row.failed]
        perfect = sum(c[0] for c in counts)
        self.assertGreaterEqual(perfect / max(1, sum(sum(c) for c in counts)), 0.9)


if __name__ == '__main__':
    unittest.main()
