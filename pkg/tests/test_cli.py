import json
import tempfile
import unittest
from pathlib import Path

import pandas as pd

from main import run

SMALL_TRAIN = {"learning_rate": 0.05, "max_epochs": 20, "patience": 5}


class TestCommandLine(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.base = Path(self.tmp.name)
        self.train_config = self.base / "train.json"
        self.train_config.write_text(json.dumps(SMALL_TRAIN))

    def tearDown(self):
        self.tmp.cleanup()

    def gen(self, world: str, params: str, name: str = "data") -> Path:
        out = self.base / name
        response = run(["gen-data", "--world", world, "--params", params, "--seed", "1", "--out", str(out)])
        self.assertTrue(response['success'], response['message'])
        return out

    def train(self, method: str, data: Path, name: str) -> dict:
        return run(["train", "--method", method, "--data", str(data), "--config", str(self.train_config),
                    "--out", str(self.base / name)])

    def test_generate_train_evaluate(self):
        data = self.gen("deterministic", "n_train=200,n_test=80,s=0.3")
        for name in ("train.csv", "test.csv", "humans.json", "test_policy_0.csv", "world.json"):
            self.assertTrue((data / name).is_file(), name)
        self.assertIn('in_S', pd.read_csv(data / "train.csv").columns)

        trained = self.train("jc", data, "system")
        self.assertTrue(trained['success'], trained['message'])
        self.assertTrue(0 < trained['data']['epochs'] <= 20)

        evaluated = run(["evaluate", "--system", str(self.base / "system"), "--test", str(data / "test.csv"),
                         "--hbm", str(data / "humans.json"), "--seed", "2"])
        self.assertTrue(evaluated['success'], evaluated['message'])
        self.assertEqual(evaluated['data']['n'], 80)
        # One counterfactual read per test instance
        self.assertEqual(evaluated['data']['counterfactual_reads'], 80)

    def test_tune_ood(self):
        data = self.gen("covshift", json.dumps({"mu": 3.0, "n_train": 200, "n_test": 50, "n_tune": 100}))
        self.assertTrue((data / "tune.csv").is_file())
        self.assertTrue(self.train("jc-od", data, "gated")['success'])
        tuned = run(["tune-ood", "--system", str(self.base / "gated"), "--tuning-data", str(data),
                     "--grid", "0.01,0.1,0.5", "--out", str(self.base / "tuned")])
        self.assertTrue(tuned['success'], tuned['message'])
        self.assertIn(tuned['data']['p'], (0.01, 0.1, 0.5))
        manifest = json.loads((self.base / "tuned" / "manifest.json").read_text())
        self.assertEqual(manifest['ood_tuning']['p'], tuned['data']['p'])

    def test_tune_ood_needs_a_detector(self):
        data = self.gen("covshift", "mu=1,n_train=100,n_test=20,n_tune=50")
        self.assertTrue(self.train("jc", data, "plain")['success'])
        response = run(["tune-ood", "--system", str(self.base / "plain"), "--tuning-data", str(data),
                        "--out", str(self.base / "tuned")])
        self.assertFalse(response['success'])

    def test_experiment_and_ttest(self):
        config = self.base / "experiment.json"
        config.write_text(json.dumps({
            "name": "cli", "world": "responder", "world_params": {"n_train": 100, "n_test": 50},
            "methods": ["human", "ao"], "repetitions": 2, "train": SMALL_TRAIN,
        }))
        response = run(["experiment", "--config", str(config), "--out", str(self.base / "results")])
        self.assertTrue(response['success'], response['message'])
        results = Path(response['data']['tables']['results'])
        self.assertEqual(list(pd.read_csv(results)['method']), ["human", "ao", "human", "ao"])

        ttest = run(["ttest", "--a", str(results), "--b", str(results), "--method-a", "human", "--method-b", "human"])
        self.assertTrue(ttest['success'], ttest['message'])
        self.assertFalse(ttest['data']['significant'])

    def test_failures_are_reported(self):
        bad = run(["gen-data", "--world", "deterministic", "--params", "s=1.5", "--out", str(self.base / "x")])
        self.assertFalse(bad['success'])
        data = self.gen("responder", "n_train=50,n_test=20")
        no_log = run(["train", "--method", "ao", "--data", str(data / "test.csv"), "--out", str(self.base / "s")])
        self.assertFalse(no_log['success'])
        missing = run(["ttest", "--a", str(self.base / "none.csv"), "--b", str(self.base / "none.csv")])
        self.assertFalse(missing['success'])
        with self.assertRaises(SystemExit):
            run(["train", "--method", "human", "--data", str(data), "--out", str(self.base / "s")])


if __name__ == '__main__':
    unittest.main()
