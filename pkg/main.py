"""Main entry point for the command-line interface."""

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from loguru import logger

from src.config.settings import get_config, init_config
from src.exceptions import ConfigError
from src.module import initialize_modules
from utils.logger_handler import LoggerHandler


def _parse_params(value: Optional[str]) -> dict:
    """World parameters as inline JSON, a JSON file, or comma-separated key=value pairs."""
    if not value:
        return {}
    if Path(value).is_file():
        value = Path(value).read_text(encoding='utf-8')
    if value.lstrip().startswith('{'):
        try:
            return json.loads(value)
        except json.JSONDecodeError as e:
            raise ConfigError(f"--params is not valid JSON: {e}")
    params = {}
    for pair in value.split(','):
        key, sep, raw = pair.partition('=')
        if not sep:
            raise ConfigError(f"Expected key=value in --params, got '{pair}'")
        try:
            params[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            params[key.strip()] = raw.strip()
    return params


def _parse_grid(value: Optional[str]) -> Optional[list[float]]:
    if value is None:
        return None
    try:
        return [float(p) for p in value.split(',') if p.strip()]
    except ValueError as e:
        raise ConfigError(f"--grid must be comma-separated numbers: {e}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcp-hai", description="Complementary human-AI policies from bandit logs")
    parser.add_argument("--workers", type=int, default=None, help="Processes for experiment repetitions")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="Generate a synthetic world")
    gen.add_argument("--world", required=True,
                     choices=["deterministic", "covshift", "multilabel", "responder", "workers"])
    gen.add_argument("--params", default=None, help="JSON, JSON file, or key=value,... world parameters")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--cost", type=float, default=0.0, help="Per-decision human cost")
    gen.add_argument("--out", required=True)

    train = commands.add_parser("train", help="Train a system on a logged dataset")
    train.add_argument("--method", required=True,
                       choices=["ao", "ts", "jc", "jcp", "ao-ec", "ts-ec", "jc-ec", "jc-od"])
    train.add_argument("--data", required=True, help="Dataset file or gen-data directory")
    train.add_argument("--config", default=None, help="Train config JSON")
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--out", required=True)

    tune = commands.add_parser("tune-ood", help="Tune the OOD contamination of a jc-od system")
    tune.add_argument("--system", required=True)
    tune.add_argument("--tuning-data", required=True)
    tune.add_argument("--grid", default=None, help="Comma-separated contaminations")
    tune.add_argument("--config", default=None)
    tune.add_argument("--out", required=True)

    evaluate = commands.add_parser("evaluate", help="Total test reward of a saved system")
    evaluate.add_argument("--system", required=True)
    evaluate.add_argument("--test", required=True)
    evaluate.add_argument("--hbm", required=True, help="Pool JSON or annotation CSV")
    evaluate.add_argument("--seed", type=int, default=0)

    experiment = commands.add_parser("experiment", help="Run a full experiment")
    experiment.add_argument("--config", required=True)
    experiment.add_argument("--out", default=None, help="Output directory (LCP_OUTPUT_DIR/<config name> when omitted)")
    experiment.add_argument("--protocol", choices=["methods", "workers"], default="methods")

    ttest = commands.add_parser("ttest", help="Welch t-test between two reward files")
    ttest.add_argument("--a", required=True)
    ttest.add_argument("--b", required=True)
    ttest.add_argument("--method-a", default=None)
    ttest.add_argument("--method-b", default=None)
    return parser


def run(argv: Optional[list[str]] = None) -> dict:
    """Dispatch one command and return the controller's response dict."""
    args = build_parser().parse_args(argv)
    data_controller, train_controller, evaluate_controller, experiment_controller = initialize_modules(
        workers=args.workers)

    try:
        if args.command == "gen-data":
            return data_controller.generate(args.world, _parse_params(args.params), args.seed, args.out, args.cost)
        if args.command == "tune-ood":
            return train_controller.tune_ood(args.system, args.tuning_data, _parse_grid(args.grid), args.out,
                                             args.config)
    except ConfigError as e:
        logger.error(str(e))
        return {'success': False, 'message': str(e), 'data': None}

    if args.command == "train":
        return train_controller.train(args.method, args.data, args.config, args.out, args.seed)
    if args.command == "evaluate":
        return evaluate_controller.evaluate(args.system, args.test, args.hbm, args.seed)
    if args.command == "experiment":
        out = args.out or Path(get_config().output_dir) / Path(args.config).stem
        return experiment_controller.run(args.config, out, args.protocol)
    return experiment_controller.ttest(args.a, args.b, args.method_a, args.method_b)


def main():
    """Application entry point."""
    config = init_config()
    logger_handler = LoggerHandler(config.log_level, config.log_file)
    logger_handler.start()
    try:
        response = run()
        if response.get('data') is not None:
            sys.stdout.write(json.dumps(response['data'], indent=2, default=str) + "\n")
    finally:
        logger_handler.stop()
    sys.exit(0 if response.get('success') else 1)


if __name__ == '__main__':
    main()
