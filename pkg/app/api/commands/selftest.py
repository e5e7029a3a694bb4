import argparse
import logging
from pathlib import Path
import pytest
from api.commands.common import EXIT_NUMERIC, EXIT_OK

logger = logging.getLogger(__name__)

TESTS_DIR = Path(__file__).resolve().parents[2] / "tests"


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("selftest", parents=[common], help="run the packaged test suites")
    parser.add_argument("--suite", choices=("quick", "full"), default="quick")
    parser.set_defaults(handler=selftest_command)


def selftest_command(args: argparse.Namespace, settings) -> int:
    options = [str(TESTS_DIR), "-q"]
    if args.suite == "quick":
        options += ["-m", "not slow"]
    logger.info(f"running the {args.suite} suite from {TESTS_DIR}")
    code = pytest.main(options)
    return EXIT_OK if code == pytest.ExitCode.OK else EXIT_NUMERIC
