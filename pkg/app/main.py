import argparse
import logging
import sys
from typing import List, Optional
from api.commands import bound, conepack, envelope, exponent, selftest, simulate, sweep
from api.commands.common import EXIT_USAGE
from api.deps.settings_dependency import get_settings
from core.config import VERSION

logger = logging.getLogger(__name__)

COMMANDS = (bound, sweep, envelope, exponent, conepack, simulate, selftest)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default="csv", dest="output_format")
    common.add_argument("--output", dest="output_path", help="write here instead of stdout")
    common.add_argument("--no-timestamp", action="store_true", help="omit the generation time from the header")
    common.add_argument("--workers", type=int, help="parallel processes, defaults to AWGN_FLB_WORKERS")

    parser = argparse.ArgumentParser(
        prog="awgn-flb", description="Finite-blocklength lower bounds on AWGN error probability"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers, common)
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    settings = get_settings()
    logging.basicConfig(level=settings.LOGGING_LEVEL)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.workers is not None and args.workers < 1:
        logger.error(f"--workers must be >= 1, got {args.workers}")
        return EXIT_USAGE
    logger.debug(f"running {args.command}")
    return args.handler(args, settings)


if __name__ == "__main__":
    sys.exit(run())
