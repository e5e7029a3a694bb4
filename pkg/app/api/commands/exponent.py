import argparse
import logging
import math
from api.commands.common import (
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    parse_grid,
    run_config,
    write_table,
)
from services.bound_services import NUMERIC_ERRORS
from services.saddlepoint_services import SaddlepointService

logger = logging.getLogger(__name__)

COLUMNS = ("rate_bits", "rate_nats", "esp", "s_star", "theta_tilde2", "augustin")


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("exponent", parents=[common], help="sphere-packing exponent over a rate grid")
    parser.add_argument("--snr-db", type=float, required=True)
    parser.add_argument(
        "--rates",
        type=lambda text: parse_grid(text, integer=False),
        default=None,
        help="rates in bits per channel use; defaults to 32 points up to capacity",
    )
    parser.add_argument("--sigma2", type=float, default=1.0)
    parser.set_defaults(handler=exponent_command)


def exponent_command(args: argparse.Namespace, settings) -> int:
    if args.sigma2 <= 0:
        logger.error(f"noise variance must be positive, got {args.sigma2}")
        return EXIT_USAGE
    upsilon = args.sigma2 * 10.0 ** (args.snr_db / 10.0)
    capacity_bits = 0.5 * math.log2(1.0 + upsilon / args.sigma2)
    rates_bits = args.rates or [capacity_bits * k / 32.0 for k in range(1, 33)]
    if any(rate <= 0 for rate in rates_bits):
        logger.error("rates must be positive")
        return EXIT_USAGE

    service = SaddlepointService(settings)
    try:
        reports = service.exponent_curve([rate * math.log(2.0) for rate in rates_bits], upsilon, args.sigma2)
    except NUMERIC_ERRORS as exc:
        logger.error(f"exponent evaluation failed: {type(exc).__name__}: {exc}")
        return EXIT_NUMERIC

    rows = [dict(report.model_dump(), rate_bits=rate) for rate, report in zip(rates_bits, reports)]
    header = {
        "capacity_bits": capacity_bits,
        "critical_rate_bits": reports[0].critical_rate_nats / math.log(2.0),
    }
    write_table(run_config(args, settings), COLUMNS, rows, header=header, timestamp=not args.no_timestamp)
    return EXIT_OK
