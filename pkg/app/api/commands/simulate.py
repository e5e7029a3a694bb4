import argparse
import logging
import math
from pathlib import Path
from pydantic import ValidationError
from api.commands.common import (
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    CONSTRAINT_CHOICES,
    parse_count,
    run_config,
    write_record,
)
from api.deps.settings_dependency import get_workers
from exceptions.params_exceptions import ConstraintViolationException, InvalidParamsException
from services.bound_services import NUMERIC_ERRORS
from services.simulation_services import SimulationService, make_apsk_with_origin, make_psk

logger = logging.getLogger(__name__)

COLUMNS = ("family", "m", "constraint", "error_prob", "std_error", "trials", "errors", "seed")
FAMILIES = ("psk", "apsk", "search")


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("simulate", parents=[common], help="Monte-Carlo ML error of n=2 codes")
    parser.add_argument("--family", choices=FAMILIES, default="psk")
    parser.add_argument("--m", type=parse_count, required=True)
    parser.add_argument("--snr-db", type=float, required=True)
    parser.add_argument("--constraint", choices=CONSTRAINT_CHOICES, default="average")
    parser.add_argument("--trials", type=parse_count, default=1_000_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--budget", type=parse_count, default=200, help="iterations for --family search")
    parser.add_argument(
        "--search-trials", type=parse_count, default=100_000, help="trials per candidate during the search"
    )
    parser.add_argument("--save", help="write the simulated constellation to this file")
    parser.set_defaults(handler=simulate_command)


def simulate_command(args: argparse.Namespace, settings) -> int:
    service = SimulationService(settings)
    workers = get_workers(args.workers, settings)
    # unit noise variance per real dimension, so upsilon is the SNR
    upsilon = 10.0 ** (args.snr_db / 10.0)
    try:
        if args.family == "search":
            code, _ = service.apsk_search(
                args.m, upsilon, 1.0, args.constraint, args.budget, args.seed, args.search_trials, workers
            )
        elif args.family == "apsk":
            code = make_apsk_with_origin(args.m, upsilon, args.constraint)
        else:
            code = make_psk(args.m, upsilon)
        estimate = service.ml_error_mc(code, 1.0, args.trials, args.seed, workers)
    except (InvalidParamsException, ConstraintViolationException, ValidationError) as exc:
        logger.error(f"invalid parameters: {exc}")
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        logger.error(f"simulation failed: {type(exc).__name__}: {exc}")
        return EXIT_NUMERIC

    if args.save:
        Path(args.save).write_text(code.to_text(), encoding="utf-8")
        logger.info(f"constellation with {code.size} points saved to {args.save}")

    record = estimate.model_dump()
    record.update(family=args.family, m=args.m, constraint=code.constraint_kind)
    header = {"log10_error_prob": math.log10(estimate.error_prob) if estimate.errors else None}
    write_record(run_config(args, settings), COLUMNS, record, header=header, timestamp=not args.no_timestamp)
    return EXIT_OK
