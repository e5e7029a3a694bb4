import argparse
import logging
import math
from pydantic import ValidationError
from api.commands.common import (
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    parse_count,
    run_config,
    write_record,
)
from exceptions.params_exceptions import InvalidParamsException
from schemas.models import BoundQuery
from services.bound_services import NUMERIC_ERRORS, BoundService

logger = logging.getLogger(__name__)

COLUMNS = (
    "bound_name",
    "constraint",
    "n",
    "m",
    "rate_bits",
    "snr_db",
    "value",
    "log10_value",
    "method_used",
    "warnings",
)


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("conepack", parents=[common], help="cone-packing lower bound")
    parser.add_argument("--n", type=parse_count, required=True)
    size = parser.add_mutually_exclusive_group(required=True)
    size.add_argument("--m", type=float)
    size.add_argument("--rate-bits", type=float)
    parser.add_argument("--snr-db", type=float, required=True)
    parser.add_argument("--maximal", action="store_true", help="extend to the maximal power constraint")
    parser.set_defaults(handler=conepack_command)


def conepack_command(args: argparse.Namespace, settings) -> int:
    service = BoundService(settings)
    try:
        query = BoundQuery(
            constraint="maximal" if args.maximal else "equal",
            n=args.n,
            m=args.m,
            rate_bits=args.rate_bits,
            snr_db=args.snr_db,
        )
        evaluate = service.cor1_maximal if args.maximal else service.cone_packing
        result = evaluate(query.n, None, query.upsilon, log_m=query.log_m)
    except (InvalidParamsException, ValidationError) as exc:
        logger.error(f"invalid parameters: {exc}")
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        logger.error(f"cone packing failed: {type(exc).__name__}: {exc}")
        return EXIT_NUMERIC

    record = result.model_dump()
    record.update(
        n=query.n,
        m=math.exp(query.log_m) if query.log_m < 709.0 else math.inf,
        rate_bits=query.log_m / (query.n * math.log(2.0)),
        snr_db=query.snr_db,
    )
    write_record(run_config(args, settings), COLUMNS, record, timestamp=not args.no_timestamp)
    return EXIT_OK
