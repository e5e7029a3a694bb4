import argparse
import logging
import math
from pydantic import ValidationError
from api.commands.common import (
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    METHOD_ALIASES,
    add_query_arguments,
    run_config,
    write_record,
)
from exceptions.bound_exceptions import BoundEvaluationException
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
    "s_star",
    "t_star",
    "theta2_used",
    "warnings",
)
TRANSFORMS = {
    "eq16": "equal_to_maximal_eq16",
    "lemma1": "equal_to_maximal_lemma1",
    "maximal-to-average": "maximal_to_average",
}


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("bound", parents=[common], help="evaluate one lower bound")
    add_query_arguments(parser)
    parser.add_argument(
        "--transform",
        choices=sorted(TRANSFORMS),
        help="evaluate through a constraint transform of the hypothesis-testing bound",
    )
    parser.add_argument("--split", type=float, help="fixed split s in (1/M, 1) for maximal-to-average")
    parser.set_defaults(handler=bound_command)


def build_query(args: argparse.Namespace) -> BoundQuery:
    return BoundQuery(
        constraint=args.constraint,
        n=args.n,
        m=args.m,
        rate_bits=args.rate_bits,
        snr_db=args.snr_db,
        theta_policy=args.theta_policy,
        theta2=args.theta2,
        method=METHOD_ALIASES[args.method],
    )


def bound_command(args: argparse.Namespace, settings) -> int:
    service = BoundService(settings)
    try:
        query = build_query(args)
        if args.transform:
            base_constraint = "maximal" if args.transform == "maximal-to-average" else "equal"
            template = query.model_copy(update={"constraint": base_constraint})
            result = service.lemma1_transform(
                TRANSFORMS[args.transform],
                service.metaconverse_evaluator(template),
                query.n,
                None,
                query.upsilon,
                args.split,
                log_m=query.log_m,
            )
        else:
            result = service.compute_bound(query)
    except (InvalidParamsException, ValidationError) as exc:
        logger.error(f"invalid parameters: {exc}")
        return EXIT_USAGE
    except BoundEvaluationException as exc:
        logger.error(f"bound evaluation failed for {exc.query}: {exc}")
        return EXIT_NUMERIC
    except NUMERIC_ERRORS as exc:
        logger.error(f"bound evaluation failed: {type(exc).__name__}: {exc}")
        return EXIT_NUMERIC

    record = result.model_dump()
    record.update(
        constraint=result.constraint or query.constraint,
        n=query.n,
        m=math.exp(query.log_m) if query.log_m < 709.0 else math.inf,
        rate_bits=query.log_m / (query.n * math.log(2.0)),
        snr_db=query.snr_db,
    )
    write_record(run_config(args, settings), COLUMNS, record, timestamp=not args.no_timestamp)
    return EXIT_OK
