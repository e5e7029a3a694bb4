import argparse
import logging
import numpy as np
from pydantic import ValidationError
from api.commands.common import (
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    log10_of,
    parse_count,
    run_config,
    write_record,
    write_table,
)
from exceptions.params_exceptions import InvalidParamsException
from services.bound_services import NUMERIC_ERRORS
from services.envelope_services import EnvelopeService

logger = logging.getLogger(__name__)

TABLE_COLUMNS = (
    "gamma",
    "t0",
    "beta0",
    "log10_beta0",
    "bar_t_star",
    "bar_beta",
    "log10_bar_beta",
    "roots",
    "error",
)
POINT_COLUMNS = (
    "beta",
    "gamma",
    "value",
    "log10_value",
    "on_boundary_or_above",
    "t0",
    "gamma0",
    "beta0",
    "bar_t_star",
    "bar_beta",
    "lambda",
    "origin_mass",
    "shell_energy",
    "shell_mass",
    "warnings",
)


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser(
        "envelope", parents=[common], help="boundary table or envelope value for the average constraint"
    )
    parser.add_argument("--n", type=parse_count, required=True)
    parser.add_argument("--sigma2", type=float, default=1.0)
    parser.add_argument("--theta2", type=float, required=True)
    parser.add_argument("--grid", type=parse_count, default=200, help="number of gamma points")
    parser.add_argument("--gamma-max", type=float, default=4.0)
    parser.add_argument("--beta", type=float, help="evaluate the envelope at this beta instead of the table")
    parser.add_argument("--gamma", type=float, help="power level for --beta")
    parser.set_defaults(handler=envelope_command)


def envelope_command(args: argparse.Namespace, settings) -> int:
    service = EnvelopeService(settings)
    config = run_config(args, settings)
    if args.beta is None:
        if args.grid < 1 or args.gamma_max <= 0:
            logger.error("--grid must be >= 1 and --gamma-max positive")
            return EXIT_USAGE
        gammas = np.linspace(args.gamma_max / args.grid, args.gamma_max, args.grid)
        try:
            rows = service.boundary_table(args.n, args.sigma2, args.theta2, [float(g) for g in gammas])
        except (InvalidParamsException, ValidationError) as exc:
            logger.error(f"invalid parameters: {exc}")
            return EXIT_USAGE
        table = []
        for row in rows:
            record = {"gamma": row.gamma, "error": row.error}
            if row.boundary:
                record.update(row.boundary.model_dump())
                record["log10_beta0"] = log10_of(row.boundary.beta0)
                record["log10_bar_beta"] = log10_of(row.boundary.bar_beta)
            table.append(record)
        write_table(config, TABLE_COLUMNS, table, timestamp=not args.no_timestamp)
        return EXIT_OK

    if args.gamma is None:
        logger.error("--beta needs --gamma")
        return EXIT_USAGE
    try:
        solution = service.f_envelope(args.n, args.gamma, args.sigma2, args.theta2, args.beta)
        mixture = service.optimal_input(args.n, args.gamma, args.sigma2, args.theta2, args.beta)
    except (InvalidParamsException, ValidationError) as exc:
        logger.error(f"invalid parameters: {exc}")
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        logger.error(f"envelope evaluation failed: {type(exc).__name__}: {exc}")
        return EXIT_NUMERIC
    record = solution.model_dump(by_alias=True)
    record.update(mixture.model_dump())
    record.update(beta=args.beta, gamma=args.gamma, log10_value=log10_of(solution.value))
    write_record(config, POINT_COLUMNS, record, timestamp=not args.no_timestamp)
    return EXIT_OK
