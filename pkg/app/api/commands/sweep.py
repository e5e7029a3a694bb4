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
    parse_grid,
    run_config,
    write_table,
)
from api.deps.settings_dependency import get_workers
from exceptions.params_exceptions import InvalidParamsException
from schemas.models import BoundQuery
from services.bound_services import NUMERIC_ERRORS, BoundService

logger = logging.getLogger(__name__)

COLUMNS = ("n", "m", "rate_bits", "bound", "value", "log10_value", "method", "error")
MODES = {
    "error": "error_vs_n",
    "maxrate": "maxrate_vs_n",
    "error-vs-m": "error_vs_m",
    "mbar": "mbar_vs_n",
}


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("sweep", parents=[common], help="evaluate bounds over a grid")
    parser.add_argument("--mode", choices=sorted(MODES), default="error")
    add_query_arguments(parser, grid_n=True)
    parser.add_argument("--m-grid", type=lambda text: parse_grid(text, integer=False), help="M grid for error-vs-m")
    parser.add_argument("--eps", type=float, help="target error probability for maxrate")
    parser.set_defaults(handler=sweep_command)


def sweep_command(args: argparse.Namespace, settings) -> int:
    mode = MODES[args.mode]
    service = BoundService(settings)
    try:
        template, grid = _template_and_grid(args, mode)
        rows = service.sweep(mode, template, grid, args.eps, get_workers(args.workers, settings))
    except (InvalidParamsException, ValidationError) as exc:
        logger.error(f"invalid sweep parameters: {exc}")
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        logger.error(f"sweep failed: {type(exc).__name__}: {exc}")
        return EXIT_NUMERIC

    header = {"capacity_bits": 0.5 * math.log2(1.0 + template.upsilon)}
    if mode == "error_vs_m":
        try:
            theta2 = template.theta2 if template.theta_policy == "fixed" else template.upsilon + 1.0
            header["m_bar"] = service.envelope.m_bar(template.n, template.upsilon, 1.0, theta2).m_bar
        except NUMERIC_ERRORS as exc:
            logger.warning(f"M-bar for the header failed: {exc}")
    write_table(
        run_config(args, settings),
        COLUMNS,
        [row.model_dump() for row in rows],
        header=header,
        timestamp=not args.no_timestamp,
    )
    failed = sum(1 for row in rows if row.error)
    logger.info(f"sweep {mode}: {len(rows)} row(s), {failed} failed")
    return EXIT_OK


def _template_and_grid(args: argparse.Namespace, mode: str):
    grid = args.n
    first_n = int(grid[0])
    m = args.m
    rate_bits = args.rate_bits
    if mode == "error_vs_m":
        if not args.m_grid:
            raise InvalidParamsException("error-vs-m needs --m-grid")
        if len(args.n) != 1:
            raise InvalidParamsException("error-vs-m needs a single --n")
        grid = args.m_grid
        m, rate_bits = args.m_grid[0], None
    elif mode in ("maxrate_vs_n", "mbar_vs_n") and m is None and rate_bits is None:
        # the rate is solved for (or unused); the template only needs a placeholder
        rate_bits = 1.0
    template = BoundQuery(
        constraint=args.constraint,
        n=first_n,
        m=m,
        rate_bits=rate_bits,
        snr_db=args.snr_db,
        theta_policy=args.theta_policy,
        theta2=args.theta2,
        method=METHOD_ALIASES[args.method],
    )
    return template, grid
