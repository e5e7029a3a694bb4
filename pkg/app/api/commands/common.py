import argparse
import csv
import json
import logging
import math
import sys
from datetime import datetime, timezone
from typing import Any, Dict, Iterable, List, Optional, Sequence
import numpy as np
from api.deps.settings_dependency import get_workers
from core.config import VERSION
from schemas.models import RunConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

METHOD_ALIASES = {
    "auto": "auto",
    "exact": "exact",
    "sp-full": "saddlepoint-full",
    "sp-hat": "saddlepoint-hat",
    "vh": "verdu-han",
    "saddlepoint-full": "saddlepoint-full",
    "saddlepoint-hat": "saddlepoint-hat",
    "verdu-han": "verdu-han",
}
THETA_CHOICES = ("capacity", "exponent-asymptotic", "exponent-finite-n", "fixed")
CONSTRAINT_CHOICES = ("equal", "maximal", "average")


def parse_count(text: str) -> int:
    """Integer flag that also accepts float notation such as 1e7."""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text}")
    if not value.is_integer():
        raise argparse.ArgumentTypeError(f"not an integer: {text}")
    return int(value)


def parse_grid(text: str, integer: bool = True) -> List[float]:
    """Grid as `a:b:log[:k]`, `a:b:lin[:k]` or a comma list.

    Integer grids are rounded and de-duplicated; `lin` without k steps by one.
    """
    parts = text.split(":")
    try:
        if len(parts) == 1:
            values = [float(item) for item in text.split(",") if item.strip()]
        elif len(parts) in (3, 4) and parts[2] in ("log", "lin"):
            start, stop = float(parts[0]), float(parts[1])
            if parts[2] == "log":
                count = int(parts[3]) if len(parts) == 4 else 16
                values = list(np.geomspace(start, stop, count))
            elif len(parts) == 4:
                values = list(np.linspace(start, stop, int(parts[3])))
            else:
                values = list(np.arange(start, stop + 0.5, 1.0))
        else:
            raise ValueError(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid '{text}', expected a:b:log[:k], a:b:lin[:k] or a,b,c")
    if not values:
        raise argparse.ArgumentTypeError(f"empty grid '{text}'")
    if integer:
        return sorted({int(round(value)) for value in values})
    return [float(value) for value in values]


def add_query_arguments(parser: argparse.ArgumentParser, grid_n: bool = False) -> None:
    parser.add_argument("--constraint", choices=CONSTRAINT_CHOICES, default="maximal")
    if grid_n:
        parser.add_argument("--n", type=parse_grid, required=True, help="blocklength grid")
    else:
        parser.add_argument("--n", type=parse_count, required=True)
    size = parser.add_mutually_exclusive_group()
    size.add_argument("--m", type=float, help="number of codewords")
    size.add_argument("--rate-bits", type=float, help="rate in bits per channel use")
    parser.add_argument("--snr-db", type=float, required=True)
    parser.add_argument("--theta", choices=THETA_CHOICES, default="capacity", dest="theta_policy")
    parser.add_argument("--theta2", type=float, help="auxiliary variance for --theta fixed")
    parser.add_argument("--method", choices=sorted(METHOD_ALIASES), default="auto")


def run_config(args: argparse.Namespace, settings) -> RunConfig:
    options = {
        key: value
        for key, value in vars(args).items()
        if key not in ("handler", "output_format", "output_path", "no_timestamp")
    }
    return RunConfig(
        command=args.command,
        options=options,
        output_format=args.output_format,
        output_path=args.output_path,
        seed=getattr(args, "seed", None),
        workers=get_workers(args.workers, settings),
        version=VERSION,
    )


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (list, tuple)):
        return "; ".join(str(item) for item in value)
    return str(value)


def _json_value(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {key: _json_value(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_value(item) for item in value]
    return value


def _metadata(config: RunConfig, header: Optional[Dict[str, Any]], timestamp: bool) -> Dict[str, Any]:
    meta: Dict[str, Any] = {"version": config.version, "command": config.command, "config": config.model_dump()}
    if timestamp:
        meta["generated"] = datetime.now(timezone.utc).isoformat()
    if header:
        meta.update(header)
    return meta


def _open(config: RunConfig):
    if config.output_path:
        return open(config.output_path, "w", newline="", encoding="utf-8")
    return None


def write_table(
    config: RunConfig,
    columns: Sequence[str],
    rows: Iterable[Dict[str, Any]],
    header: Optional[Dict[str, Any]] = None,
    timestamp: bool = True,
) -> None:
    rows = list(rows)
    meta = _metadata(config, header, timestamp)
    handle = _open(config)
    stream = handle or sys.stdout
    try:
        if config.output_format == "json":
            payload = dict(meta, rows=[{column: row.get(column) for column in columns} for row in rows])
            json.dump(_json_value(payload), stream, indent=2)
            stream.write("\n")
            return
        for key, value in meta.items():
            text = json.dumps(_json_value(value), sort_keys=True) if isinstance(value, dict) else format_value(value)
            stream.write(f"# {key}: {text}\n")
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(column)) for column in columns])
    finally:
        if handle:
            handle.close()
            logger.info(f"wrote {len(rows)} row(s) to {config.output_path}")


def write_record(
    config: RunConfig,
    columns: Sequence[str],
    record: Dict[str, Any],
    header: Optional[Dict[str, Any]] = None,
    timestamp: bool = True,
) -> None:
    """A single result: flat JSON object, or a one-row CSV table."""
    if config.output_format == "csv":
        write_table(config, columns, [record], header, timestamp)
        return
    payload = dict(_metadata(config, header, timestamp), **{column: record.get(column) for column in columns})
    handle = _open(config)
    stream = handle or sys.stdout
    try:
        json.dump(_json_value(payload), stream, indent=2)
        stream.write("\n")
    finally:
        if handle:
            handle.close()


def log10_of(value: Optional[float]) -> Optional[float]:
    if value is None:
        return None
    return math.log10(value) if value > 0 else -math.inf
