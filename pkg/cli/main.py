"""squeezesim command-line entry point.

Usage:
  python -m cli.main reproduce <figure-id> --config run.json [--out DIR] [--seed N] [--format csv,json,svg]
  python -m cli.main campaign  --config run.json ...
  python -m cli.main sweep     --config run.json ...
  python -m cli.main calibrate --config run.json ...

Exit codes:
  0: success
  2: configuration error (including bad command-line arguments)
  3: a numeric tolerance could not be reached
  4: postselection rejected every histogram

Optional env vars:
  SQUEEZESIM_OUTPUT_ROOT: root for run directories when neither --out nor output.directory is set
  SQUEEZESIM_LOG_LEVEL: default for --log-level (default: INFO)
  OTEL_ENABLED: "true" to enable OpenTelemetry tracing/metrics
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Optional

from cli import __version__
from cli.handlers.calibrate_handler import handle_calibrate
from cli.handlers.campaign_handler import handle_campaign
from cli.handlers.reproduce_handler import FIGURES, handle_reproduce
from cli.handlers.sweep_handler import handle_sweep
from core.config import default_log_level, default_output_root, load_config
from core.errors import SqueezeSimError
from core.reports import RunWriter
from core.schemas import RunConfig
from core.telemetry import (
    SERVICE_NAME, flush_telemetry, get_meter, init_telemetry,
    record_counter, stage_span,
)

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json", "svg")

Handler = Callable[[RunConfig, RunWriter, argparse.Namespace], Optional[dict]]

HANDLERS: dict[str, Handler] = {
    "reproduce": handle_reproduce,
    "campaign": handle_campaign,
    "sweep": handle_sweep,
    "calibrate": handle_calibrate,
}


# ── Argument parsing ─────────────────────────────────────────────────────────

def _formats(value: str) -> list[str]:
    chosen = [part.strip() for part in value.split(",") if part.strip()]
    unknown = [part for part in chosen if part not in FORMATS]
    if not chosen or unknown:
        raise argparse.ArgumentTypeError(f"formats must be a comma list of {','.join(FORMATS)}; got {value!r}")
    return chosen


def _seed(value: str) -> int:
    try:
        seed = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {value!r}") from None
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return seed


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--out", help="run directory (overrides output.directory)")
    common.add_argument("--seed", type=_seed, help="random seed (overrides output.seed)")
    common.add_argument("--format", type=_formats, dest="formats", help="comma list of csv,json,svg")
    common.add_argument("--log-level", default=default_log_level(),
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper)

    parser = argparse.ArgumentParser(prog="squeezesim", description="Squeezed resonance fluorescence simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    reproduce = commands.add_parser("reproduce", parents=[common], help="emit the data behind one figure")
    reproduce.add_argument("figure", choices=sorted(FIGURES))
    commands.add_parser("campaign", parents=[common], help="simulate, bin, postselect and estimate a campaign")
    commands.add_parser("sweep", parents=[common], help="ideal variance over the configured s and phi grids")
    commands.add_parser("calibrate", parents=[common], help="fit one imperfection width to a measured variance")
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.formats is not None:
        update["formats"] = args.formats
    if args.out is not None:
        update["directory"] = args.out
    if not update:
        return config
    return config.model_copy(update={"output": config.output.model_copy(update=update)})


def run_label(args: argparse.Namespace) -> str:
    return f"reproduce-{args.figure}" if args.command == "reproduce" else args.command


def _run_directory(config: RunConfig, args: argparse.Namespace) -> Path:
    if config.output.directory:
        return Path(config.output.directory)
    return default_output_root() / run_label(args)


# ── Entry point ──────────────────────────────────────────────────────────────

def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    init_telemetry(SERVICE_NAME, __version__)
    runs_counter = get_meter(__name__).create_counter("squeezesim.runs", description="CLI runs by outcome")

    label = run_label(args)
    status = "ok"
    try:
        config = _apply_overrides(load_config(args.config), args)
        writer = RunWriter(_run_directory(config, args), config.output.formats)
        with stage_span(args.command, run=label, seed=config.output.seed):
            extra = HANDLERS[args.command](config, writer, args)
        writer.manifest(config, label, config.output.seed, extra)
        logger.info("%s finished: %d files in %s", label, len(writer.files) + 1, writer.directory)
        return 0
    except SqueezeSimError as exc:
        status = type(exc).__name__
        logger.error("%s failed: %s", label, exc)
        return exc.exit_code
    finally:
        record_counter(runs_counter, 1, {"command": args.command, "status": status})
        flush_telemetry()


if __name__ == "__main__":
    sys.exit(main())
