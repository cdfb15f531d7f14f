"""Command-line pipeline driver.

Five subcommands compose into the full workflow:

    oifuse simulate          --config run.json [--seed N]
    oifuse build-climatology --config run.json
    oifuse fit-fusion        --config run.json
    oifuse filter            --config run.json
    oifuse evaluate          --config run.json

Every command reads one declarative JSON config; the few flags that exist
override their config counterparts. Progress and warnings go to stderr,
data goes to files only. Exit status is 0 on success, 2 for invalid input
or configuration, 1 for anything unexpected; failures also emit a one-line
JSON error report on stderr so wrappers can parse them.

Reruns with the same config and inputs are bit-identical, independent of
--threads: work is chunked the same way regardless of worker count and
merged in chunk order.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .errors import ConfigError, OifuseError
from .pipeline import (
    RunConfig,
    stage_build_climatology,
    stage_evaluate,
    stage_filter,
    stage_fit_fusion,
    stage_simulate,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_BAD_INPUT = 2


def _select_bands(cfg: RunConfig, requested: list[str] | None) -> list[str]:
    if not requested:
        return cfg.bands
    unknown = [b for b in requested if b not in cfg.bands]
    if unknown:
        raise ConfigError(f"--band {unknown} not in configured bands {cfg.bands}")
    return requested


def cmd_simulate(cfg: RunConfig, args: argparse.Namespace) -> None:
    stage_simulate(cfg, seed=args.seed)


def cmd_build_climatology(cfg: RunConfig, args: argparse.Namespace) -> None:
    stage_build_climatology(cfg, bands=_select_bands(cfg, args.band))


def cmd_fit_fusion(cfg: RunConfig, args: argparse.Namespace) -> None:
    stage_fit_fusion(cfg, bands=_select_bands(cfg, args.band))


def cmd_filter(cfg: RunConfig, args: argparse.Namespace) -> None:
    stage_filter(cfg, bands=_select_bands(cfg, args.band))


def cmd_evaluate(cfg: RunConfig, args: argparse.Namespace) -> None:
    stage_evaluate(cfg, bands=_select_bands(cfg, args.band))


_COMMANDS = {
    "simulate": cmd_simulate,
    "build-climatology": cmd_build_climatology,
    "fit-fusion": cmd_fit_fusion,
    "filter": cmd_filter,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oifuse",
        description="Optimal-interpolation fusion of coarse and fine reflectance series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "generate a synthetic site into the workspace"),
        ("build-climatology", "reduce the fine archive to monthly statistics"),
        ("fit-fusion", "fit per-pixel coarse-to-fine regressions"),
        ("filter", "produce filtered estimates for the target year"),
        ("evaluate", "leave-one-out validation and metrics tables"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the run's JSON config")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes (overrides config; output is identical)")
        p.add_argument("--out", default=None,
                       help="output root directory (overrides config)")
        p.add_argument("--band", action="append", default=None,
                       help="restrict to one band (repeatable)")
        if name == "simulate":
            p.add_argument("--seed", type=int, default=None,
                           help="generator seed (overrides config)")
    return parser


def _emit_error(exc: BaseException) -> None:
    report = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(report), file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_BAD_INPUT
    try:
        cfg = RunConfig.from_json(args.config)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError(f"--threads must be >= 1, got {args.threads}")
            cfg.threads = args.threads
        if args.out is not None:
            cfg.out_root = Path(args.out).resolve()
        _COMMANDS[args.command](cfg, args)
        return EXIT_OK
    except (OifuseError, FileNotFoundError, NotADirectoryError) as exc:
        _emit_error(exc)
        return EXIT_BAD_INPUT
    except Exception as exc:  # pragma: no cover - defensive catch-all
        log.exception("internal error")
        _emit_error(exc)
        return EXIT_INTERNAL


def run() -> None:
    sys.exit(main())
