"""Shared helpers for driving the command line and hashing outputs."""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

from oifuse import cli

DEFAULT_SYNTH = {
    "width": 16,
    "height": 16,
    "start_year": 2000,
    "archive_years": 4,
    "coarse_block": 4,
    "cloud_gap_fraction": 0.25,
    "seed": 7,
}


def write_config(
    directory: Path,
    workspace: Path,
    out_root: Path,
    *,
    synth: dict | None = None,
    name: str = "config.json",
    **overrides,
) -> Path:
    payload = {
        "workspace": str(workspace),
        "out": str(out_root),
        "archive_start": 2000,
        "archive_end": 2003,
        "target_year": 2004,
        "synth": dict(DEFAULT_SYNTH if synth is None else synth),
    }
    payload.update(overrides)
    path = directory / name
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def run_cli(*argv: str) -> int:
    """Invoke the CLI entry point in-process and return its exit code."""
    return cli.main(list(argv))


def run_pipeline(config: Path, *, threads: int = 1) -> None:
    t = str(threads)
    for command in (
        "simulate",
        "build-climatology",
        "fit-fusion",
        "filter",
        "evaluate",
    ):
        rc = run_cli(command, "--config", str(config), "--threads", t)
        assert rc == 0, f"{command} exited with {rc}"


def cli_subprocess_args(*argv: str) -> list[str]:
    return [sys.executable, "-m", "oifuse", *argv]


def hash_tree(root: Path, exclude: set[str] | None = None) -> dict[str, str]:
    """SHA-256 of every file under ``root``, keyed by relative path."""
    exclude = exclude or set()
    digests: dict[str, str] = {}
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(root).as_posix()
        if rel in exclude:
            continue
        digests[rel] = hashlib.sha256(path.read_bytes()).hexdigest()
    return digests
