from __future__ import annotations

import pytest

from helpers import run_pipeline, write_config


def _acceptance_lines(config) -> list[str]:
    if not hasattr(config, "_acceptance_lines"):
        config._acceptance_lines = []
    return config._acceptance_lines


@pytest.fixture
def acceptance_report(request):
    """Record one pass/fail line per acceptance criterion.

    The recorded lines are echoed in the terminal summary so the verdicts
    stay visible even when every test passes.
    """
    lines = _acceptance_lines(request.config)

    def record(criterion: int, ok: bool, detail: str) -> None:
        status = "PASS" if ok else "FAIL"
        lines.append(f"criterion {criterion}: {status} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def processed_workspace(tmp_path_factory):
    """A small fully processed workspace shared by read-only tests.

    Runs all five commands once on a 16x16 two-band site; tests that only
    inspect the outputs reuse it instead of regenerating their own.
    """
    root = tmp_path_factory.mktemp("shared_site")
    workspace = root / "workspace"
    out_root = root / "out"
    config = write_config(root, workspace, out_root)
    run_pipeline(config)
    return {"root": root, "workspace": workspace, "out": out_root, "config": config}
