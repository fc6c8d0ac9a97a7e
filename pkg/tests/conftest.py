"""Shared fixtures and the acceptance summary printed after the run."""

from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[1]

#: ``(criterion, passed, detail)`` lines recorded by the acceptance suite.
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def reference_cache():
    """Directory of cached mid-point reference states, kept between runs."""
    path = REPO / ".reference_cache"
    path.mkdir(exist_ok=True)
    return path


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
