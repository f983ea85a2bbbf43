"""Shared fixtures: code grids are slow to construct, so they are built
once into a cache directory next to the tests and reused across runs."""

from pathlib import Path

import pytest

from cvqkd.ldpc import build_codebook

CACHE_ROOT = Path(__file__).resolve().parent / ".codebook-cache"

_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Recorder for acceptance results: one pass/fail line per criterion."""
    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def unit_codebook_dir():
    """Small blocks, full order menu; quick enough for protocol tests."""
    path = CACHE_ROOT / "unit-n2000"
    build_codebook(path, orders=(32, 64, 128, 256),
                   rates=[r / 100 for r in range(50, 95, 2)],
                   n=2000, seed=b"unit-codebook")
    return str(path)


@pytest.fixture(scope="session")
def acceptance_codebook_dir():
    """Production-size blocks for the acceptance criteria."""
    path = CACHE_ROOT / "acceptance-n10000"
    build_codebook(path, orders=(64, 128, 256),
                   rates=[r / 100 for r in range(70, 93, 2)],
                   n=10_000, seed=b"acceptance-codebook")
    return str(path)
