"""Shared fixtures: acceptance verdict collection and the on-disk dataset cache."""

import os
from pathlib import Path

import pytest

VERDICTS: list[str] = []


@pytest.fixture
def verdict(request, capsys):
    """``verdict(label, ok, detail)`` prints one PASS/FAIL line and records it for the summary."""

    def emit(label: str, ok: bool, detail: str) -> bool:
        line = f"{label}: {'PASS' if ok else 'FAIL'} | {detail}"
        VERDICTS.append(line)
        with capsys.disabled():
            print(f"\n    {line}")
        return ok

    return emit


@pytest.fixture(scope="session")
def cache_dir():
    path = Path(os.environ.get("QWADV_ACCEPTANCE_CACHE", Path(__file__).resolve().parent.parent / ".acceptance_cache"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(VERDICTS, key=_criterion_order):
        terminalreporter.write_line(line)


def _criterion_order(line: str):
    head = line.split(":", 1)[0].split()[-1]
    return int(head) if head.isdigit() else 99
