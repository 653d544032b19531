import os
import sys

# lets test modules import the shared oracles
sys.path.insert(0, os.path.dirname(__file__))

import pytest

_verdicts = {}


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _verdicts[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_verdicts):
            terminalreporter.write_line(_verdicts[n])
