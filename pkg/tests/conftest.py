import numpy as np
import pytest

from cahnstefan import PeriodicField, build_double_well

_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def dw():
    return build_double_well()


@pytest.fixture(scope="session")
def convex_sine():
    return PeriodicField.from_function(lambda x: 1.6 + 0.3 * np.sin(2 * np.pi * x))


@pytest.fixture
def verdict():
    """Record one pass/fail line per acceptance criterion, then assert it."""

    def record(label: str, ok: bool, detail: str = "") -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}" + (f": {detail}" if detail else "")
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
