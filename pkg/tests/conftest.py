import numpy as np
import pytest

from orthocal import DEFAULT_GEOMETRY, ParameterDeviation

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def geom():
    return DEFAULT_GEOMETRY


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_dev(rng, scale=1.0):
    return ParameterDeviation.from_vector(rng.uniform(-scale, scale, 6))


@pytest.fixture
def acceptance():
    """Record one pass/fail line per criterion, shown in the terminal summary."""

    def record(number, name, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append(f"[criterion {number}] {status}  {name}  {detail}".rstrip())
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
