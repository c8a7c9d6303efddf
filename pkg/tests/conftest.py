import numpy as np
import pytest

from rwurn.rng import stream

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return stream(12345, 0, 0)


def make_rng(seed, unit=0, sid=0):
    return stream(seed, unit, sid)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def assert_close(a, b, tol=1e-12):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)
    assert np.max(np.abs(a - b)) <= tol * scale, (a, b)
