import numpy as np
import pytest

from ctdnovelty.corpus import PaperRecord, build_index

# worked example over terms A-D
PAPER1 = np.array([
    [0, 1, 4, 5],
    [1, 0, 3, 4],
    [4, 3, 0, 1],
    [5, 4, 1, 0],
], dtype=float)
PAPER2 = np.full((4, 4), 3.0) - 3.0 * np.eye(4)
ABCD = ("A", "B", "C", "D")


def rec(pid, year, terms, **meta):
    return PaperRecord.make(pid, year, terms, **meta)


def random_symmetric(rng, n, low=0.0):
    a = 1.0 - rng.uniform(low, 1.0, size=(n, n))  # (0, 1]
    a = np.triu(a, 1)
    return a + a.T


@pytest.fixture
def worked_example():
    return PAPER1.copy(), PAPER2.copy()


@pytest.fixture
def small_index():
    return build_index([
        rec("h1", 2005, ["A", "B"]),
        rec("h2", 2006, ["A", "B", "C"]),
        rec("h3", 2007, ["D", "E"]),
        rec("f1", 2010, ["A", "C", "X"]),
    ])


# one verdict line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
