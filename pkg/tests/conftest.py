import pytest

from xswap.graph import SwapDigraph

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def tri():
    return SwapDigraph.from_pairs(3, [(1, 2), (2, 3), (3, 1)])


@pytest.fixture
def k3():
    return SwapDigraph.from_pairs(3, [(u, v) for u in (1, 2, 3) for v in (1, 2, 3) if u != v])
