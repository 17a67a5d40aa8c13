import numpy as np
import pytest

from rlensemble.series import CATS_BLOCKS, TimeSeries


def write_rows(path, rows):
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def cats_layout_series(values=None, seed=0):
    if values is None:
        values = 3.0 + np.random.default_rng(seed).normal(size=5000)
    return TimeSeries(values, 1, CATS_BLOCKS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, shown after the run whatever the capture mode
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
