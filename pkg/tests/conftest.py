import os

# Fix the numba pool size before the first import so thread-count comparisons
# have workers to compare against.
os.environ.setdefault("NUMBA_NUM_THREADS", "4")

import numpy as np
import pytest

from heatstress.raster import Grid, LandCoverGrid
from heatstress.synthetic import synthetic_met_series


@pytest.fixture(scope="session")
def met_day():
    return synthetic_met_series()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def flat_scene(n=32, code=2, cellsize=1.0):
    return (Grid(np.zeros((n, n), np.float32), cellsize, units="m"),
            LandCoverGrid(np.full((n, n), code, np.int16), cellsize))


# acceptance verdicts, one line per criterion, echoed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
